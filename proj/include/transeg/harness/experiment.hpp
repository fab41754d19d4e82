#pragma once

#include "transeg/harness/checkpoint.hpp"
#include "transeg/harness/config.hpp"
#include "transeg/harness/dataset.hpp"
#include "transeg/harness/evaluate.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>

namespace transeg::harness {

/// Training-set index lists for one run.
struct TrainPools {
    std::vector<std::size_t> presence;
    std::vector<std::size_t> absence;
    /// Labeled subset of `presence`.
    std::vector<std::size_t> labeled;
};

TrainPools train_pools(const ExampleStore& store);

/// Record indices of one step's P and A batches.
///
/// P follows a per-epoch permutation (wrapping to fill the last batch); A
/// walks its own permutation stream independently of epochs. When labeled
/// examples exist and none were drawn, the last P slot is replaced by a
/// uniformly drawn labeled example. Pure in (pools, seed, epoch, step).
struct BatchPlan {
    std::vector<std::size_t> presence;
    std::vector<std::size_t> absence;
};
BatchPlan plan_batch(const TrainPools& pools, std::uint64_t seed, int epoch, int step, int batch_size,
                     int steps_per_epoch);

int steps_per_epoch(const ExperimentConfig& cfg, std::size_t n_presence);

/// Loads a planned batch, applying augmentation when enabled.
TrainingBatch materialize_batch(const ExampleStore& store, const TrainPools& pools, const BatchPlan& plan,
                                const ExperimentConfig& cfg, std::uint64_t seed, int epoch, int step);

struct SeedResult {
    std::uint64_t seed = 0;
    int epochs_run = 0;
    int best_epoch = -1;
    std::optional<EvalResult> best_valid;
    EvalResult test;
    std::vector<std::string> warnings;

    nlohmann::json to_json() const;
    static SeedResult from_json(const nlohmann::json& j);
};

/// Trains one seed under `run_root/seed_<seed>/`, writing metrics.jsonl (one
/// line per epoch, epoch 0 being the untrained model), timing.jsonl,
/// best.ckpt, last.ckpt, panels and result.json.
SeedResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                    const std::optional<std::filesystem::path>& resume = std::nullopt);

/// Mean and standard deviation of test Dice across seeds plus parameter counts.
nlohmann::json aggregate_report(const ExperimentConfig& cfg, const std::vector<SeedResult>& results);
std::string render_report_table(const nlohmann::json& report);
void write_report(const ExperimentConfig& cfg, const nlohmann::json& report);

/// All seeds in sequence, then report.json and report.txt in the run root.
nlohmann::json run_experiment(const ExperimentConfig& cfg);

/// Parameter counts of the generator side and the discriminators.
nlohmann::json parameter_report(const ArchitecturePreset& preset, VariantKind kind);

}  // namespace transeg::harness
