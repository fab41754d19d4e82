#pragma once

#include "transeg/data/augment.hpp"
#include "transeg/translation_graph.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace transeg::harness {

/// Environment variable that replaces `output_dir` when set.
inline constexpr const char* kOutputRootEnv = "TRANSEG_OUTPUT_ROOT";

/// Everything that determines a run. Loaded from JSON; absent keys take the
/// defaults below, and absent loss weights take the variant's defaults.
struct ExperimentConfig {
    std::string name = "experiment";
    VariantKind variant = VariantKind::proposed;
    std::string preset = "mnist48";
    losses::LossWeights weights = losses::LossWeights::proposed();
    OptimizerConfig optimizer;

    /// Dataset manifest; relative paths resolve against the config file.
    std::filesystem::path manifest;
    int epochs = 300;
    int batch_size = 20;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    bool augmentation = false;
    data::AugmentConfig augment;

    std::filesystem::path output_dir = "runs";
    /// Periodic checkpoint interval in epochs; 0 keeps only best and last.
    int checkpoint_every = 0;
    double threshold = 0.5;
    /// Caps steps per epoch (0 = ceil(|train P| / batch_size)).
    int max_steps_per_epoch = 0;
    /// Caps validation images per epoch (0 = whole fold).
    int valid_limit = 0;
    /// Samples per panel emitted after training (0 = none).
    int panel_samples = 8;

    static ExperimentConfig defaults_for(VariantKind variant);
    static ExperimentConfig from_json(const nlohmann::json& j,
                                      const std::filesystem::path& base_dir = {});
    static ExperimentConfig load(const std::filesystem::path& path);
    nlohmann::json to_json() const;

    /// Throws ConfigError; with `check_paths`, the manifest must exist.
    void validate(bool check_paths = true) const;

    /// output_dir, or the environment override, joined with name.
    std::filesystem::path run_root() const;
};

losses::LossWeights default_weights(VariantKind variant);

/// FNV-1a over the canonical JSON dump, hex encoded.
std::string config_hash(const ExperimentConfig& cfg);
std::string file_hash(const std::filesystem::path& path);

}  // namespace transeg::harness
