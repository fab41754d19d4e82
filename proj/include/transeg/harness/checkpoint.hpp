#pragma once

#include "transeg/translation_graph.hpp"

#include <filesystem>
#include <string>

namespace transeg::harness {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Bookkeeping stored next to the weights.
struct CheckpointMeta {
    std::string preset;
    std::string variant;
    /// Last completed epoch.
    std::int64_t epoch = 0;
    std::int64_t step = 0;
    double best_valid_dice = -1.0;
    std::int64_t best_epoch = -1;
    std::string config_json;
    std::string config_hash;
    std::string dataset_hash;
};

/// File layout: 8-byte magic, u32 version, u64 payload length, u32 CRC-32 of
/// the payload, then a torch archive holding the networks (weights and
/// spectral-norm vectors), both optimizers, the sampling generator and the meta.
void save_checkpoint(const std::filesystem::path& path, TrainingState& state, const CheckpointMeta& meta);

/// Validates the whole file and a dry-run load before touching `state`.
/// Errors: CheckpointError of kind io, version, corrupt or incompatible.
CheckpointMeta load_checkpoint(const std::filesystem::path& path, TrainingState& state);

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);

/// Rebuilds the model a checkpoint was written for and loads its weights.
SegTransModel load_model(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

}  // namespace transeg::harness
