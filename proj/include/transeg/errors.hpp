#pragma once

#include <stdexcept>
#include <string>

namespace transeg {

/// Invalid hyperparameters, presets, or mismatched configuration pieces.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Tensor shapes that violate an operation's contract.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent dataset files.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Loss became NaN/Inf during training.
struct NonFiniteLossError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CheckpointError : std::runtime_error {
    enum class Kind { version, corrupt, io, incompatible };
    CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind(kind) {}
    Kind kind;
};

}  // namespace transeg
