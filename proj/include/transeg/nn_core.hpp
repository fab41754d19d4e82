#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace transeg::nn {

using Size2 = std::array<std::int64_t, 2>;

enum class NormKind { none, instance, layer, adaptive };

/// Per-channel affine applied after normalization. Tensors are (C) or (B, C).
struct AffineParams {
    torch::Tensor scale;
    torch::Tensor shift;
};

/// One (scale, shift) pair per adaptively normalized decoder layer.
using NormParams = std::vector<AffineParams>;

/// Replaces a block's own normalization: which statistics to use and the affine to apply.
struct NormOverride {
    NormKind stats = NormKind::instance;
    AffineParams affine;
};

constexpr double kNormEps = 1e-5;
constexpr double kSigmaFloor = 1e-12;

/// Per-sample, per-channel normalization over (H, W). No affine.
torch::Tensor instance_norm(const torch::Tensor& x, double eps = kNormEps);

/// Per-sample normalization over (C, H, W). No affine.
torch::Tensor layer_norm(const torch::Tensor& x, double eps = kNormEps);

torch::Tensor apply_affine(const torch::Tensor& x, const AffineParams& p);

/// 2x nearest upsampling by repeating rows and columns, optionally cropped
/// (bottom/right) to `target` so odd encoder sizes are matched exactly.
torch::Tensor upsample_repeat(const torch::Tensor& x, std::optional<Size2> target = std::nullopt);

/// Reflection padding that makes a convolution produce in (stride 1) or
/// ceil(in / 2) (stride 2, odd kernel) spatial outputs.
std::array<std::int64_t, 4> same_padding(std::int64_t kernel, std::int64_t stride);

// ---------------------------------------------------------------------------
// Spectral normalization
// ---------------------------------------------------------------------------

/// Power-iteration vectors for one weight, u in R^out and v in R^(in*k*k).
struct SpectralState {
    torch::Tensor u;
    torch::Tensor v;
};

/// Random unit u and matching v for a weight viewed as (out, rest).
SpectralState make_spectral_state(const torch::Tensor& weight);

/// Runs `n_iters` power iterations on the (out, rest) view of `weight`,
/// updating `state` in place, and returns weight / sigma with
/// sigma = u^T W v (differentiable in W, clamped below by kSigmaFloor).
torch::Tensor spectral_normalize(const torch::Tensor& weight, SpectralState& state, int n_iters);

/// Implemented by every layer whose weight is spectrally normalized.
class SpectralLayer {
public:
    virtual ~SpectralLayer() = default;
    virtual void power_iteration(int n_iters) = 0;
    virtual void set_spectral(bool enabled) = 0;
};

/// Advances the power iteration of every spectral layer inside `module`.
void advance_spectral_norm(torch::nn::Module& module, int n_iters = 1);

/// Kaiming-normal (fan-in, ReLU gain) init of every conv/linear weight, zero
/// biases, then one power iteration so spectral vectors match the new weights.
void kaiming_init(torch::nn::Module& module);

enum class PadMode { reflect, zeros };

struct ConvOptions {
    std::int64_t in_channels = 1;
    std::int64_t out_channels = 1;
    std::int64_t kernel = 3;
    std::int64_t stride = 1;
    bool bias = true;
    bool spectral = true;
    PadMode pad = PadMode::reflect;
};

/// Convolution with same-style padding and an optionally spectral-normalized weight.
class SNConv2dImpl : public torch::nn::Module, public SpectralLayer {
public:
    explicit SNConv2dImpl(const ConvOptions& opts);

    torch::Tensor forward(const torch::Tensor& x);
    torch::Tensor effective_weight();

    void power_iteration(int n_iters) override;
    void set_spectral(bool enabled) override { opts_.spectral = enabled; }
    const ConvOptions& options() const { return opts_; }

    torch::Tensor weight;
    torch::Tensor bias;

private:
    ConvOptions opts_;
    SpectralState state_;
};
TORCH_MODULE(SNConv2d);

class SNLinearImpl : public torch::nn::Module, public SpectralLayer {
public:
    SNLinearImpl(std::int64_t in_features, std::int64_t out_features, bool spectral = true);

    torch::Tensor forward(const torch::Tensor& x);
    void power_iteration(int n_iters) override;
    void set_spectral(bool enabled) override { spectral_ = enabled; }

    torch::Tensor weight;
    torch::Tensor bias;

private:
    bool spectral_;
    SpectralState state_;
};
TORCH_MODULE(SNLinear);

/// Instance / layer normalization with optional learned per-channel affine.
class NormLayerImpl : public torch::nn::Module {
public:
    NormLayerImpl(NormKind kind, std::int64_t channels, bool affine);

    /// `override` replaces both statistics kind and affine; required for adaptive layers.
    torch::Tensor forward(const torch::Tensor& x, const NormOverride* override = nullptr);

    NormKind kind() const { return kind_; }
    std::int64_t channels() const { return channels_; }

    torch::Tensor gamma;
    torch::Tensor beta;

private:
    NormKind kind_;
    std::int64_t channels_;
};
TORCH_MODULE(NormLayer);

/// Compressed long skip: 1x1 conv of encoder features to one map,
/// instance-normalized, concatenated after the decoder features.
class SkipCompressorImpl : public torch::nn::Module {
public:
    SkipCompressorImpl(std::int64_t enc_channels, int level, bool spectral = true);

    torch::Tensor forward(const torch::Tensor& enc_features, const torch::Tensor& dec_features);

    int level() const { return level_; }

private:
    SNConv2d compress_{nullptr};
    int level_;
};
TORCH_MODULE(SkipCompressor);

struct ConvBlockConfig {
    std::int64_t in_channels = 1;
    std::int64_t out_channels = 1;
    std::int64_t kernel = 3;
    std::int64_t stride = 1;
    bool upsample = false;
    bool short_skip = true;
    NormKind norm_kind = NormKind::instance;
    /// Encoder channel count of a compressed long skip entering this block (0 = none).
    std::int64_t long_skip_channels = 0;
    int long_skip_level = 0;
    bool spectral = true;
};

/// norm -> ReLU -> [long-skip concat] -> [2x upsample] -> reflection-padded conv,
/// plus an additive short skip from the input.
class ConvBlockImpl : public torch::nn::Module {
public:
    explicit ConvBlockImpl(const ConvBlockConfig& cfg);

    /// `enc_skip` must be given iff the block was configured with a long skip.
    /// `target` crops the upsampled map; defaults to exactly 2x.
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor* enc_skip = nullptr,
                          std::optional<Size2> target = std::nullopt,
                          const NormOverride* norm_override = nullptr);

    const ConvBlockConfig& config() const { return cfg_; }
    NormLayer norm() const { return norm_; }
    SNConv2d conv() const { return conv_; }

private:
    ConvBlockConfig cfg_;
    NormLayer norm_{nullptr};
    SNConv2d conv_{nullptr};
    SNConv2d projection_{nullptr};
    SkipCompressor skip_{nullptr};
};
TORCH_MODULE(ConvBlock);

/// Maps pooled (common, unique) codes to per-layer adaptive normalization parameters.
class NormParamMLPImpl : public torch::nn::Module {
public:
    NormParamMLPImpl(std::int64_t common_channels, std::int64_t unique_channels,
                     std::vector<std::int64_t> layer_channels, std::int64_t hidden = 256,
                     int n_layers = 4, bool spectral = true);

    NormParams forward(const torch::Tensor& common, const torch::Tensor& unique);

    const std::vector<std::int64_t>& layer_channels() const { return layer_channels_; }

private:
    std::int64_t in_features_;
    std::vector<std::int64_t> layer_channels_;
    torch::nn::ModuleList hidden_;
    SNLinear head_{nullptr};
};
TORCH_MODULE(NormParamMLP);

/// FNV-1a over the raw bytes of every tensor, in order.
std::uint64_t parameter_checksum(const std::vector<torch::Tensor>& params);

std::int64_t parameter_count(const std::vector<torch::Tensor>& params);

}  // namespace transeg::nn
