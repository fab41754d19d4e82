#pragma once

#include "transeg/nn_core.hpp"

#include <string>
#include <vector>

namespace transeg {

enum class Domain { A, P };

enum class SegNormMode { adaptive_from_mlp, separate_layer_params };

/// Layer widths and kernels of every network for one task family.
///
/// `encoder_channels[0]` is the plain input convolution; each further entry is a
/// stride-2 conv block. `decoder_channels[0]` is the decoder's input convolution
/// (which also upsamples); each further entry is an upsampling conv block fed by
/// one compressed long skip. The last encoder width is the latent width, of
/// which `unique_channels` form the unique code.
struct ArchitecturePreset {
    std::string name;
    std::int64_t image_channels = 1;
    std::int64_t height = 48;
    std::int64_t width = 48;

    std::vector<std::int64_t> encoder_channels;
    std::int64_t encoder_kernel = 3;
    std::vector<std::int64_t> decoder_channels;
    std::int64_t decoder_kernel = 3;
    std::int64_t residual_kernel = 5;
    std::int64_t unique_channels = 128;

    std::vector<std::int64_t> discriminator_channels;
    std::int64_t discriminator_kernel = 4;
    int discriminator_scales = 3;

    std::int64_t mlp_hidden = 256;
    int mlp_layers = 4;
    SegNormMode seg_norm_mode = SegNormMode::adaptive_from_mlp;

    bool spectral = true;
    /// Spectral norm on the norm-parameter MLP. Off: normalizing all five
    /// layers shrinks the generated scales to ~1e-2 at initialization.
    bool mlp_spectral = false;

    std::int64_t latent_channels() const { return encoder_channels.back(); }
    std::int64_t common_channels() const { return latent_channels() - unique_channels; }
    int downsamples() const { return static_cast<int>(encoder_channels.size()) - 1; }
    /// Spatial size at each encoder level, level 0 = input; ceil-halved.
    std::vector<nn::Size2> level_sizes() const;
    /// Channel counts of the decoder's normalized layers (seg-norm targets).
    std::vector<std::int64_t> decoder_norm_channels() const;

    void validate() const;

    static ArchitecturePreset mnist48();
    static ArchitecturePreset mnist128();
    static ArchitecturePreset brats();
    static ArchitecturePreset by_name(const std::string& name);
};

struct LatentPair {
    torch::Tensor common;
    torch::Tensor unique;
};

/// Encoder features at levels 1..n-1, ordered from highest to lowest resolution.
using SkipStack = std::vector<torch::Tensor>;

struct Encoded {
    LatentPair latent;
    SkipStack skips;
    /// Bottleneck output before the channel split.
    torch::Tensor raw;
};

class EncoderImpl : public torch::nn::Module {
public:
    explicit EncoderImpl(const ArchitecturePreset& preset);

    Encoded forward(const torch::Tensor& x);

private:
    ArchitecturePreset preset_;
    nn::SNConv2d input_conv_{nullptr};
    torch::nn::ModuleList blocks_;
    nn::NormLayer out_norm_{nullptr};
};
TORCH_MODULE(Encoder);

struct DecoderSpec {
    std::int64_t in_channels = 0;
    std::int64_t kernel = 3;
    bool short_skips = true;
    bool long_skips = true;
    /// Appends a 1x1 classification layer usable through segment().
    bool classifier = false;
};

/// Segmentation-path normalization parameters for the shared residual decoder.
class SegNormStateImpl : public torch::nn::Module {
public:
    SegNormStateImpl(SegNormMode mode, std::vector<std::int64_t> layer_channels,
                     std::int64_t common_channels, std::int64_t unique_channels,
                     std::int64_t mlp_hidden, int mlp_layers, bool spectral);

    SegNormMode mode() const { return mode_; }
    /// Instance statistics for adaptive mode, layer statistics for separate mode.
    nn::NormKind stats() const;
    nn::NormParams params(const torch::Tensor& common, const torch::Tensor& unique);
    const std::vector<std::int64_t>& layer_channels() const { return layer_channels_; }

private:
    SegNormMode mode_;
    std::vector<std::int64_t> layer_channels_;
    nn::NormParamMLP mlp_{nullptr};
    std::vector<torch::Tensor> scales_;
    std::vector<torch::Tensor> shifts_;
};
TORCH_MODULE(SegNormState);

/// Upsampling decoder shared by the common, residual and baseline decoders.
class DecoderImpl : public torch::nn::Module {
public:
    DecoderImpl(const ArchitecturePreset& preset, const DecoderSpec& spec);

    /// Image-space output with preset image channels, no output nonlinearity.
    torch::Tensor forward(const torch::Tensor& code, const SkipStack* skips = nullptr);

    /// All but the last layer, then norm + ReLU + classifier + sigmoid.
    /// `overrides` (one per normalized layer) replace the decoder's own norms.
    torch::Tensor segment(const torch::Tensor& code, const SkipStack* skips,
                          const std::vector<nn::NormOverride>* overrides = nullptr);

    const DecoderSpec& spec() const { return spec_; }
    std::vector<std::int64_t> norm_channels() const;

    /// Parameters used only by segment() (the classifier).
    std::vector<torch::Tensor> classifier_parameters() const;

private:
    torch::Tensor trunk(const torch::Tensor& code, const SkipStack* skips,
                        const std::vector<nn::NormOverride>* overrides);

    ArchitecturePreset preset_;
    DecoderSpec spec_;
    std::vector<nn::Size2> sizes_;
    nn::SNConv2d input_conv_{nullptr};
    torch::nn::ModuleList blocks_;
    nn::NormLayer out_norm_{nullptr};
    nn::SNConv2d out_conv_{nullptr};
    nn::SNConv2d classifier_{nullptr};
};
TORCH_MODULE(Decoder);

/// One discriminator scale: conv, then (norm, leaky ReLU, stride-2 conv) stages, then a 1x1 conv.
class PatchDiscriminatorImpl : public torch::nn::Module {
public:
    explicit PatchDiscriminatorImpl(const ArchitecturePreset& preset);
    torch::Tensor forward(const torch::Tensor& x);

private:
    nn::SNConv2d input_conv_{nullptr};
    torch::nn::ModuleList norms_;
    torch::nn::ModuleList convs_;
    nn::SNConv2d out_conv_{nullptr};
};
TORCH_MODULE(PatchDiscriminator);

/// Separate patch discriminators at full, 1/2 and 1/4 resolution (2x average pooling).
class MultiScaleDiscriminatorImpl : public torch::nn::Module {
public:
    explicit MultiScaleDiscriminatorImpl(const ArchitecturePreset& preset);

    /// One score per batch element: per-scale spatial mean, averaged over scales.
    torch::Tensor forward(const torch::Tensor& x);

private:
    ArchitecturePreset preset_;
    torch::nn::ModuleList scales_;
};
TORCH_MODULE(MultiScaleDiscriminator);

/// Throws ShapeError unless `x` is (B, image_channels, height, width) for `preset`.
void check_image_shape(const ArchitecturePreset& preset, const torch::Tensor& x, const char* what);

}  // namespace transeg
