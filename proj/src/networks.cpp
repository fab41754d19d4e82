#include "transeg/networks.hpp"

#include "transeg/errors.hpp"

#include <sstream>

namespace transeg {

using nn::ConvOptions;
using nn::NormKind;
using nn::Size2;

// ---------------------------------------------------------------------------
// Presets

std::vector<Size2> ArchitecturePreset::level_sizes() const {
    std::vector<Size2> sizes{{height, width}};
    for (int i = 0; i < downsamples(); ++i) {
        const auto& prev = sizes.back();
        sizes.push_back({(prev[0] + 1) / 2, (prev[1] + 1) / 2});
    }
    return sizes;
}

std::vector<std::int64_t> ArchitecturePreset::decoder_norm_channels() const {
    return decoder_channels;
}

void ArchitecturePreset::validate() const {
    auto fail = [&](const std::string& why) { throw ConfigError("preset '" + name + "': " + why); };
    if (image_channels < 1 || height < 1 || width < 1) fail("image shape must be positive");
    if (encoder_channels.size() < 2) fail("encoder needs an input conv and at least one block");
    if (static_cast<int>(decoder_channels.size()) != downsamples())
        fail("decoder needs one input conv plus one block per encoder skip level");
    if (unique_channels < 1 || unique_channels >= latent_channels())
        fail("unique code must be a proper, nonempty slice of the latent code");
    if (encoder_kernel % 2 == 0 || decoder_kernel % 2 == 0 || residual_kernel % 2 == 0)
        fail("encoder/decoder kernels must be odd");
    if (discriminator_channels.empty()) fail("discriminator channels missing");
    if (discriminator_scales < 1) fail("discriminator needs at least one scale");
    if (mlp_layers < 1 || mlp_hidden < 1) fail("norm-param MLP shape invalid");
}

ArchitecturePreset ArchitecturePreset::mnist48() {
    ArchitecturePreset p;
    p.name = "mnist48";
    p.image_channels = 1;
    p.height = p.width = 48;
    p.encoder_channels = {32, 64, 128, 256, 512};
    p.decoder_channels = {256, 128, 64, 32};
    p.discriminator_channels = {128, 128, 256, 512};
    p.seg_norm_mode = SegNormMode::adaptive_from_mlp;
    return p;
}

ArchitecturePreset ArchitecturePreset::mnist128() {
    ArchitecturePreset p;
    p.name = "mnist128";
    p.image_channels = 1;
    p.height = p.width = 128;
    p.encoder_channels = {16, 32, 64, 128, 256, 512};
    p.decoder_channels = {256, 128, 64, 32, 16};
    p.discriminator_channels = {128, 128, 256, 512};
    p.seg_norm_mode = SegNormMode::adaptive_from_mlp;
    return p;
}

ArchitecturePreset ArchitecturePreset::brats() {
    ArchitecturePreset p;
    p.name = "brats";
    p.image_channels = 4;
    p.height = 240;
    p.width = 120;
    p.encoder_channels = {16, 32, 64, 128, 256, 512};
    p.decoder_channels = {256, 128, 64, 32, 16};
    p.discriminator_channels = {64, 64, 128, 256, 512};
    p.seg_norm_mode = SegNormMode::separate_layer_params;
    return p;
}

ArchitecturePreset ArchitecturePreset::by_name(const std::string& name) {
    if (name == "mnist48") return mnist48();
    if (name == "mnist128") return mnist128();
    if (name == "brats") return brats();
    throw ConfigError("unknown architecture preset '" + name + "'");
}

void check_image_shape(const ArchitecturePreset& preset, const torch::Tensor& x, const char* what) {
    if (x.dim() != 4 || x.size(1) != preset.image_channels || x.size(2) != preset.height ||
        x.size(3) != preset.width) {
        std::ostringstream msg;
        msg << what << ": expected (B, " << preset.image_channels << ", " << preset.height << ", "
            << preset.width << ") for preset '" << preset.name << "', got " << x.sizes();
        throw ShapeError(msg.str());
    }
}

// ---------------------------------------------------------------------------
// Encoder

EncoderImpl::EncoderImpl(const ArchitecturePreset& preset) : preset_(preset) {
    preset_.validate();
    const auto& ch = preset_.encoder_channels;
    const auto k = preset_.encoder_kernel;
    input_conv_ = register_module(
        "input_conv",
        nn::SNConv2d(ConvOptions{preset_.image_channels, ch[0], k, 1, true, preset_.spectral}));
    blocks_ = register_module("blocks", torch::nn::ModuleList());
    for (std::size_t i = 1; i < ch.size(); ++i) {
        nn::ConvBlockConfig cfg;
        cfg.in_channels = ch[i - 1];
        cfg.out_channels = ch[i];
        cfg.kernel = k;
        cfg.stride = 2;
        cfg.short_skip = true;
        cfg.norm_kind = NormKind::instance;
        cfg.spectral = preset_.spectral;
        blocks_->push_back(nn::ConvBlock(cfg));
    }
    out_norm_ = register_module("out_norm", nn::NormLayer(NormKind::instance, ch.back(), false));
}

Encoded EncoderImpl::forward(const torch::Tensor& x) {
    check_image_shape(preset_, x, "encode");
    Encoded out;
    auto h = input_conv_->forward(x);
    const auto n = blocks_->size();
    for (std::size_t i = 0; i < n; ++i) {
        h = blocks_[i]->as<nn::ConvBlock>()->forward(h);
        if (i + 1 < n) out.skips.push_back(h);
    }
    out.raw = torch::relu(out_norm_->forward(h));
    out.latent.common = out.raw.narrow(1, 0, preset_.common_channels());
    out.latent.unique = out.raw.narrow(1, preset_.common_channels(), preset_.unique_channels);
    return out;
}

// ---------------------------------------------------------------------------
// Segmentation normalization state

SegNormStateImpl::SegNormStateImpl(SegNormMode mode, std::vector<std::int64_t> layer_channels,
                                   std::int64_t common_channels, std::int64_t unique_channels,
                                   std::int64_t mlp_hidden, int mlp_layers, bool spectral)
    : mode_(mode), layer_channels_(std::move(layer_channels)) {
    if (mode_ == SegNormMode::adaptive_from_mlp) {
        mlp_ = register_module("mlp", nn::NormParamMLP(common_channels, unique_channels,
                                                       layer_channels_, mlp_hidden, mlp_layers,
                                                       spectral));
    } else {
        for (std::size_t i = 0; i < layer_channels_.size(); ++i) {
            const auto c = layer_channels_[i];
            scales_.push_back(register_parameter("scale_" + std::to_string(i), torch::ones({c})));
            shifts_.push_back(register_parameter("shift_" + std::to_string(i), torch::zeros({c})));
        }
    }
}

NormKind SegNormStateImpl::stats() const {
    return mode_ == SegNormMode::adaptive_from_mlp ? NormKind::instance : NormKind::layer;
}

nn::NormParams SegNormStateImpl::params(const torch::Tensor& common, const torch::Tensor& unique) {
    if (mode_ == SegNormMode::adaptive_from_mlp) return mlp_->forward(common, unique);
    nn::NormParams out;
    for (std::size_t i = 0; i < scales_.size(); ++i) out.push_back({scales_[i], shifts_[i]});
    return out;
}

// ---------------------------------------------------------------------------
// Decoder

DecoderImpl::DecoderImpl(const ArchitecturePreset& preset, const DecoderSpec& spec)
    : preset_(preset), spec_(spec), sizes_(preset.level_sizes()) {
    preset_.validate();
    if (spec_.in_channels < 1) throw ConfigError("decoder input channels must be positive");
    const auto& dec = preset_.decoder_channels;
    const auto& enc = preset_.encoder_channels;
    const int n = preset_.downsamples();
    const bool sn = preset_.spectral;

    input_conv_ = register_module(
        "input_conv", nn::SNConv2d(ConvOptions{spec_.in_channels, dec[0], spec_.kernel, 1, true, sn}));
    blocks_ = register_module("blocks", torch::nn::ModuleList());
    for (int j = 1; j < n; ++j) {
        nn::ConvBlockConfig cfg;
        cfg.in_channels = dec[j - 1];
        cfg.out_channels = dec[j];
        cfg.kernel = spec_.kernel;
        cfg.upsample = true;
        cfg.short_skip = spec_.short_skips;
        cfg.norm_kind = NormKind::layer;
        cfg.long_skip_channels = spec_.long_skips ? enc[n - j] : 0;
        cfg.long_skip_level = n - j;
        cfg.spectral = sn;
        blocks_->push_back(nn::ConvBlock(cfg));
    }
    out_norm_ = register_module("out_norm", nn::NormLayer(NormKind::layer, dec.back(), true));
    out_conv_ = register_module(
        "out_conv",
        nn::SNConv2d(ConvOptions{dec.back(), preset_.image_channels, spec_.kernel, 1, true, sn}));
    if (spec_.classifier) {
        classifier_ = register_module(
            "classifier", nn::SNConv2d(ConvOptions{dec.back(), 1, 1, 1, true, sn}));
    }
}

std::vector<std::int64_t> DecoderImpl::norm_channels() const {
    return preset_.decoder_norm_channels();
}

std::vector<torch::Tensor> DecoderImpl::classifier_parameters() const {
    if (!classifier_) return {};
    return classifier_->parameters();
}

torch::Tensor DecoderImpl::trunk(const torch::Tensor& code, const SkipStack* skips,
                                 const std::vector<nn::NormOverride>* overrides) {
    const int n = preset_.downsamples();
    const auto& bottleneck = sizes_[n];
    if (code.dim() != 4 || code.size(1) != spec_.in_channels || code.size(2) != bottleneck[0] ||
        code.size(3) != bottleneck[1]) {
        std::ostringstream msg;
        msg << "decoder expects code (B, " << spec_.in_channels << ", " << bottleneck[0] << ", "
            << bottleneck[1] << "), got " << code.sizes();
        throw ShapeError(msg.str());
    }
    if (spec_.long_skips) {
        if (!skips || static_cast<int>(skips->size()) < n - 1) {
            std::ostringstream msg;
            msg << "decoder needs " << (n - 1) << " skip levels, got "
                << (skips ? skips->size() : 0);
            throw ShapeError(msg.str());
        }
    }
    if (overrides && overrides->size() != static_cast<std::size_t>(n))
        throw ConfigError("segmentation normalization parameters do not match decoder layer count");

    auto h = input_conv_->forward(nn::upsample_repeat(code, sizes_[n - 1]));
    for (int j = 1; j < n; ++j) {
        const int level = n - j;
        const torch::Tensor* skip = spec_.long_skips ? &(*skips)[level - 1] : nullptr;
        const nn::NormOverride* ovr = overrides ? &(*overrides)[j - 1] : nullptr;
        h = blocks_[j - 1]->as<nn::ConvBlock>()->forward(h, skip, sizes_[level - 1], ovr);
    }
    return h;
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& code, const SkipStack* skips) {
    auto h = trunk(code, skips, nullptr);
    return out_conv_->forward(torch::relu(out_norm_->forward(h)));
}

torch::Tensor DecoderImpl::segment(const torch::Tensor& code, const SkipStack* skips,
                                   const std::vector<nn::NormOverride>* overrides) {
    if (!classifier_) throw ConfigError("decoder was built without a classification layer");
    auto h = trunk(code, skips, overrides);
    const nn::NormOverride* last = overrides ? &overrides->back() : nullptr;
    h = torch::relu(out_norm_->forward(h, last));
    return torch::sigmoid(classifier_->forward(h));
}

// ---------------------------------------------------------------------------
// Discriminators

PatchDiscriminatorImpl::PatchDiscriminatorImpl(const ArchitecturePreset& preset) {
    const auto& ch = preset.discriminator_channels;
    const auto k = preset.discriminator_kernel;
    const bool sn = preset.spectral;
    auto conv = [&](std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride) {
        return nn::SNConv2d(ConvOptions{in, out, kernel, stride, true, sn, nn::PadMode::zeros});
    };
    input_conv_ = register_module("input_conv", conv(preset.image_channels, ch[0], k, 1));
    norms_ = register_module("norms", torch::nn::ModuleList());
    convs_ = register_module("convs", torch::nn::ModuleList());
    for (std::size_t j = 1; j < ch.size(); ++j) {
        norms_->push_back(nn::NormLayer(NormKind::instance, ch[j - 1], false));
        convs_->push_back(conv(ch[j - 1], ch[j], k, 2));
    }
    out_conv_ = register_module("out_conv", conv(ch.back(), 1, 1, 1));
}

torch::Tensor PatchDiscriminatorImpl::forward(const torch::Tensor& x) {
    auto h = input_conv_->forward(x);
    for (std::size_t j = 0; j < convs_->size(); ++j) {
        h = torch::leaky_relu(norms_[j]->as<nn::NormLayer>()->forward(h), 0.2);
        h = convs_[j]->as<nn::SNConv2d>()->forward(h);
    }
    return out_conv_->forward(h);
}

MultiScaleDiscriminatorImpl::MultiScaleDiscriminatorImpl(const ArchitecturePreset& preset)
    : preset_(preset) {
    scales_ = register_module("scales", torch::nn::ModuleList());
    for (int s = 0; s < preset_.discriminator_scales; ++s)
        scales_->push_back(PatchDiscriminator(preset_));
}

torch::Tensor MultiScaleDiscriminatorImpl::forward(const torch::Tensor& x) {
    check_image_shape(preset_, x, "discriminate");
    torch::Tensor total;
    auto h = x;
    for (std::size_t s = 0; s < scales_->size(); ++s) {
        if (s > 0) h = torch::avg_pool2d(h, {2, 2}, {2, 2}, {0, 0}, /*ceil_mode=*/true,
                                         /*count_include_pad=*/false);
        auto score = scales_[s]->as<PatchDiscriminator>()->forward(h).mean({1, 2, 3});
        total = total.defined() ? total + score : score;
    }
    return total / static_cast<double>(scales_->size());
}

}  // namespace transeg
