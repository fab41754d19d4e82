#include "transeg/nn_core.hpp"

#include "transeg/errors.hpp"

#include <numeric>
#include <sstream>

namespace transeg::nn {

torch::Tensor instance_norm(const torch::Tensor& x, double eps) {
    auto mean = x.mean({2, 3}, /*keepdim=*/true);
    auto var = (x - mean).pow(2).mean({2, 3}, true);
    return (x - mean) / torch::sqrt(var + eps);
}

torch::Tensor layer_norm(const torch::Tensor& x, double eps) {
    auto mean = x.mean({1, 2, 3}, true);
    auto var = (x - mean).pow(2).mean({1, 2, 3}, true);
    return (x - mean) / torch::sqrt(var + eps);
}

torch::Tensor apply_affine(const torch::Tensor& x, const AffineParams& p) {
    const auto c = x.size(1);
    auto shape_of = [&](const torch::Tensor& t) {
        if (t.dim() == 1) return t.view({1, c, 1, 1});
        return t.view({t.size(0), c, 1, 1});
    };
    return x * shape_of(p.scale) + shape_of(p.shift);
}

torch::Tensor upsample_repeat(const torch::Tensor& x, std::optional<Size2> target) {
    auto y = x.repeat_interleave(2, 2).repeat_interleave(2, 3);
    if (!target) return y;
    const auto [th, tw] = *target;
    if (th > y.size(2) || tw > y.size(3) || th < x.size(2) || tw < x.size(3)) {
        std::ostringstream msg;
        msg << "upsample target " << th << "x" << tw << " unreachable from " << x.size(2) << "x"
            << x.size(3);
        throw ShapeError(msg.str());
    }
    return y.narrow(2, 0, th).narrow(3, 0, tw);
}

std::array<std::int64_t, 4> same_padding(std::int64_t kernel, std::int64_t stride) {
    const std::int64_t total = stride == 1 ? kernel - 1 : 2 * ((kernel - 1) / 2);
    const std::int64_t lo = total / 2;
    const std::int64_t hi = total - lo;
    return {lo, hi, lo, hi};
}

// ---------------------------------------------------------------------------

SpectralState make_spectral_state(const torch::Tensor& weight) {
    torch::NoGradGuard no_grad;
    auto w = weight.reshape({weight.size(0), -1});
    SpectralState s;
    s.u = torch::nn::functional::normalize(torch::randn({w.size(0)}, w.options()),
                                           torch::nn::functional::NormalizeFuncOptions().dim(0));
    s.v = torch::nn::functional::normalize(torch::mv(w.t(), s.u),
                                           torch::nn::functional::NormalizeFuncOptions().dim(0).eps(kSigmaFloor));
    return s;
}

namespace {

void iterate(const torch::Tensor& w, SpectralState& state, int n_iters) {
    namespace F = torch::nn::functional;
    const auto opts = F::NormalizeFuncOptions().dim(0).eps(kSigmaFloor);
    torch::NoGradGuard no_grad;
    for (int i = 0; i < n_iters; ++i) {
        state.v.copy_(F::normalize(torch::mv(w.t(), state.u), opts));
        state.u.copy_(F::normalize(torch::mv(w, state.v), opts));
    }
}

}  // namespace

torch::Tensor spectral_normalize(const torch::Tensor& weight, SpectralState& state, int n_iters) {
    auto w = weight.reshape({weight.size(0), -1});
    if (!state.u.defined() || !state.v.defined()) state = make_spectral_state(weight);
    iterate(w.detach(), state, n_iters);
    auto sigma = torch::dot(state.u, torch::mv(w, state.v)).clamp_min(kSigmaFloor);
    return weight / sigma;
}

void advance_spectral_norm(torch::nn::Module& module, int n_iters) {
    for (const auto& m : module.modules(/*include_self=*/true)) {
        if (auto* sn = dynamic_cast<SpectralLayer*>(m.get())) sn->power_iteration(n_iters);
    }
}

void kaiming_init(torch::nn::Module& module) {
    torch::NoGradGuard no_grad;
    for (const auto& m : module.modules(true)) {
        if (auto* conv = dynamic_cast<SNConv2dImpl*>(m.get())) {
            torch::nn::init::kaiming_normal_(conv->weight, 0.0, torch::kFanIn, torch::kReLU);
            if (conv->bias.defined()) conv->bias.zero_();
            conv->power_iteration(1);
        } else if (auto* lin = dynamic_cast<SNLinearImpl*>(m.get())) {
            torch::nn::init::kaiming_normal_(lin->weight, 0.0, torch::kFanIn, torch::kReLU);
            lin->bias.zero_();
            lin->power_iteration(1);
        }
    }
}

// ---------------------------------------------------------------------------

SNConv2dImpl::SNConv2dImpl(const ConvOptions& opts) : opts_(opts) {
    weight = register_parameter(
        "weight", torch::empty({opts.out_channels, opts.in_channels, opts.kernel, opts.kernel}));
    if (opts.bias) bias = register_parameter("bias", torch::zeros({opts.out_channels}));
    torch::nn::init::kaiming_normal_(weight, 0.0, torch::kFanIn, torch::kReLU);
    state_ = make_spectral_state(weight);
    state_.u = register_buffer("sn_u", state_.u);
    state_.v = register_buffer("sn_v", state_.v);
    power_iteration(1);
}

torch::Tensor SNConv2dImpl::effective_weight() {
    return opts_.spectral ? spectral_normalize(weight, state_, 0) : weight;
}

torch::Tensor SNConv2dImpl::forward(const torch::Tensor& x) {
    if (x.size(1) != opts_.in_channels) {
        std::ostringstream msg;
        msg << "conv expects " << opts_.in_channels << " input channels, got " << x.size(1);
        throw ShapeError(msg.str());
    }
    auto h = x;
    if (opts_.kernel > 1) {
        const auto pad = same_padding(opts_.kernel, opts_.stride);
        h = opts_.pad == PadMode::reflect
                ? torch::reflection_pad2d(h, {pad[0], pad[1], pad[2], pad[3]})
                : torch::constant_pad_nd(h, {pad[0], pad[1], pad[2], pad[3]}, 0.0);
    }
    return torch::conv2d(h, effective_weight(), bias, opts_.stride);
}

void SNConv2dImpl::power_iteration(int n_iters) {
    iterate(weight.detach().reshape({weight.size(0), -1}), state_, n_iters);
}

SNLinearImpl::SNLinearImpl(std::int64_t in_features, std::int64_t out_features, bool spectral)
    : spectral_(spectral) {
    weight = register_parameter("weight", torch::empty({out_features, in_features}));
    bias = register_parameter("bias", torch::zeros({out_features}));
    torch::nn::init::kaiming_normal_(weight, 0.0, torch::kFanIn, torch::kReLU);
    state_ = make_spectral_state(weight);
    state_.u = register_buffer("sn_u", state_.u);
    state_.v = register_buffer("sn_v", state_.v);
    power_iteration(1);
}

torch::Tensor SNLinearImpl::forward(const torch::Tensor& x) {
    auto w = spectral_ ? spectral_normalize(weight, state_, 0) : weight;
    return torch::nn::functional::linear(x, w, bias);
}

void SNLinearImpl::power_iteration(int n_iters) { iterate(weight.detach(), state_, n_iters); }

// ---------------------------------------------------------------------------

NormLayerImpl::NormLayerImpl(NormKind kind, std::int64_t channels, bool affine)
    : kind_(kind), channels_(channels) {
    if (affine && kind != NormKind::adaptive && kind != NormKind::none) {
        gamma = register_parameter("gamma", torch::ones({channels}));
        beta = register_parameter("beta", torch::zeros({channels}));
    }
}

torch::Tensor NormLayerImpl::forward(const torch::Tensor& x, const NormOverride* override) {
    if (x.size(1) != channels_) {
        std::ostringstream msg;
        msg << "norm layer expects " << channels_ << " channels, got " << x.size(1);
        throw ShapeError(msg.str());
    }
    if (override) {
        const auto& a = override->affine;
        if (!a.scale.defined() || !a.shift.defined() || a.scale.size(-1) != channels_ ||
            a.shift.size(-1) != channels_) {
            std::ostringstream msg;
            msg << "normalization parameters do not match layer with " << channels_ << " channels";
            throw ConfigError(msg.str());
        }
        auto h = override->stats == NormKind::layer ? layer_norm(x) : instance_norm(x);
        return apply_affine(h, a);
    }
    switch (kind_) {
        case NormKind::none:
            return x;
        case NormKind::adaptive:
            throw ConfigError("adaptive normalization layer used without normalization parameters");
        case NormKind::instance:
        case NormKind::layer: {
            auto h = kind_ == NormKind::layer ? layer_norm(x) : instance_norm(x);
            return gamma.defined() ? apply_affine(h, {gamma, beta}) : h;
        }
    }
    return x;
}

// ---------------------------------------------------------------------------

SkipCompressorImpl::SkipCompressorImpl(std::int64_t enc_channels, int level, bool spectral)
    : level_(level) {
    compress_ = register_module(
        "compress", SNConv2d(ConvOptions{enc_channels, 1, 1, 1, true, spectral}));
}

torch::Tensor SkipCompressorImpl::forward(const torch::Tensor& enc_features,
                                          const torch::Tensor& dec_features) {
    if (enc_features.size(0) != dec_features.size(0) ||
        enc_features.size(2) != dec_features.size(2) ||
        enc_features.size(3) != dec_features.size(3)) {
        std::ostringstream msg;
        msg << "long skip level " << level_ << ": encoder features " << enc_features.sizes()
            << " do not match decoder features " << dec_features.sizes();
        throw ShapeError(msg.str());
    }
    auto compressed = instance_norm(compress_->forward(enc_features));
    return torch::cat({dec_features, compressed}, 1);
}

// ---------------------------------------------------------------------------

ConvBlockImpl::ConvBlockImpl(const ConvBlockConfig& cfg) : cfg_(cfg) {
    if (cfg.stride == 2 && cfg.upsample)
        throw ConfigError("conv block cannot both downsample and upsample");
    if (cfg.stride != 1 && cfg.stride != 2) throw ConfigError("conv block stride must be 1 or 2");
    if (cfg.kernel % 2 == 0) throw ConfigError("conv block kernel must be odd");

    const bool affine = cfg.norm_kind == NormKind::layer;
    norm_ = register_module("norm", NormLayer(cfg.norm_kind, cfg.in_channels, affine));
    const auto conv_in = cfg.in_channels + (cfg.long_skip_channels > 0 ? 1 : 0);
    conv_ = register_module("conv", SNConv2d(ConvOptions{conv_in, cfg.out_channels, cfg.kernel,
                                                         cfg.stride, true, cfg.spectral}));
    if (cfg.long_skip_channels > 0) {
        skip_ = register_module(
            "long_skip", SkipCompressor(cfg.long_skip_channels, cfg.long_skip_level, cfg.spectral));
    }
    if (cfg.short_skip && cfg.in_channels != cfg.out_channels) {
        projection_ = register_module(
            "projection", SNConv2d(ConvOptions{cfg.in_channels, cfg.out_channels, 1, cfg.stride,
                                               false, cfg.spectral}));
    }
}

torch::Tensor ConvBlockImpl::forward(const torch::Tensor& x, const torch::Tensor* enc_skip,
                                     std::optional<Size2> target,
                                     const NormOverride* norm_override) {
    if (x.size(1) != cfg_.in_channels) {
        std::ostringstream msg;
        msg << "conv block expects " << cfg_.in_channels << " channels, got " << x.size(1);
        throw ShapeError(msg.str());
    }
    auto h = torch::relu(norm_->forward(x, norm_override));
    if (skip_) {
        if (!enc_skip) {
            std::ostringstream msg;
            msg << "missing long skip for level " << cfg_.long_skip_level;
            throw ShapeError(msg.str());
        }
        h = skip_->forward(*enc_skip, h);
    }
    if (cfg_.upsample) h = upsample_repeat(h, target);
    h = conv_->forward(h);
    if (!cfg_.short_skip) return h;

    auto s = x;
    if (cfg_.upsample) s = upsample_repeat(s, target);
    if (projection_) {
        s = projection_->forward(s);
    } else if (cfg_.stride == 2) {
        s = s.slice(2, 0, std::nullopt, 2).slice(3, 0, std::nullopt, 2);
    }
    return h + s;
}

// ---------------------------------------------------------------------------

NormParamMLPImpl::NormParamMLPImpl(std::int64_t common_channels, std::int64_t unique_channels,
                                   std::vector<std::int64_t> layer_channels, std::int64_t hidden,
                                   int n_layers, bool spectral)
    : in_features_(common_channels + unique_channels), layer_channels_(std::move(layer_channels)) {
    if (n_layers < 1) throw ConfigError("norm-param MLP needs at least one layer");
    hidden_ = register_module("hidden", torch::nn::ModuleList());
    std::int64_t in = in_features_;
    for (int i = 0; i < n_layers; ++i) {
        hidden_->push_back(SNLinear(in, hidden, spectral));
        in = hidden;
    }
    const auto total = std::accumulate(layer_channels_.begin(), layer_channels_.end(),
                                       std::int64_t{0});
    head_ = register_module("head", SNLinear(hidden, 2 * total, spectral));
}

NormParams NormParamMLPImpl::forward(const torch::Tensor& common, const torch::Tensor& unique) {
    if (common.size(1) + unique.size(1) != in_features_)
        throw ShapeError("norm-param MLP: code channels do not match configuration");
    if (common.size(0) != unique.size(0))
        throw ShapeError("norm-param MLP: common/unique batch mismatch");
    auto h = torch::cat({common.mean({2, 3}), unique.mean({2, 3})}, 1);
    for (const auto& layer : *hidden_) h = torch::relu(layer->as<SNLinear>()->forward(h));
    auto out = head_->forward(h);

    NormParams params;
    params.reserve(layer_channels_.size());
    std::int64_t offset = 0;
    for (auto c : layer_channels_) {
        params.push_back({out.narrow(1, offset, c), out.narrow(1, offset + c, c)});
        offset += 2 * c;
    }
    return params;
}

// ---------------------------------------------------------------------------

std::uint64_t parameter_checksum(const std::vector<torch::Tensor>& params) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& p : params) {
        auto t = p.detach().contiguous().cpu();
        const auto* bytes = static_cast<const unsigned char*>(t.data_ptr());
        const auto n = t.numel() * static_cast<std::int64_t>(t.element_size());
        for (std::int64_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ull;
        }
    }
    return h;
}

std::int64_t parameter_count(const std::vector<torch::Tensor>& params) {
    std::int64_t n = 0;
    for (const auto& p : params) n += p.numel();
    return n;
}

}  // namespace transeg::nn
