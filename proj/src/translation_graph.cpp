#include "transeg/translation_graph.hpp"

#include "transeg/errors.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <sstream>

namespace transeg {

std::string to_string(VariantKind kind) {
    switch (kind) {
        case VariantKind::proposed: return "proposed";
        case VariantKind::ae_baseline: return "ae_baseline";
        case VariantKind::seg_only: return "seg_only";
    }
    return "unknown";
}

VariantKind variant_from_string(const std::string& name) {
    if (name == "proposed") return VariantKind::proposed;
    if (name == "ae_baseline") return VariantKind::ae_baseline;
    if (name == "seg_only") return VariantKind::seg_only;
    throw ConfigError("unknown model variant '" + name + "'");
}

// ---------------------------------------------------------------------------

SegTransModelImpl::SegTransModelImpl(const ArchitecturePreset& preset, VariantKind kind)
    : preset_(preset), kind_(kind) {
    preset_.validate();
    encoder = register_module("encoder", Encoder(preset_));
    residual = register_module(
        "residual", Decoder(preset_, DecoderSpec{preset_.latent_channels(), preset_.residual_kernel,
                                                 /*short_skips=*/false, /*long_skips=*/true,
                                                 /*classifier=*/true}));
    if (kind_ == VariantKind::ae_baseline) {
        reconstruction = register_module(
            "reconstruction",
            Decoder(preset_, DecoderSpec{preset_.latent_channels(), preset_.decoder_kernel, true,
                                         /*long_skips=*/false, false}));
    }
    if (kind_ == VariantKind::proposed) {
        common = register_module(
            "common", Decoder(preset_, DecoderSpec{preset_.common_channels(),
                                                   preset_.decoder_kernel, true, true, false}));
        seg_norm = register_module(
            "seg_norm", SegNormState(preset_.seg_norm_mode, preset_.decoder_norm_channels(),
                                     preset_.common_channels(), preset_.unique_channels,
                                     preset_.mlp_hidden, preset_.mlp_layers, preset_.mlp_spectral));
        disc_A = register_module("disc_A", MultiScaleDiscriminator(preset_));
        disc_P = register_module("disc_P", MultiScaleDiscriminator(preset_));
    }
}

Encoded SegTransModelImpl::encode(const torch::Tensor& x) { return encoder->forward(x); }

torch::Tensor SegTransModelImpl::decode_common(const torch::Tensor& c, const SkipStack& skips) {
    if (!common) throw ConfigError("variant " + to_string(kind_) + " has no common decoder");
    return common->forward(c, &skips);
}

namespace {

torch::Tensor join_codes(const torch::Tensor& c, const torch::Tensor& u) {
    if (c.size(0) != u.size(0) || c.size(2) != u.size(2) || c.size(3) != u.size(3)) {
        std::ostringstream msg;
        msg << "common code " << c.sizes() << " and unique code " << u.sizes()
            << " differ in batch or spatial size";
        throw ShapeError(msg.str());
    }
    return torch::cat({c, u}, 1);
}

}  // namespace

torch::Tensor SegTransModelImpl::decode_residual(const torch::Tensor& c, const torch::Tensor& u,
                                                 const SkipStack& skips) {
    if (kind_ != VariantKind::proposed)
        throw ConfigError("variant " + to_string(kind_) + " has no residual translation path");
    return residual->forward(join_codes(c, u), &skips);
}

torch::Tensor SegTransModelImpl::decode_segmentation(const torch::Tensor& c, const torch::Tensor& u,
                                                     const SkipStack& skips,
                                                     SegNormStateImpl& state) {
    if (state.mode() != preset_.seg_norm_mode)
        throw ConfigError("segmentation normalization mode does not match preset '" +
                          preset_.name + "'");
    if (state.layer_channels() != residual->norm_channels())
        throw ConfigError("segmentation normalization layers do not match the residual decoder");
    auto params = state.params(c, u);
    std::vector<nn::NormOverride> overrides;
    overrides.reserve(params.size());
    for (auto& p : params) overrides.push_back({state.stats(), std::move(p)});
    return residual->segment(join_codes(c, u), &skips, &overrides);
}

torch::Tensor SegTransModelImpl::reconstruct(const torch::Tensor& latent) {
    if (!reconstruction) throw ConfigError("variant " + to_string(kind_) + " has no reconstruction decoder");
    return reconstruction->forward(latent, nullptr);
}

torch::Tensor SegTransModelImpl::discriminate(const torch::Tensor& x, Domain which) {
    if (kind_ != VariantKind::proposed)
        throw ConfigError("variant " + to_string(kind_) + " has no discriminators");
    return which == Domain::A ? disc_A->forward(x) : disc_P->forward(x);
}

torch::Tensor SegTransModelImpl::segmentation_probabilities(const torch::Tensor& x) {
    auto enc = encode(x);
    if (kind_ == VariantKind::proposed)
        return decode_segmentation(enc.latent.common, enc.latent.unique, enc.skips, *seg_norm);
    return residual->segment(enc.raw, &enc.skips, nullptr);
}

namespace {

template <typename Holder>
void append_parameters(std::vector<torch::Tensor>& out, const Holder& holder) {
    if (holder.is_empty()) return;
    auto p = holder->parameters();
    out.insert(out.end(), p.begin(), p.end());
}

}  // namespace

std::vector<torch::Tensor> SegTransModelImpl::generator_parameters() {
    std::vector<torch::Tensor> out;
    append_parameters(out, encoder);
    append_parameters(out, residual);
    append_parameters(out, common);
    append_parameters(out, reconstruction);
    append_parameters(out, seg_norm);
    return out;
}

std::vector<torch::Tensor> SegTransModelImpl::discriminator_parameters() {
    std::vector<torch::Tensor> out;
    append_parameters(out, disc_A);
    append_parameters(out, disc_P);
    return out;
}

void SegTransModelImpl::advance_spectral_norm(int n_iters) {
    if (preset_.spectral) nn::advance_spectral_norm(*this, n_iters);
}

SegTransModel make_model(const ArchitecturePreset& preset, VariantKind kind, std::uint64_t seed) {
    torch::manual_seed(seed);
    SegTransModel model(preset, kind);
    nn::kaiming_init(*model);
    return model;
}

at::Generator make_generator(std::uint64_t seed) {
    return at::make_generator<at::CPUGeneratorImpl>(seed);
}

torch::Tensor sample_unique(at::IntArrayRef shape, at::Generator& gen,
                            const torch::TensorOptions& options) {
    return at::randn(shape, gen, options);
}

// ---------------------------------------------------------------------------

PresenceBundle forward_presence(SegTransModelImpl& model, const torch::Tensor& x_P) {
    if (model.kind() != VariantKind::proposed)
        throw ConfigError("forward_presence requires the proposed variant");
    PresenceBundle b;
    b.x_P = x_P;
    auto enc = model.encode(x_P);
    b.code_P = enc.latent;
    b.skips = enc.skips;
    b.x_PA = model.decode_common(b.code_P.common, b.skips);
    b.x_PP = b.x_PA + model.decode_residual(b.code_P.common, b.code_P.unique, b.skips);
    // The effective residual after rounding, so x_PP - x_PA == delta_PA bit-exactly.
    b.delta_PA = b.x_PP - b.x_PA;
    b.y_seg = model.decode_segmentation(b.code_P.common, b.code_P.unique, b.skips, *model.seg_norm);
    b.c_PA = model.encode(b.x_PA).latent.common;
    b.code_PP = model.encode(b.x_PP).latent;
    return b;
}

AbsenceBundle forward_absence(SegTransModelImpl& model, const torch::Tensor& x_A,
                              at::Generator& gen, bool cycle_enabled) {
    if (model.kind() != VariantKind::proposed)
        throw ConfigError("forward_absence requires the proposed variant");
    AbsenceBundle b;
    b.x_A = x_A;
    auto enc = model.encode(x_A);
    b.code_A = enc.latent;
    b.skips = enc.skips;
    b.x_AA = model.decode_common(b.code_A.common, b.skips);
    b.u_sampled = sample_unique(b.code_A.unique.sizes(), gen, b.code_A.unique.options());
    b.x_AP = b.x_AA + model.decode_residual(b.code_A.common, b.u_sampled, b.skips);
    b.c_AA = model.encode(b.x_AA).latent.common;
    auto enc_AP = model.encode(b.x_AP);
    b.code_AP = enc_AP.latent;
    if (cycle_enabled) b.x_APA = model.decode_common(b.code_AP.common, enc_AP.skips);
    return b;
}

torch::Tensor segment(SegTransModelImpl& model, const torch::Tensor& x, double threshold) {
    torch::NoGradGuard no_grad;
    auto y = model.segmentation_probabilities(x);
    return (y >= threshold).to(x.dtype());
}

// ---------------------------------------------------------------------------

namespace {

torch::optim::AdamOptions adam_options(double lr, const OptimizerConfig& cfg) {
    return torch::optim::AdamOptions(lr)
        .betas({cfg.beta1, cfg.beta2})
        .weight_decay(cfg.weight_decay)
        .amsgrad(cfg.amsgrad);
}

void set_requires_grad(const std::vector<torch::Tensor>& params, bool flag) {
    for (auto p : params) p.set_requires_grad(flag);
}

void check_finite(const losses::LossReport& report, const char* phase) {
    bool ok = std::isfinite(report.total);
    for (const auto& [k, v] : report.terms) ok = ok && std::isfinite(v);
    if (ok) return;
    std::ostringstream msg;
    msg << "non-finite loss in " << phase << " step: total=" << report.total;
    for (const auto& [k, v] : report.terms) msg << " " << k << "=" << v;
    throw NonFiniteLossError(msg.str());
}

torch::Tensor labeled_rows(const losses::SegTargets& t) {
    return t.labeled.to(torch::kBool).nonzero().squeeze(1);
}

SkipStack select_rows(const SkipStack& skips, const torch::Tensor& idx) {
    SkipStack out;
    out.reserve(skips.size());
    for (const auto& s : skips) out.push_back(s.index_select(0, idx));
    return out;
}

}  // namespace

TrainingState::TrainingState(SegTransModel m, const OptimizerConfig& opt,
                             const losses::LossWeights& w, std::uint64_t sampling_seed)
    : model(std::move(m)), optimizer_config(opt), weights(w), generator(make_generator(sampling_seed)) {
    weights.validate();
    generator_optimizer = std::make_unique<torch::optim::Adam>(model->generator_parameters(),
                                                               adam_options(opt.lr_generator, opt));
    if (model->kind() == VariantKind::proposed) {
        discriminator_optimizer = std::make_unique<torch::optim::Adam>(
            model->discriminator_parameters(), adam_options(opt.lr_discriminator, opt));
    }
}

losses::GeneratorLoss generator_objective(SegTransModelImpl& model, const TrainingBatch& batch,
                                          const losses::LossWeights& weights, at::Generator& gen) {
    losses::GeneratorTerms terms;
    const auto n_labeled = batch.targets.count();
    const auto options = batch.x_P.options();

    if (model.kind() == VariantKind::proposed) {
        PresenceBundle p;
        p.x_P = batch.x_P;
        auto enc = model.encode(batch.x_P);
        p.code_P = enc.latent;
        p.skips = enc.skips;
        p.x_PA = model.decode_common(p.code_P.common, p.skips);
        p.x_PP = p.x_PA + model.decode_residual(p.code_P.common, p.code_P.unique, p.skips);
        p.delta_PA = p.x_PP - p.x_PA;
        p.c_PA = model.encode(p.x_PA).latent.common;
        p.code_PP = model.encode(p.x_PP).latent;

        auto a = forward_absence(model, batch.x_A, gen, weights.cycle_enabled);

        // Only labeled rows carry a Dice term, so only they are segmented.
        if (n_labeled > 0) {
            auto idx = labeled_rows(batch.targets);
            auto y = model.decode_segmentation(p.code_P.common.index_select(0, idx),
                                               p.code_P.unique.index_select(0, idx),
                                               select_rows(p.skips, idx), *model.seg_norm);
            terms.seg = losses::dice_loss(
                y, batch.targets.masks.to(y.dtype()).index_select(0, idx));
        } else {
            terms.seg = torch::zeros({}, options);
        }
        terms.rec = losses::reconstruction_loss(p, a);
        terms.lat = losses::latent_loss(p, a);
        terms.cyc = losses::cycle_loss(a.x_A, a.x_APA, weights.cycle_enabled);
        if (weights.adv > 0.0) {
            terms.adv = losses::hinge_generator_loss(model.discriminate(p.x_PA, Domain::A)) +
                        losses::hinge_generator_loss(model.discriminate(a.x_AP, Domain::P));
        } else {
            terms.adv = torch::zeros({}, options);
        }
        return losses::combine_generator_terms(terms, weights);
    }

    // Baselines: segmentation on labeled rows, plus skip-free reconstruction for the AE.
    terms.seg = torch::zeros({}, options);
    if (n_labeled > 0 && weights.seg > 0.0) {
        auto idx = labeled_rows(batch.targets);
        auto y = model.segmentation_probabilities(batch.x_P.index_select(0, idx));
        terms.seg = losses::dice_loss(y, batch.targets.masks.to(y.dtype()).index_select(0, idx));
    }
    if (model.kind() == VariantKind::ae_baseline && weights.rec > 0.0) {
        auto rec_P = model.reconstruct(model.encode(batch.x_P).raw);
        auto rec_A = model.reconstruct(model.encode(batch.x_A).raw);
        terms.rec = losses::l1_loss(batch.x_P, rec_P) + losses::l1_loss(batch.x_A, rec_A);
    }
    return losses::combine_generator_terms(terms, weights);
}

double discriminator_step(TrainingState& state, const TrainingBatch& batch) {
    auto& model = *state.model;
    if (model.kind() != VariantKind::proposed || !state.discriminator_optimizer) return 0.0;

    torch::Tensor fake_A, fake_P;
    {
        torch::NoGradGuard no_grad;
        auto enc_P = model.encode(batch.x_P);
        fake_A = model.decode_common(enc_P.latent.common, enc_P.skips);
        auto enc_A = model.encode(batch.x_A);
        auto u = sample_unique(enc_A.latent.unique.sizes(), state.generator,
                               enc_A.latent.unique.options());
        fake_P = model.decode_common(enc_A.latent.common, enc_A.skips) +
                 model.decode_residual(enc_A.latent.common, u, enc_A.skips);
    }
    state.discriminator_optimizer->zero_grad();
    auto loss = losses::hinge_discriminator_loss(model.discriminate(batch.x_A, Domain::A),
                                                 model.discriminate(fake_A, Domain::A)) +
                losses::hinge_discriminator_loss(model.discriminate(batch.x_P, Domain::P),
                                                 model.discriminate(fake_P, Domain::P));
    const double value = loss.item<double>();
    if (!std::isfinite(value)) {
        std::ostringstream msg;
        msg << "non-finite loss in discriminator step: adv_d=" << value;
        throw NonFiniteLossError(msg.str());
    }
    loss.backward();
    state.discriminator_optimizer->step();
    return value;
}

losses::LossReport generator_step(TrainingState& state, const TrainingBatch& batch, bool* updated) {
    auto& model = *state.model;
    const auto disc_params = model.discriminator_parameters();
    set_requires_grad(disc_params, false);
    state.generator_optimizer->zero_grad();
    losses::GeneratorLoss objective;
    try {
        objective = generator_objective(model, batch, state.weights, state.generator);
        check_finite(objective.report, "generator");
    } catch (...) {
        set_requires_grad(disc_params, true);
        throw;
    }
    const bool has_grad = objective.total.requires_grad();
    if (has_grad) {
        objective.total.backward();
        state.generator_optimizer->step();
    }
    set_requires_grad(disc_params, true);
    if (updated) *updated = has_grad;
    return objective.report;
}

StepReport training_step(TrainingState& state, const TrainingBatch& batch) {
    if (!batch.x_P.defined() || !batch.x_A.defined())
        throw ShapeError("training batch needs both presence and absence images");
    if (batch.targets.labeled.defined() && batch.targets.labeled.size(0) != batch.x_P.size(0))
        throw ShapeError("labeled flags do not align with the presence batch");

    StepReport report;
    report.n_labeled = batch.targets.count();
    state.model->advance_spectral_norm(1);

    double adv_d = 0.0;
    if (state.model->kind() == VariantKind::proposed) {
        adv_d = discriminator_step(state, batch);
        report.discriminator_updated = true;
    }
    report.losses = generator_step(state, batch, &report.generator_updated);
    report.losses.terms["adv_d"] = adv_d;
    return report;
}

}  // namespace transeg
