#include "transeg/losses.hpp"

#include "transeg/errors.hpp"

#include <cmath>
#include <sstream>

namespace transeg::losses {

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
    if (!a.defined() || !b.defined()) throw ShapeError(std::string(what) + ": undefined input");
    if (a.sizes() != b.sizes()) {
        std::ostringstream msg;
        msg << what << ": shape mismatch " << a.sizes() << " vs " << b.sizes();
        throw ShapeError(msg.str());
    }
}

const torch::Tensor& member(const torch::Tensor& t, const char* name) {
    if (!t.defined()) throw ShapeError(std::string("bundle is missing ") + name);
    return t;
}

double scalar(const torch::Tensor& t) { return t.defined() ? t.item<double>() : 0.0; }

}  // namespace

void LossWeights::validate() const {
    for (double w : {adv, rec, lat, cyc, seg}) {
        if (!(w >= 0.0) || !std::isfinite(w))
            throw ConfigError("loss weights must be finite and nonnegative");
    }
}

torch::Tensor dice_loss(const torch::Tensor& pred, const torch::Tensor& target) {
    require_same_shape(pred, target, "dice_loss");
    auto intersection = (pred * target).sum();
    auto denom = pred.sum() + target.sum();
    return 1.0 - (2.0 * intersection + kDiceEps) / (denom + kDiceEps);
}

torch::Tensor l1_loss(const torch::Tensor& a, const torch::Tensor& b) {
    require_same_shape(a, b, "l1_loss");
    return (a - b).abs().mean();
}

torch::Tensor reconstruction_loss(const PresenceBundle& p, const AbsenceBundle& a) {
    return losses::l1_loss(member(p.x_P, "x_P"), member(p.x_PP, "x_PP")) +
           losses::l1_loss(member(a.x_A, "x_A"), member(a.x_AA, "x_AA"));
}

torch::Tensor latent_loss(const PresenceBundle& p, const AbsenceBundle& a) {
    return losses::l1_loss(member(p.code_P.common, "c_P"), member(p.c_PA, "c_PA")) +
           losses::l1_loss(member(a.code_A.common, "c_A"), member(a.code_AP.common, "c_AP")) +
           losses::l1_loss(a.code_A.common, member(a.c_AA, "c_AA")) +
           losses::l1_loss(p.code_P.common, member(p.code_PP.common, "c_PP")) +
           losses::l1_loss(member(p.code_P.unique, "u_P"), member(p.code_PP.unique, "u_PP")) +
           losses::l1_loss(member(a.u_sampled, "u"), member(a.code_AP.unique, "u_AP"));
}

torch::Tensor cycle_loss(const torch::Tensor& x_A, const torch::Tensor& x_APA, bool enabled) {
    if (!enabled) return torch::zeros({}, x_A.defined() ? x_A.options() : torch::TensorOptions());
    return losses::l1_loss(x_A, x_APA);
}

torch::Tensor hinge_discriminator_loss(const torch::Tensor& real, const torch::Tensor& fake) {
    return torch::relu(1.0 - real).mean() + torch::relu(1.0 + fake).mean();
}

torch::Tensor hinge_generator_loss(const torch::Tensor& fake) { return -fake.mean(); }

std::int64_t SegTargets::count() const {
    if (!labeled.defined()) return 0;
    return labeled.to(torch::kBool).sum().item<std::int64_t>();
}

torch::Tensor labeled_dice_loss(const torch::Tensor& y_seg, const SegTargets& targets) {
    if (targets.count() == 0) return torch::zeros({}, y_seg.options());
    if (targets.masks.size(0) != y_seg.size(0) || targets.labeled.size(0) != y_seg.size(0))
        throw ShapeError("segmentation targets do not align with the presence batch");
    auto idx = targets.labeled.to(torch::kBool).nonzero().squeeze(1);
    return dice_loss(y_seg.index_select(0, idx),
                     targets.masks.to(y_seg.dtype()).index_select(0, idx));
}

GeneratorLoss combine_generator_terms(const GeneratorTerms& t, const LossWeights& w) {
    w.validate();
    GeneratorLoss out;
    const std::pair<double, const torch::Tensor*> weighted[] = {
        {w.seg, &t.seg}, {w.rec, &t.rec}, {w.lat, &t.lat}, {w.cyc, &t.cyc}, {w.adv, &t.adv}};
    double total = 0.0;
    for (const auto& [lambda, term] : weighted) {
        if (lambda == 0.0 || !term->defined()) continue;
        auto contribution = lambda * *term;
        out.total = out.total.defined() ? out.total + contribution : contribution;
        total += lambda * scalar(*term);
    }
    if (!out.total.defined()) out.total = torch::zeros({}, torch::kFloat64);
    out.report.total = total;
    out.report.terms = {{"seg", scalar(t.seg)}, {"rec", scalar(t.rec)}, {"lat", scalar(t.lat)},
                        {"cyc", scalar(t.cyc)}, {"adv_g", scalar(t.adv)}, {"adv_d", 0.0}};
    return out;
}

GeneratorLoss total_generator_loss(const PresenceBundle& p, const AbsenceBundle& a,
                                   const torch::Tensor& fake_score_A,
                                   const torch::Tensor& fake_score_P, const SegTargets& targets,
                                   const LossWeights& weights) {
    GeneratorTerms terms;
    terms.seg = labeled_dice_loss(member(p.y_seg, "y_seg"), targets);
    terms.rec = reconstruction_loss(p, a);
    terms.lat = latent_loss(p, a);
    terms.cyc = cycle_loss(a.x_A, a.x_APA, weights.cycle_enabled);
    terms.adv = hinge_generator_loss(fake_score_A) + hinge_generator_loss(fake_score_P);
    return combine_generator_terms(terms, weights);
}

}  // namespace transeg::losses
