#pragma once

#include "transeg/bundles.hpp"

#include <map>
#include <string>

namespace transeg::losses {

constexpr double kDiceEps = 1e-7;

/// Objective weights. Defaults are the tuned values for the proposed model.
struct LossWeights {
    double adv = 3.0;
    double rec = 50.0;
    double lat = 1.0;
    double cyc = 50.0;
    double seg = 0.01;
    bool cycle_enabled = true;

    static LossWeights proposed() { return {}; }
    static LossWeights ae_baseline() { return {0.0, 1.0, 0.0, 0.0, 1.0, false}; }
    static LossWeights seg_only() { return {0.0, 0.0, 0.0, 0.0, 1.0, false}; }
    static LossWeights zero() { return {0.0, 0.0, 0.0, 0.0, 0.0, false}; }

    /// Throws ConfigError on negative or non-finite weights.
    void validate() const;
};

struct LossReport {
    double total = 0.0;
    /// Keys: seg, rec, lat, cyc, adv_g, adv_d.
    std::map<std::string, double> terms;
};

/// 1 - (2 sum(p t) + eps) / (sum p + sum t + eps), pooled over the whole batch.
torch::Tensor dice_loss(const torch::Tensor& pred, const torch::Tensor& target);

/// Mean absolute difference.
torch::Tensor l1_loss(const torch::Tensor& a, const torch::Tensor& b);

/// |x_P - x_PP|_1 + |x_A - x_AA|_1
torch::Tensor reconstruction_loss(const PresenceBundle& p, const AbsenceBundle& a);

/// Sum of the six code-matching L1 terms.
torch::Tensor latent_loss(const PresenceBundle& p, const AbsenceBundle& a);

/// |x_A - x_APA|_1, or 0 when the cycle is disabled.
torch::Tensor cycle_loss(const torch::Tensor& x_A, const torch::Tensor& x_APA, bool enabled);

/// mean(relu(1 - real)) + mean(relu(1 + fake)). The subgradient at a kink is 0.
torch::Tensor hinge_discriminator_loss(const torch::Tensor& real, const torch::Tensor& fake);

/// -mean(fake)
torch::Tensor hinge_generator_loss(const torch::Tensor& fake);

/// Reference masks for the presence batch; `labeled` is a (B) bool tensor
/// selecting which rows of `masks` are real annotations.
struct SegTargets {
    torch::Tensor masks;
    torch::Tensor labeled;

    std::int64_t count() const;
};

/// Dice over the labeled rows only; a zero scalar when no row is labeled.
torch::Tensor labeled_dice_loss(const torch::Tensor& y_seg, const SegTargets& targets);

/// Unweighted generator-side terms as differentiable scalars.
struct GeneratorTerms {
    torch::Tensor seg;
    torch::Tensor rec;
    torch::Tensor lat;
    torch::Tensor cyc;
    torch::Tensor adv;
};

struct GeneratorLoss {
    /// Has no autograd history when every weighted term is switched off.
    torch::Tensor total;
    LossReport report;
};

/// Weighted sum of the terms; terms with zero weight are left out of the graph.
GeneratorLoss combine_generator_terms(const GeneratorTerms& terms, const LossWeights& weights);

/// Full generator objective for one step. `fake_score_A` = D_A(x_PA),
/// `fake_score_P` = D_P(x_AP).
GeneratorLoss total_generator_loss(const PresenceBundle& p, const AbsenceBundle& a,
                                   const torch::Tensor& fake_score_A,
                                   const torch::Tensor& fake_score_P, const SegTargets& targets,
                                   const LossWeights& weights);

}  // namespace transeg::losses
