#pragma once

#include "transeg/harness/dataset.hpp"
#include "transeg/translation_graph.hpp"

#include <json.hpp>

namespace transeg::harness {

inline constexpr double kDiceSmoothing = 1e-7;

/// Pixel counts of one prediction against its reference.
struct DiceCounts {
    double intersection = 0.0;
    double predicted = 0.0;
    double truth = 0.0;
};

/// (2 |y ∩ ŷ| + eps) / (|y| + |ŷ| + eps).
double dice_score(const DiceCounts& c, double eps = kDiceSmoothing);

/// Per-image counts of binary predictions vs masks, both (B, 1, H, W).
std::vector<DiceCounts> dice_counts(const torch::Tensor& pred, const torch::Tensor& truth);

struct EvalResult {
    /// Mean of per-image Dice; the primary metric.
    double dice_mean_per_image = 0.0;
    /// Dice of pooled pixel counts over the fold.
    double dice_aggregate = 0.0;
    std::size_t n = 0;
    /// Mean |x_P - x_PA| inside and outside the reference mask, averaged over
    /// images (proposed variant only).
    std::optional<double> residual_inside;
    std::optional<double> residual_outside;

    std::optional<double> residual_ratio() const;
    nlohmann::json to_json() const;
};

EvalResult summarize_dice(const std::vector<DiceCounts>& per_image);

/// Thresholded segmentation of every record (all must carry masks). Throws
/// DataError for an empty list.
EvalResult evaluate(SegTransModelImpl& model, const ExampleStore& store,
                    const std::vector<std::size_t>& records, double threshold = 0.5, int batch_size = 20);

}  // namespace transeg::harness
