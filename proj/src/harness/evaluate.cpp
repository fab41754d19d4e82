#include "transeg/harness/evaluate.hpp"

#include "transeg/errors.hpp"

#include <algorithm>

namespace transeg::harness {

double dice_score(const DiceCounts& c, double eps) {
    return (2.0 * c.intersection + eps) / (c.predicted + c.truth + eps);
}

std::vector<DiceCounts> dice_counts(const torch::Tensor& pred, const torch::Tensor& truth) {
    if (pred.sizes() != truth.sizes()) throw ShapeError("prediction and mask shapes differ");
    auto p = pred.to(torch::kFloat64).flatten(1);
    auto t = truth.to(torch::kFloat64).flatten(1);
    auto inter = (p * t).sum(1), ps = p.sum(1), ts = t.sum(1);
    std::vector<DiceCounts> out(static_cast<std::size_t>(pred.size(0)));
    for (std::size_t b = 0; b < out.size(); ++b) {
        const auto i = static_cast<std::int64_t>(b);
        out[b] = {inter[i].item<double>(), ps[i].item<double>(), ts[i].item<double>()};
    }
    return out;
}

std::optional<double> EvalResult::residual_ratio() const {
    if (!residual_inside || !residual_outside || *residual_outside <= 0.0) return std::nullopt;
    return *residual_inside / *residual_outside;
}

nlohmann::json EvalResult::to_json() const {
    nlohmann::json j{{"dice_mean_per_image", dice_mean_per_image}, {"dice_aggregate", dice_aggregate}, {"n", n}};
    if (residual_inside) j["residual_inside"] = *residual_inside;
    if (residual_outside) j["residual_outside"] = *residual_outside;
    if (auto r = residual_ratio()) j["residual_ratio"] = *r;
    return j;
}

EvalResult summarize_dice(const std::vector<DiceCounts>& per_image) {
    if (per_image.empty()) throw DataError("cannot evaluate an empty fold");
    EvalResult r;
    r.n = per_image.size();
    DiceCounts pooled;
    double sum = 0.0;
    for (const auto& c : per_image) {
        sum += dice_score(c);
        pooled.intersection += c.intersection;
        pooled.predicted += c.predicted;
        pooled.truth += c.truth;
    }
    r.dice_mean_per_image = sum / static_cast<double>(r.n);
    r.dice_aggregate = dice_score(pooled);
    return r;
}

EvalResult evaluate(SegTransModelImpl& model, const ExampleStore& store,
                    const std::vector<std::size_t>& records, double threshold, int batch_size) {
    if (records.empty()) throw DataError("cannot evaluate an empty fold");
    torch::NoGradGuard no_grad;
    std::vector<DiceCounts> counts;
    double inside = 0.0, outside = 0.0;
    const bool proposed = model.kind() == VariantKind::proposed;
    for (std::size_t start = 0; start < records.size(); start += static_cast<std::size_t>(batch_size)) {
        const auto end = std::min(records.size(), start + static_cast<std::size_t>(batch_size));
        std::vector<std::size_t> chunk(records.begin() + static_cast<std::ptrdiff_t>(start),
                                       records.begin() + static_cast<std::ptrdiff_t>(end));
        for (auto i : chunk) {
            if (!store.record(i).mask_path)
                throw DataError("evaluation record " + store.record(i).image_path + " has no mask");
        }
        auto batch = load_batch(store, chunk);
        torch::Tensor y;
        if (proposed) {
            auto enc = model.encode(batch.images);
            y = model.decode_segmentation(enc.latent.common, enc.latent.unique, enc.skips, *model.seg_norm);
            auto x_PA = model.decode_common(enc.latent.common, enc.skips);
            auto diff = (batch.images - x_PA).abs().mean(1, /*keepdim=*/true).to(torch::kFloat64);
            auto m = batch.masks.to(torch::kFloat64);
            auto in = (diff * m).flatten(1).sum(1) / m.flatten(1).sum(1).clamp_min(1.0);
            auto out = (diff * (1 - m)).flatten(1).sum(1) / (1 - m).flatten(1).sum(1).clamp_min(1.0);
            inside += in.sum().item<double>();
            outside += out.sum().item<double>();
        } else {
            y = model.segmentation_probabilities(batch.images);
        }
        auto c = dice_counts((y >= threshold).to(torch::kFloat32), batch.masks);
        counts.insert(counts.end(), c.begin(), c.end());
    }
    auto r = summarize_dice(counts);
    if (proposed) {
        r.residual_inside = inside / static_cast<double>(r.n);
        r.residual_outside = outside / static_cast<double>(r.n);
    }
    return r;
}

}  // namespace transeg::harness
