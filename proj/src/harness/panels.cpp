#include "transeg/harness/panels.hpp"

#include "transeg/data/png_io.hpp"
#include "transeg/errors.hpp"

#include <algorithm>
#include <cmath>

namespace transeg::harness {

namespace {

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

void require_proposed(const SegTransModelImpl& model) {
    if (model.kind() != VariantKind::proposed) throw ConfigError("panels need the proposed variant");
}

}  // namespace

data::Gray8 render_panel(const std::vector<torch::Tensor>& rows, const std::vector<TileKind>& kinds,
                         const PanelOptions& opts) {
    if (rows.empty() || rows.size() != kinds.size()) throw ShapeError("panel needs one tile kind per row");
    const auto n = rows[0].size(0), c = rows[0].size(1), h = rows[0].size(2), w = rows[0].size(3);
    for (const auto& r : rows) {
        if (r.dim() != 4 || r.size(0) != n || r.size(2) != h || r.size(3) != w)
            throw ShapeError("panel rows differ in sample count or tile size");
    }
    double signed_scale = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (kinds[i] == TileKind::signed_residual)
            signed_scale = std::max(signed_scale, rows[i].abs().max().item<double>());
    }
    if (!(signed_scale > 0.0) || !std::isfinite(signed_scale)) signed_scale = 1.0;

    const int g = opts.gap;
    const auto cols = n * c;
    data::Gray8 out;
    out.height = static_cast<int>(rows.size() * h + (rows.size() + 1) * g);
    out.width = static_cast<int>(cols * w + (cols + 1) * g);
    out.pixels.assign(static_cast<std::size_t>(out.height) * out.width, 255);

    for (std::size_t r = 0; r < rows.size(); ++r) {
        auto t = rows[r].detach().to(torch::kFloat64).contiguous();
        const auto rc = t.size(1);
        auto acc = t.accessor<double, 4>();
        for (std::int64_t s = 0; s < n; ++s) {
            for (std::int64_t ch = 0; ch < c; ++ch) {
                const auto src_ch = std::min(ch, rc - 1);
                const auto top = static_cast<int>(g + r * (h + g));
                const auto left = static_cast<int>(g + (s * c + ch) * (w + g));
                for (std::int64_t y = 0; y < h; ++y) {
                    for (std::int64_t x = 0; x < w; ++x) {
                        const double v = acc[s][src_ch][y][x];
                        double u = 0.0;
                        switch (kinds[r]) {
                            case TileKind::image: u = (v / opts.display_range + 1.0) / 2.0; break;
                            case TileKind::signed_residual: u = 0.5 + 0.5 * v / signed_scale; break;
                            case TileKind::probability: u = v; break;
                        }
                        out.pixels[static_cast<std::size_t>(top + y) * out.width + left + x] =
                            std::isfinite(u) ? to_byte(u) : 0;
                    }
                }
            }
        }
    }
    return out;
}

data::Gray8 presence_panel(SegTransModelImpl& model, const torch::Tensor& x_P, const PanelOptions& opts) {
    require_proposed(model);
    torch::NoGradGuard no_grad;
    auto enc = model.encode(x_P);
    auto x_PA = model.decode_common(enc.latent.common, enc.skips);
    auto delta = model.decode_residual(enc.latent.common, enc.latent.unique, enc.skips);
    auto y = model.decode_segmentation(enc.latent.common, enc.latent.unique, enc.skips, *model.seg_norm);
    return render_panel({x_P, x_PA, delta, y},
                        {TileKind::image, TileKind::image, TileKind::signed_residual, TileKind::probability}, opts);
}

data::Gray8 absence_panel(SegTransModelImpl& model, const torch::Tensor& x_A, std::uint64_t sampling_seed,
                          const PanelOptions& opts) {
    require_proposed(model);
    torch::NoGradGuard no_grad;
    auto gen = make_generator(sampling_seed);
    auto b = forward_absence(model, x_A, gen, /*cycle_enabled=*/true);
    return render_panel({x_A, b.x_AA, b.x_AP, b.x_APA},
                        {TileKind::image, TileKind::image, TileKind::image, TileKind::image}, opts);
}

void emit_panels(SegTransModelImpl& model, const torch::Tensor& x_P, const torch::Tensor& x_A,
                 const std::filesystem::path& prefix, std::uint64_t sampling_seed, const PanelOptions& opts) {
    auto path_for = [&](const char* suffix) {
        auto p = prefix;
        p += suffix;
        return p;
    };
    if (prefix.has_parent_path()) std::filesystem::create_directories(prefix.parent_path());
    data::write_png_gray8(path_for("_P.png"), presence_panel(model, x_P, opts));
    if (x_A.defined()) data::write_png_gray8(path_for("_A.png"), absence_panel(model, x_A, sampling_seed, opts));
}

}  // namespace transeg::harness
