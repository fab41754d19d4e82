#pragma once

#include "transeg/data/image.hpp"
#include "transeg/translation_graph.hpp"

#include <filesystem>

namespace transeg::harness {

enum class TileKind {
    /// Values in [-range, range] map to black..white, clipped.
    image,
    /// Symmetric about zero: 0 is mid-gray, +-max|v| over the row set are white/black.
    signed_residual,
    /// Values in [0, 1] map to black..white.
    probability,
};

struct PanelOptions {
    double display_range = 1.0;
    int gap = 2;
};

/// Grid with one row per tensor (each (N, C, H, W)); each sample spans C
/// tiles, one per channel. Rows must agree in N, H and W.
data::Gray8 render_panel(const std::vector<torch::Tensor>& rows, const std::vector<TileKind>& kinds,
                         const PanelOptions& opts = {});

/// Rows x_P, x_PA, residual, y_seg.
data::Gray8 presence_panel(SegTransModelImpl& model, const torch::Tensor& x_P, const PanelOptions& opts = {});

/// Rows x_A, x_AA, x_AP, x_APA; the unique code comes from `sampling_seed`.
data::Gray8 absence_panel(SegTransModelImpl& model, const torch::Tensor& x_A, std::uint64_t sampling_seed,
                          const PanelOptions& opts = {});

/// Writes `<prefix>_P.png` and, when x_A is defined, `<prefix>_A.png`.
void emit_panels(SegTransModelImpl& model, const torch::Tensor& x_P, const torch::Tensor& x_A,
                 const std::filesystem::path& prefix, std::uint64_t sampling_seed = 0,
                 const PanelOptions& opts = {});

}  // namespace transeg::harness
