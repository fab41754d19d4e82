#pragma once

#include "transeg/data/image.hpp"
#include "transeg/rng.hpp"

#include <optional>
#include <vector>

namespace transeg::data {

/// Magnitudes of the random geometric and intensity perturbations. All zero
/// with both flips off is the identity.
struct AugmentConfig {
    double max_rotation_deg = 3.0;
    double max_zoom_frac = 0.10;
    double max_intensity_shift_frac = 0.10;
    bool hflip = true;
    bool vflip = true;
    int spline_grid = 3;
    /// Standard deviation (pixels) of each control-point displacement.
    double spline_sigma = 5.0;

    static AugmentConfig identity();
    void validate() const;
};

/// One draw of the transform.
struct AugmentParams {
    double rotation_deg = 0.0;
    double zoom = 1.0;
    double intensity_scale = 1.0;
    bool flip_h = false;
    bool flip_v = false;
    int grid = 3;
    /// Row-major control-point displacements (grid x grid each), pixels.
    std::vector<double> grid_dy;
    std::vector<double> grid_dx;
};

AugmentParams sample_augment_params(const AugmentConfig& cfg, Rng& rng);

/// Natural cubic spline through (knots[i], values[i]) evaluated at t; linear
/// extrapolation outside the knot range.
double natural_cubic_spline(const std::vector<double>& knots, const std::vector<double>& values,
                            double t);

struct Augmented {
    Image image;
    std::optional<Mask> mask;
};

/// Output pixel p samples the input at warp(flip(rotate_zoom(p))), where the
/// rotation and zoom act about the image centre and the warp adds the
/// tensor-product spline displacement interpolated from the control grid
/// spanning the image. Images are sampled bilinearly, masks by nearest
/// neighbour; coordinates outside the frame are mirrored back inside.
Augmented apply_augment(const Image& image, const Mask* mask, const AugmentParams& params);

Augmented augment(const Image& image, const Mask* mask, const AugmentConfig& cfg, std::uint64_t seed);

}  // namespace transeg::data
