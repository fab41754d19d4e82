#include "transeg/data/augment.hpp"

#include "transeg/errors.hpp"

#include <cmath>
#include <numbers>

namespace transeg::data {

namespace {

// Mirror about the first and last pixel centres: -1 -> 1, n -> n - 2.
double reflect(double t, int n) {
    if (n <= 1) return 0.0;
    const double last = n - 1;
    if (t >= 0.0 && t <= last) return t;
    const double period = 2.0 * last;
    t = std::fmod(std::fabs(t), period);
    return t > last ? period - t : t;
}

std::vector<double> control_knots(int g, int n) {
    std::vector<double> k(g);
    for (int i = 0; i < g; ++i) k[i] = g == 1 ? 0.0 : (n - 1) * static_cast<double>(i) / (g - 1);
    return k;
}

class SplineField {
public:
    SplineField(const AugmentParams& p, int height, int width)
        : g_(p.grid), ky_(control_knots(p.grid, height)), kx_(control_knots(p.grid, width)),
          dy_(p.grid_dy), dx_(p.grid_dx) {
        active_ = false;
        for (std::size_t i = 0; i < dy_.size(); ++i) active_ = active_ || dy_[i] != 0.0 || dx_[i] != 0.0;
    }

    bool active() const { return active_; }

    /// Interpolates along x within each control row, then along y.
    void displacement(double y, double x, double& oy, double& ox) const {
        std::vector<double> col_y(g_), col_x(g_), row(g_);
        for (int r = 0; r < g_; ++r) {
            row.assign(dy_.begin() + r * g_, dy_.begin() + (r + 1) * g_);
            col_y[r] = natural_cubic_spline(kx_, row, x);
            row.assign(dx_.begin() + r * g_, dx_.begin() + (r + 1) * g_);
            col_x[r] = natural_cubic_spline(kx_, row, x);
        }
        oy = natural_cubic_spline(ky_, col_y, y);
        ox = natural_cubic_spline(ky_, col_x, y);
    }

private:
    int g_;
    std::vector<double> ky_, kx_;
    std::vector<double> dy_, dx_;
    bool active_;
};

}  // namespace

AugmentConfig AugmentConfig::identity() {
    AugmentConfig c;
    c.max_rotation_deg = c.max_zoom_frac = c.max_intensity_shift_frac = c.spline_sigma = 0.0;
    c.hflip = c.vflip = false;
    return c;
}

void AugmentConfig::validate() const {
    if (max_rotation_deg < 0 || max_zoom_frac < 0 || max_intensity_shift_frac < 0 || spline_sigma < 0)
        throw ConfigError("augmentation magnitudes must be nonnegative");
    if (max_zoom_frac >= 1.0) throw ConfigError("zoom fraction must be below 1");
    if (spline_grid < 2) throw ConfigError("spline grid needs at least 2 control points per axis");
}

AugmentParams sample_augment_params(const AugmentConfig& cfg, Rng& rng) {
    cfg.validate();
    AugmentParams p;
    p.rotation_deg = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg);
    p.zoom = 1.0 + rng.uniform(-cfg.max_zoom_frac, cfg.max_zoom_frac);
    p.intensity_scale = 1.0 + rng.uniform(-cfg.max_intensity_shift_frac, cfg.max_intensity_shift_frac);
    p.flip_h = cfg.hflip && rng.coin();
    p.flip_v = cfg.vflip && rng.coin();
    p.grid = cfg.spline_grid;
    const auto n = static_cast<std::size_t>(p.grid) * p.grid;
    p.grid_dy.resize(n);
    p.grid_dx.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        p.grid_dy[i] = cfg.spline_sigma * rng.normal();
        p.grid_dx[i] = cfg.spline_sigma * rng.normal();
    }
    return p;
}

double natural_cubic_spline(const std::vector<double>& knots, const std::vector<double>& values,
                            double t) {
    const std::size_t n = knots.size();
    if (n == 0 || values.size() != n) throw ConfigError("spline needs matching, nonempty knots and values");
    if (n == 1) return values[0];
    // Second derivatives M with M[0] = M[n-1] = 0 (Thomas algorithm).
    std::vector<double> m(n, 0.0);
    if (n > 2) {
        std::vector<double> c(n, 0.0), d(n, 0.0);
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double h0 = knots[i] - knots[i - 1];
            const double h1 = knots[i + 1] - knots[i];
            const double a = h0 / 6.0, b = (h0 + h1) / 3.0, cc = h1 / 6.0;
            const double rhs = (values[i + 1] - values[i]) / h1 - (values[i] - values[i - 1]) / h0;
            const double denom = b - a * c[i - 1];
            c[i] = cc / denom;
            d[i] = (rhs - a * d[i - 1]) / denom;
        }
        for (std::size_t i = n - 2; i >= 1; --i) {
            m[i] = d[i] - c[i] * m[i + 1];
            if (i == 1) break;
        }
    }
    if (t <= knots.front() || t >= knots.back()) {
        const bool low = t <= knots.front();
        const std::size_t i = low ? 0 : n - 2;
        const double h = knots[i + 1] - knots[i];
        const double slope_lo = (values[i + 1] - values[i]) / h - h * (2.0 * m[i] + m[i + 1]) / 6.0;
        const double slope_hi = (values[i + 1] - values[i]) / h + h * (m[i] + 2.0 * m[i + 1]) / 6.0;
        return low ? values[0] + slope_lo * (t - knots[0])
                   : values[n - 1] + slope_hi * (t - knots[n - 1]);
    }
    std::size_t i = 0;
    while (i + 2 < n && t > knots[i + 1]) ++i;
    const double h = knots[i + 1] - knots[i];
    const double a = knots[i + 1] - t, b = t - knots[i];
    return m[i] * a * a * a / (6.0 * h) + m[i + 1] * b * b * b / (6.0 * h) +
           (values[i] / h - m[i] * h / 6.0) * a + (values[i + 1] / h - m[i + 1] * h / 6.0) * b;
}

Augmented apply_augment(const Image& image, const Mask* mask, const AugmentParams& p) {
    const int H = image.height, W = image.width;
    if (mask && (mask->height != H || mask->width != W))
        throw ShapeError("augment: image and mask spatial sizes differ");
    const auto n = static_cast<std::size_t>(p.grid) * p.grid;
    if (p.grid < 2 || p.grid_dy.size() != n || p.grid_dx.size() != n)
        throw ConfigError("augment: control grid size does not match its displacements");

    const double theta = p.rotation_deg * std::numbers::pi / 180.0;
    const double cs = std::cos(theta), sn = std::sin(theta);
    const double cy = (H - 1) / 2.0, cx = (W - 1) / 2.0;
    const SplineField field(p, H, W);

    Augmented out{Image(image.channels, H, W), std::nullopt};
    if (mask) out.mask = Mask(H, W);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            // Inverse rotation and zoom about the centre.
            const double py = y - cy, px = x - cx;
            double sy = (cs * py - sn * px) / p.zoom + cy;
            double sx = (sn * py + cs * px) / p.zoom + cx;
            if (p.flip_v) sy = (H - 1) - sy;
            if (p.flip_h) sx = (W - 1) - sx;
            if (field.active()) {
                double dy, dx;
                field.displacement(sy, sx, dy, dx);
                sy += dy;
                sx += dx;
            }
            sy = reflect(sy, H);
            sx = reflect(sx, W);

            const int y0 = static_cast<int>(std::floor(sy));
            const int x0 = static_cast<int>(std::floor(sx));
            const double fy = sy - y0, fx = sx - x0;
            const int y1 = static_cast<int>(reflect(y0 + 1, H));
            const int x1 = static_cast<int>(reflect(x0 + 1, W));
            for (int c = 0; c < image.channels; ++c) {
                const double v = (1 - fy) * ((1 - fx) * image.at(c, y0, x0) + fx * image.at(c, y0, x1)) +
                                 fy * ((1 - fx) * image.at(c, y1, x0) + fx * image.at(c, y1, x1));
                out.image.at(c, y, x) = static_cast<float>(v * p.intensity_scale);
            }
            if (mask) {
                const int ny = static_cast<int>(reflect(std::floor(sy + 0.5), H));
                const int nx = static_cast<int>(reflect(std::floor(sx + 0.5), W));
                out.mask->at(y, x) = mask->at(ny, nx);
            }
        }
    }
    return out;
}

Augmented augment(const Image& image, const Mask* mask, const AugmentConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    return apply_augment(image, mask, sample_augment_params(cfg, rng));
}

}  // namespace transeg::data
