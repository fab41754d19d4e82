#pragma once

#include "transeg/data/idx.hpp"
#include "transeg/data/image.hpp"
#include "transeg/data/manifest.hpp"
#include "transeg/rng.hpp"

#include <filesystem>

namespace transeg::data {

/// Canvas size, clutter density and labeling protocol for one fold.
struct ClutterSpec {
    int image_size = 48;
    int n_clutter = 8;
    int crop_size = 10;
    Fold fold = Fold::train;
    int digit_filter_for_labels = 9;
    double labeled_fraction = 0.01;

    static ClutterSpec simple48();
    static ClutterSpec hard48();
    static ClutterSpec large128();
    static ClutterSpec by_name(const std::string& name);

    void validate() const;
    nlohmann::json to_json() const;
};

/// A rectangular 8-bit sprite placed with its top-left corner at (top, left);
/// parts outside the canvas are clipped.
struct Sprite {
    int top = 0;
    int left = 0;
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> values;

    std::uint8_t at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// Composites sprites on a zero canvas. A pixel covered by the support
/// (value > 0) of one sprite takes that value; where supports overlap one of
/// the contributing sprites is chosen uniformly per pixel.
Gray8 dither_overlaps(int height, int width, const std::vector<Sprite>& layers, Rng& rng);

/// Sprites and output of one generated example.
struct ClutterExample {
    ExampleDomain domain = ExampleDomain::P;
    std::optional<int> digit_class;
    /// Index of the full digit in the fold's source set (P only).
    std::optional<std::size_t> digit_index;
    std::vector<Sprite> clutter;
    std::optional<Sprite> digit;
    Gray8 image;
    /// Support of the full digit before compositing, {0, 1} (P only).
    std::optional<Mask> mask;
};

/// Deterministic in (spec, source, master_seed, domain, index).
ClutterExample generate_clutter_example(const ClutterSpec& spec, const DigitSet& source,
                                        std::uint64_t master_seed, ExampleDomain domain,
                                        std::size_t index);

/// Writes `n_presence` P and `n_absence` A examples of one fold below
/// `out_dir/<fold>/{P,A}/` and returns their records (paths relative to
/// `out_dir`). Images store intensities mapped from [-1, 1] to bytes; masks are {0, 255}.
std::vector<ExampleRecord> generate_cluttered_fold(const ClutterSpec& spec, const DigitSet& source,
                                                   std::uint64_t master_seed,
                                                   std::size_t n_presence, std::size_t n_absence,
                                                   const std::filesystem::path& out_dir);

struct FoldSizes {
    std::size_t train = 50000;
    std::size_t valid = 5000;
    std::size_t test = 5000;
};

/// All three folds, the labeled subset of the training fold and
/// `out_dir/manifest.jsonl`. Sizes count examples per domain.
DatasetManifest generate_cluttered_mnist(const ClutterSpec& spec, const FoldDigits& digits,
                                         const FoldSizes& sizes, std::uint64_t master_seed,
                                         const std::filesystem::path& out_dir);

}  // namespace transeg::data
