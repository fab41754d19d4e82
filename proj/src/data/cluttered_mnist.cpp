#include "transeg/data/cluttered_mnist.hpp"

#include "transeg/data/png_io.hpp"
#include "transeg/errors.hpp"

#include <cstdio>

namespace transeg::data {

namespace {

constexpr int kMaxCropAttempts = 64;

std::uint64_t fold_key(Fold f) { return static_cast<std::uint64_t>(f); }
std::uint64_t domain_key(ExampleDomain d) { return d == ExampleDomain::P ? 1 : 2; }

Sprite digit_sprite(const DigitSet& src, std::size_t i) {
    Sprite s;
    s.height = src.rows;
    s.width = src.cols;
    const auto* px = src.digit(i);
    s.values.assign(px, px + static_cast<std::size_t>(src.rows) * src.cols);
    return s;
}

// Rejection-samples a crop with at least one nonzero pixel. `exclude` keeps the
// P example's own digit out of its clutter.
Sprite random_crop(const ClutterSpec& spec, const DigitSet& src, Rng& rng,
                   std::optional<std::size_t> exclude) {
    const int k = spec.crop_size;
    for (int attempt = 0; attempt < kMaxCropAttempts; ++attempt) {
        std::size_t d = rng.below(src.size());
        if (exclude && d == *exclude) continue;
        const int oy = static_cast<int>(rng.between(0, src.rows - k));
        const int ox = static_cast<int>(rng.between(0, src.cols - k));
        Sprite s;
        s.height = s.width = k;
        s.values.resize(static_cast<std::size_t>(k) * k);
        bool any = false;
        const auto* px = src.digit(d);
        for (int y = 0; y < k; ++y) {
            for (int x = 0; x < k; ++x) {
                const auto v = px[(oy + y) * src.cols + ox + x];
                s.values[y * k + x] = v;
                any = any || v > 0;
            }
        }
        if (any) return s;
    }
    throw DataError("fold too small to source clutter crops: no nonempty " + std::to_string(k) +
                    "x" + std::to_string(k) + " crop found in " + std::to_string(kMaxCropAttempts) +
                    " draws");
}

std::string example_name(std::size_t index, const char* suffix) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06zu%s.png", index, suffix);
    return buf;
}

}  // namespace

ClutterSpec ClutterSpec::simple48() { return ClutterSpec{}; }

ClutterSpec ClutterSpec::hard48() {
    ClutterSpec s;
    s.n_clutter = 24;
    return s;
}

ClutterSpec ClutterSpec::large128() {
    ClutterSpec s;
    s.image_size = 128;
    s.n_clutter = 80;
    return s;
}

ClutterSpec ClutterSpec::by_name(const std::string& name) {
    if (name == "simple48") return simple48();
    if (name == "hard48") return hard48();
    if (name == "large128") return large128();
    throw ConfigError("unknown clutter preset '" + name + "' (simple48, hard48, large128)");
}

void ClutterSpec::validate() const {
    if (image_size < 28) throw ConfigError("canvas must hold a full 28x28 digit");
    if (n_clutter < 0) throw ConfigError("clutter count must be nonnegative");
    if (crop_size < 1 || crop_size > 28) throw ConfigError("crop size must lie in [1, 28]");
    if (!(labeled_fraction >= 0.0 && labeled_fraction <= 1.0))
        throw ConfigError("labeled fraction must lie in [0, 1]");
}

nlohmann::json ClutterSpec::to_json() const {
    return {{"image_size", image_size},
            {"n_clutter", n_clutter},
            {"crop_size", crop_size},
            {"digit_filter_for_labels", digit_filter_for_labels},
            {"labeled_fraction", labeled_fraction}};
}

Gray8 dither_overlaps(int height, int width, const std::vector<Sprite>& layers, Rng& rng) {
    Gray8 out{height, width, std::vector<std::uint8_t>(static_cast<std::size_t>(height) * width, 0)};
    // Per pixel: the number of covering sprites and the value chosen so far,
    // filled as a streaming uniform choice (reservoir of size one).
    std::vector<std::uint32_t> count(out.pixels.size(), 0);
    for (const auto& s : layers) {
        for (int y = 0; y < s.height; ++y) {
            const int cy = s.top + y;
            if (cy < 0 || cy >= height) continue;
            for (int x = 0; x < s.width; ++x) {
                const int cx = s.left + x;
                if (cx < 0 || cx >= width) continue;
                const auto v = s.at(y, x);
                if (v == 0) continue;
                const std::size_t i = static_cast<std::size_t>(cy) * width + cx;
                if (++count[i] == 1 || rng.below(count[i]) == 0) out.pixels[i] = v;
            }
        }
    }
    return out;
}

ClutterExample generate_clutter_example(const ClutterSpec& spec, const DigitSet& source,
                                        std::uint64_t master_seed, ExampleDomain domain,
                                        std::size_t index) {
    spec.validate();
    if (source.size() < 2) throw DataError("fold too small to source clutter crops: fewer than 2 digits");
    if (source.rows != 28 || source.cols != 28) throw DataError("source digits must be 28x28");
    Rng rng(derive_seed(master_seed, {fold_key(spec.fold), domain_key(domain), index}));

    ClutterExample ex;
    ex.domain = domain;
    const int size = spec.image_size;
    if (domain == ExampleDomain::P) {
        ex.digit_index = rng.below(source.size());
        ex.digit_class = source.labels[*ex.digit_index];
        Sprite d = digit_sprite(source, *ex.digit_index);
        d.top = static_cast<int>(rng.between(0, size - d.height));
        d.left = static_cast<int>(rng.between(0, size - d.width));
        Mask m(size, size);
        for (int y = 0; y < d.height; ++y)
            for (int x = 0; x < d.width; ++x) m.at(d.top + y, d.left + x) = d.at(y, x) > 0;
        ex.digit = std::move(d);
        ex.mask = std::move(m);
    }
    const int half = spec.crop_size / 2;
    for (int c = 0; c < spec.n_clutter; ++c) {
        Sprite s = random_crop(spec, source, rng, ex.digit_index);
        s.top = static_cast<int>(rng.between(-half, size - half));
        s.left = static_cast<int>(rng.between(-half, size - half));
        ex.clutter.push_back(std::move(s));
    }
    std::vector<Sprite> layers = ex.clutter;
    if (ex.digit) layers.push_back(*ex.digit);
    ex.image = dither_overlaps(size, size, layers, rng);
    return ex;
}

std::vector<ExampleRecord> generate_cluttered_fold(const ClutterSpec& spec, const DigitSet& source,
                                                   std::uint64_t master_seed,
                                                   std::size_t n_presence, std::size_t n_absence,
                                                   const std::filesystem::path& out_dir) {
    std::vector<ExampleRecord> records;
    records.reserve(n_presence + n_absence);
    for (auto domain : {ExampleDomain::P, ExampleDomain::A}) {
        const auto n = domain == ExampleDomain::P ? n_presence : n_absence;
        const std::filesystem::path rel = std::filesystem::path(to_string(spec.fold)) / to_string(domain);
        std::filesystem::create_directories(out_dir / rel);
        for (std::size_t i = 0; i < n; ++i) {
            auto ex = generate_clutter_example(spec, source, master_seed, domain, i);
            ExampleRecord r;
            r.domain = domain;
            r.fold = spec.fold;
            r.n_clutter = static_cast<int>(ex.clutter.size());
            r.image_path = (rel / example_name(i, "")).generic_string();
            // Raw byte intensities are the [-1, 1] encoding: 0 maps to -1, 255 to 1.
            write_png_gray8(out_dir / r.image_path, ex.image);
            if (ex.mask) {
                r.digit_class = ex.digit_class;
                r.mask_path = (rel / example_name(i, "_mask")).generic_string();
                write_png_gray8(out_dir / *r.mask_path, mask_to_gray8(*ex.mask));
            }
            records.push_back(std::move(r));
        }
    }
    return records;
}

DatasetManifest generate_cluttered_mnist(const ClutterSpec& spec, const FoldDigits& digits,
                                         const FoldSizes& sizes, std::uint64_t master_seed,
                                         const std::filesystem::path& out_dir) {
    spec.validate();
    DatasetManifest m;
    m.header = {{"format", "transeg-manifest"},
                {"version", 1},
                {"generator", "cluttered_mnist"},
                {"spec", spec.to_json()},
                {"master_seed", master_seed},
                {"intensity_range", {-1.0, 1.0}},
                {"sizes", {{"train", sizes.train}, {"valid", sizes.valid}, {"test", sizes.test}}}};
    const std::pair<Fold, std::pair<const DigitSet*, std::size_t>> folds[] = {
        {Fold::train, {&digits.train, sizes.train}},
        {Fold::valid, {&digits.valid, sizes.valid}},
        {Fold::test, {&digits.test, sizes.test}}};
    for (const auto& [fold, src] : folds) {
        ClutterSpec fs = spec;
        fs.fold = fold;
        auto recs = generate_cluttered_fold(fs, *src.first, master_seed, src.second, src.second, out_dir);
        m.records.insert(m.records.end(), recs.begin(), recs.end());
    }
    m = select_labeled_subset(m, spec.labeled_fraction, spec.digit_filter_for_labels, master_seed);
    write_manifest(out_dir / "manifest.jsonl", m);
    return m;
}

}  // namespace transeg::data
