#include "support/test_support.hpp"

#include "transeg/data/augment.hpp"
#include "transeg/data/brats.hpp"
#include "transeg/data/cluttered_mnist.hpp"
#include "transeg/data/idx.hpp"
#include "transeg/data/manifest.hpp"
#include "transeg/data/nifti.hpp"
#include "transeg/data/png_io.hpp"
#include "transeg/errors.hpp"
#include "transeg/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

namespace transeg::data {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

/// Concatenated bytes of every regular file below `dir`, in path order.
std::string tree_bytes(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::string all;
    for (const auto& f : files) all += fs::relative(f, dir).string() + '\0' + slurp(f);
    return all;
}

// --- image / png / idx -----------------------------------------------------

TEST(Image, ByteMappingRoundTrips) {
    Gray8 g{2, 3, {0, 1, 127, 128, 254, 255}};
    auto img = gray8_to_image(g);
    EXPECT_FLOAT_EQ(img.at(0, 0, 0), -1.0f);
    EXPECT_FLOAT_EQ(img.at(0, 1, 2), 1.0f);
    EXPECT_EQ(image_to_gray8(img).pixels, g.pixels);
    auto m = gray8_to_mask(g);
    EXPECT_EQ(m.count(), 5u);
    EXPECT_EQ(mask_to_gray8(m).pixels[1], 255);
}

TEST(Png, RoundTripAndDeterministicBytes) {
    auto dir = testing::scratch_dir("png");
    Gray8 g{5, 7, {}};
    for (int i = 0; i < 35; ++i) g.pixels.push_back(static_cast<std::uint8_t>(i * 7));
    write_png_gray8(dir / "a.png", g);
    write_png_gray8(dir / "b.png", g);
    EXPECT_EQ(slurp(dir / "a.png"), slurp(dir / "b.png"));
    auto back = read_png_gray8(dir / "a.png");
    EXPECT_EQ(back.height, 5);
    EXPECT_EQ(back.width, 7);
    EXPECT_EQ(back.pixels, g.pixels);
    EXPECT_THROW(read_png_gray8(dir / "missing.png"), DataError);
    std::ofstream(dir / "junk.png") << "not a png";
    EXPECT_THROW(read_png_gray8(dir / "junk.png"), DataError);
}

TEST(Idx, RoundTripAndValidation) {
    auto dir = testing::scratch_dir("idx");
    auto set = testing::synthetic_digits(12, 3);
    write_idx(set, dir / "img", dir / "lbl");
    auto back = read_idx(dir / "img", dir / "lbl");
    EXPECT_EQ(back.pixels, set.pixels);
    EXPECT_EQ(back.labels, set.labels);
    EXPECT_THROW(read_idx(dir / "lbl", dir / "img"), DataError);

    auto folds = split_folds(set, set.slice(0, 4), 3);
    EXPECT_EQ(folds.train.size(), 9u);
    EXPECT_EQ(folds.valid.size(), 3u);
    EXPECT_EQ(folds.valid.labels[0], set.labels[9]);
    EXPECT_EQ(folds.test.size(), 4u);
    EXPECT_THROW(split_folds(set, set, 12), DataError);
}

// --- cluttered MNIST -------------------------------------------------------

Sprite full_sprite(std::uint8_t v, int size = 4) {
    return Sprite{0, 0, size, size, std::vector<std::uint8_t>(static_cast<std::size_t>(size) * size, v)};
}

TEST(Dither, SingleSpriteCopiesValues) {
    Rng rng(1);
    Sprite s{1, 2, 2, 2, {5, 0, 7, 9}};
    auto g = dither_overlaps(4, 5, {s}, rng);
    EXPECT_EQ(g.pixels[1 * 5 + 2], 5);
    EXPECT_EQ(g.pixels[1 * 5 + 3], 0);
    EXPECT_EQ(g.pixels[2 * 5 + 3], 9);
    Sprite clipped{-1, -1, 2, 2, {1, 2, 3, 4}};
    EXPECT_EQ(dither_overlaps(4, 5, {clipped}, rng).pixels[0], 4);
}

TEST(Dither, OverlapChoiceIsUniform) {
    // Three sprites cover every pixel; counts per sprite should be Binomial(n, 1/3).
    std::map<std::uint8_t, int> counts;
    int n = 0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Rng rng(seed);
        auto g = dither_overlaps(4, 4, {full_sprite(10), full_sprite(20), full_sprite(30)}, rng);
        for (auto v : g.pixels) ++counts[v];
        n += 16;
    }
    const double sd = std::sqrt(n * (1.0 / 3) * (2.0 / 3));
    for (std::uint8_t v : {10, 20, 30}) EXPECT_LT(std::abs(counts[v] - n / 3.0), 3 * sd) << int(v);
    EXPECT_EQ(counts.size(), 3u);
}

TEST(Dither, TwoLayerOverlapMeanIsMidpoint) {
    // Each overlap pixel is a or b with probability 1/2, so the mean has sd (b - a) / (2 sqrt(n)).
    const double a = 40, b = 200;
    Rng rng(3);
    auto g = dither_overlaps(64, 64, {full_sprite(40, 64), full_sprite(200, 64)}, rng);
    double sum = 0.0;
    for (auto v : g.pixels) sum += v;
    const double n = static_cast<double>(g.pixels.size());
    EXPECT_NEAR(sum / n, (a + b) / 2, 3 * (b - a) / (2 * std::sqrt(n)));
}

/// Every foreground pixel must come from a sprite covering it with that value.
bool explained_by_sprites(const ClutterExample& ex) {
    std::vector<const Sprite*> all;
    for (const auto& s : ex.clutter) all.push_back(&s);
    if (ex.digit) all.push_back(&*ex.digit);
    for (int y = 0; y < ex.image.height; ++y) {
        for (int x = 0; x < ex.image.width; ++x) {
            const auto v = ex.image.pixels[y * ex.image.width + x];
            bool covered = false, matched = v == 0;
            for (const auto* s : all) {
                const int sy = y - s->top, sx = x - s->left;
                if (sy < 0 || sx < 0 || sy >= s->height || sx >= s->width || s->at(sy, sx) == 0) continue;
                covered = true;
                matched = matched || s->at(sy, sx) == v;
            }
            if (!matched || (v == 0 && covered)) return false;
        }
    }
    return true;
}

TEST(Clutter, ExamplesHonorSpec) {
    auto digits = testing::synthetic_digits(60, 9);
    for (const auto& spec : {ClutterSpec::simple48(), ClutterSpec::hard48(), ClutterSpec::large128()}) {
        for (std::size_t i = 0; i < 10; ++i) {
            auto p = generate_clutter_example(spec, digits, 4, ExampleDomain::P, i);
            EXPECT_EQ(static_cast<int>(p.clutter.size()), spec.n_clutter);
            ASSERT_TRUE(p.digit && p.mask && p.digit_class);
            EXPECT_EQ(p.image.height, spec.image_size);
            std::size_t support = 0;
            for (auto v : p.digit->values) support += v > 0;
            EXPECT_EQ(p.mask->count(), support);
            EXPECT_TRUE(explained_by_sprites(p));
            for (const auto& c : p.clutter) {
                EXPECT_EQ(c.height, spec.crop_size);
                EXPECT_TRUE(std::any_of(c.values.begin(), c.values.end(), [](auto v) { return v > 0; }));
                EXPECT_GE(c.top, -spec.crop_size / 2);
                EXPECT_LE(c.top, spec.image_size - spec.crop_size / 2);
            }

            auto a = generate_clutter_example(spec, digits, 4, ExampleDomain::A, i);
            EXPECT_FALSE(a.digit || a.mask || a.digit_class);
            EXPECT_EQ(static_cast<int>(a.clutter.size()), spec.n_clutter);
            EXPECT_TRUE(explained_by_sprites(a));
        }
    }
    EXPECT_EQ(ClutterSpec::hard48().n_clutter, 24);
    EXPECT_EQ(ClutterSpec::large128().n_clutter, 80);
    EXPECT_THROW(ClutterSpec::by_name("medium"), ConfigError);
}

TEST(Clutter, ExampleIsPureInItsKeys) {
    auto digits = testing::synthetic_digits(30, 1);
    auto spec = ClutterSpec::simple48();
    auto a = generate_clutter_example(spec, digits, 11, ExampleDomain::P, 5);
    auto b = generate_clutter_example(spec, digits, 11, ExampleDomain::P, 5);
    auto c = generate_clutter_example(spec, digits, 11, ExampleDomain::P, 6);
    EXPECT_EQ(a.image.pixels, b.image.pixels);
    EXPECT_NE(a.image.pixels, c.image.pixels);
    EXPECT_THROW(generate_clutter_example(spec, digits.slice(0, 1), 0, ExampleDomain::A, 0), DataError);
}

TEST(Clutter, FullDatasetProtocol) {
    auto digits = testing::synthetic_digits(400, 2);
    FoldDigits folds = split_folds(digits.slice(0, 300), digits.slice(300, 400), 50);
    FoldSizes sizes{300, 30, 30};
    auto dir = testing::scratch_dir("clutter_a");
    auto m = generate_cluttered_mnist(ClutterSpec::simple48(), folds, sizes, 17, dir);

    EXPECT_TRUE(validate_manifest(m, dir).ok());
    EXPECT_EQ(m.select(Fold::train, ExampleDomain::P).size(), 300u);
    EXPECT_EQ(m.select(Fold::test, ExampleDomain::A).size(), 30u);
    std::size_t labeled = 0;
    for (const auto& r : m.records) {
        EXPECT_EQ(r.n_clutter, 8);
        if (!r.labeled) continue;
        ++labeled;
        EXPECT_EQ(r.digit_class, 9);
        EXPECT_EQ(r.fold, Fold::train);
    }
    EXPECT_EQ(labeled, 3u);

    auto reread = read_manifest(dir / "manifest.jsonl");
    EXPECT_EQ(reread.records.size(), m.records.size());
    EXPECT_EQ(reread.header, m.header);

    auto dir2 = testing::scratch_dir("clutter_b");
    generate_cluttered_mnist(ClutterSpec::simple48(), folds, sizes, 17, dir2);
    EXPECT_EQ(tree_bytes(dir), tree_bytes(dir2));
    fs::remove_all(dir2);
    fs::remove_all(dir);
}

TEST(Clutter, HardCoversMoreThanSimple) {
    auto digits = testing::synthetic_digits(100, 5);
    auto coverage = [&](const ClutterSpec& spec) {
        double covered = 0.0;
        for (std::size_t i = 0; i < 50; ++i) {
            auto ex = generate_clutter_example(spec, digits, 3, ExampleDomain::A, i);
            for (auto v : ex.image.pixels) covered += v > 0;
        }
        return covered / (50.0 * spec.image_size * spec.image_size);
    };
    EXPECT_GT(coverage(ClutterSpec::hard48()), coverage(ClutterSpec::simple48()));
}

// --- manifest --------------------------------------------------------------

DatasetManifest small_manifest() {
    DatasetManifest m;
    for (int i = 0; i < 10; ++i) {
        ExampleRecord r;
        r.image_path = "p" + std::to_string(i) + ".png";
        r.mask_path = "p" + std::to_string(i) + "_mask.png";
        r.digit_class = i;
        m.records.push_back(r);
    }
    ExampleRecord a;
    a.image_path = "a.png";
    a.domain = ExampleDomain::A;
    m.records.push_back(a);
    return m;
}

TEST(Manifest, ValidationFindsViolations) {
    auto m = small_manifest();
    EXPECT_TRUE(validate_manifest(m).ok());
    m.records.back().mask_path = "x.png";
    m.records[0].fold = Fold::valid;
    m.records[0].labeled = true;
    m.records[1].mask_path.reset();
    auto report = validate_manifest(m);
    EXPECT_EQ(report.problems.size(), 3u);
    auto dir = testing::scratch_dir("manifest");
    EXPECT_FALSE(validate_manifest(small_manifest(), dir).ok());
}

TEST(Manifest, LabeledSubsetCountsAndFilter) {
    auto m = small_manifest();
    for (auto& r : m.records)
        if (r.domain == ExampleDomain::P) r.digit_class = 9;
    auto l = select_labeled_subset(m, 0.25, 9, 1);
    std::size_t n = 0;
    for (const auto& r : l.records) n += r.labeled;
    EXPECT_EQ(n, 3u);  // round(0.25 * 10)
    EXPECT_EQ(select_labeled_subset(m, 0.25, 9, 1).records[0].labeled, l.records[0].labeled);

    auto few = small_manifest();
    try {
        select_labeled_subset(few, 0.25, 9, 1);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("3"), std::string::npos);
    }
}

TEST(Manifest, EnumNames) {
    EXPECT_EQ(fold_from_string(to_string(Fold::valid)), Fold::valid);
    EXPECT_EQ(domain_from_string("A"), ExampleDomain::A);
    EXPECT_THROW(fold_from_string("dev"), DataError);
}

// --- augmentation ----------------------------------------------------------

Image digit_canvas(std::uint64_t seed, Mask* mask) {
    auto d = testing::synthetic_digits(1, seed);
    Image img(1, 48, 48, -1.0f);
    *mask = Mask(48, 48);
    for (int y = 0; y < 28; ++y) {
        for (int x = 0; x < 28; ++x) {
            const auto v = d.pixels[y * 28 + x];
            img.at(0, y + 10, x + 10) = v / 127.5f - 1.0f;
            mask->at(y + 10, x + 10) = v > 0;
        }
    }
    return img;
}

TEST(Augment, ZeroConfigIsExactIdentity) {
    Mask mask;
    auto img = digit_canvas(1, &mask);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto out = augment(img, &mask, AugmentConfig::identity(), seed);
        EXPECT_EQ(out.image.pixels, img.pixels);
        EXPECT_EQ(out.mask->pixels, mask.pixels);
    }
}

TEST(Augment, SampledParametersWithinBounds) {
    AugmentConfig cfg;
    Rng rng(0);
    int flips_h = 0;
    double sq = 0.0;
    std::size_t n_grid = 0;
    for (int i = 0; i < 1000; ++i) {
        auto p = sample_augment_params(cfg, rng);
        EXPECT_LE(std::abs(p.rotation_deg), 3.0);
        EXPECT_LE(std::abs(p.zoom - 1.0), 0.10 + 1e-12);
        EXPECT_LE(std::abs(p.intensity_scale - 1.0), 0.10 + 1e-12);
        ASSERT_EQ(p.grid, 3);
        ASSERT_EQ(p.grid_dy.size(), 9u);
        for (std::size_t k = 0; k < 9; ++k) sq += p.grid_dy[k] * p.grid_dy[k] + p.grid_dx[k] * p.grid_dx[k];
        n_grid += 18;
        flips_h += p.flip_h;
    }
    EXPECT_NEAR(std::sqrt(sq / n_grid), 5.0, 0.25);
    EXPECT_NEAR(flips_h, 500, 4 * std::sqrt(250.0));
}

TEST(Augment, MasksStayBinaryAndAligned) {
    AugmentConfig cfg;
    double disagreement = 0.0;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        Mask mask;
        auto img = digit_canvas(seed, &mask);
        Image as_image(1, 48, 48);
        for (std::size_t i = 0; i < mask.pixels.size(); ++i) as_image.pixels[i] = mask.pixels[i] ? 1.0f : -1.0f;
        auto out = augment(img, &mask, cfg, seed);
        for (auto v : out.mask->pixels) ASSERT_TRUE(v == 0 || v == 1);
        for (auto v : out.image.pixels) ASSERT_TRUE(std::isfinite(v));
        auto warped = augment(as_image, nullptr, cfg, seed).image;
        std::size_t diff = 0;
        for (std::size_t i = 0; i < warped.pixels.size(); ++i) {
            // The intensity change scales about zero, so the sign survives it.
            diff += (warped.pixels[i] > 0.0f) != (out.mask->pixels[i] == 1);
        }
        disagreement += static_cast<double>(diff) / warped.pixels.size();
    }
    EXPECT_LT(disagreement / 40, 0.02);
}

TEST(Augment, InvalidConfigRejected) {
    AugmentConfig cfg;
    cfg.max_zoom_frac = 1.5;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = AugmentConfig{};
    cfg.spline_grid = 1;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Spline, ThreeKnotClosedForm) {
    const double y0 = 0.3, y1 = -1.2, y2 = 2.0;
    const double m1 = 1.5 * (y0 - 2 * y1 + y2);  // second derivative at the middle knot
    for (double t : {0.0, 0.25, 0.5, 0.9, 1.0}) {
        const double expected = m1 * t * t * t / 6 + y0 * (1 - t) + (y1 - m1 / 6) * t;
        EXPECT_NEAR(natural_cubic_spline({0, 1, 2}, {y0, y1, y2}, t), expected, 1e-12);
    }
    for (double t : {1.0, 1.3, 1.7, 2.0}) {
        const double s = 2 - t;
        const double expected = m1 * s * s * s / 6 + y2 * (1 - s) + (y1 - m1 / 6) * s;
        EXPECT_NEAR(natural_cubic_spline({0, 1, 2}, {y0, y1, y2}, t), expected, 1e-12);
    }
}

TEST(Spline, ReproducesLinesAndExtrapolatesLinearly) {
    std::vector<double> k{0, 2, 5, 9}, v;
    for (double x : k) v.push_back(3 * x - 1);
    for (double t : {-2.0, 0.0, 1.0, 4.4, 9.0, 12.0}) EXPECT_NEAR(natural_cubic_spline(k, v, t), 3 * t - 1, 1e-12);
}

// --- NIfTI / BraTS ---------------------------------------------------------

template <typename T>
void put(std::vector<std::uint8_t>& buf, std::size_t at, T v, bool big_endian) {
    std::uint8_t b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if (big_endian) std::reverse(b, b + sizeof(T));
    std::memcpy(buf.data() + at, b, sizeof(T));
}

TEST(Nifti, FloatRoundTrip) {
    auto dir = testing::scratch_dir("nifti");
    Volume v;
    v.dims = {4, 3, 2};
    for (int i = 0; i < 24; ++i) v.voxels.push_back(0.5f * i - 3.0f);
    write_nifti(dir / "v.nii.gz", v);
    auto back = read_nifti(dir / "v.nii.gz");
    EXPECT_EQ(back.dims, v.dims);
    EXPECT_EQ(back.voxels, v.voxels);
    EXPECT_FLOAT_EQ(back.at(3, 2, 1), v.voxels[1 * 12 + 2 * 4 + 3]);
}

TEST(Nifti, BigEndianInt16WithScaling) {
    auto dir = testing::scratch_dir("nifti_be");
    std::vector<std::uint8_t> file(352 + 2 * 6, 0);
    put<std::int32_t>(file, 0, 348, true);
    put<std::int16_t>(file, 40, 3, true);
    put<std::int16_t>(file, 42, 3, true);
    put<std::int16_t>(file, 44, 2, true);
    put<std::int16_t>(file, 46, 1, true);
    put<std::int16_t>(file, 70, 4, true);
    put<std::int16_t>(file, 72, 16, true);
    put<float>(file, 108, 352.0f, true);
    put<float>(file, 112, 2.0f, true);
    put<float>(file, 116, 1.0f, true);
    std::memcpy(file.data() + 344, "n+1", 4);
    for (int i = 0; i < 6; ++i) put<std::int16_t>(file, 352 + 2 * i, static_cast<std::int16_t>(i - 2), true);
    std::ofstream(dir / "be.nii", std::ios::binary).write(reinterpret_cast<const char*>(file.data()), file.size());
    auto v = read_nifti(dir / "be.nii");
    EXPECT_EQ(v.dims, (std::array<int, 3>{3, 2, 1}));
    for (int i = 0; i < 6; ++i) EXPECT_FLOAT_EQ(v.voxels[i], 2.0f * (i - 2) + 1.0f);

    file[70 + 1] = 99;  // unknown datatype
    std::ofstream(dir / "bad.nii", std::ios::binary).write(reinterpret_cast<const char*>(file.data()), file.size());
    EXPECT_THROW(read_nifti(dir / "bad.nii"), DataError);
}

TEST(Brats, RoutingRules) {
    BratsSliceSpec spec;
    EXPECT_EQ(route_half_slice(100, 20, 0, spec), SliceRoute::discard);
    EXPECT_EQ(route_half_slice(100, 25, 0, spec), SliceRoute::absence);
    EXPECT_EQ(route_half_slice(1000, 500, 5, spec), SliceRoute::presence);
    EXPECT_EQ(route_half_slice(1000, 500, 4, spec), SliceRoute::discard);
    EXPECT_EQ(route_half_slice(0, 0, 0, spec), SliceRoute::discard);
}

TEST(Brats, NormalizationOverBrainOnly) {
    std::vector<Volume> ch(2);
    for (auto& v : ch) v.dims = {4, 4, 1};
    ch[0].voxels = {0, 0, 0, 0, 0, 1, 2, 0, 0, 3, 4, 0, 0, 0, 0, 0};
    ch[1].voxels = {0, 0, 0, 0, 0, 0, 5, 0, 0, 5, 7, 0, 0, 0, 0, 0};
    auto brain = brain_mask(ch);
    EXPECT_EQ(std::count(brain.begin(), brain.end(), 1), 4);
    normalize_brain(ch, brain);
    for (const auto& v : ch) {
        double s = 0, sq = 0;
        for (std::size_t i = 0; i < 16; ++i) {
            if (!brain[i]) {
                EXPECT_EQ(v.voxels[i], 0.0f);
                continue;
            }
            s += v.voxels[i];
            sq += v.voxels[i] * v.voxels[i];
        }
        EXPECT_NEAR(s / 4, 0.0, 1e-6);
        EXPECT_NEAR(sq / 4, 1.0, 1e-5);
    }
}

TEST(Brats, HalfSliceFileRoundTrip) {
    auto dir = testing::scratch_dir("halfslice");
    Image img(4, 6, 3);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = 0.25f * i - 4.0f;
    write_half_slice(dir / "x.hs", img);
    auto back = read_half_slice(dir / "x.hs");
    EXPECT_EQ(back.channels, 4);
    EXPECT_EQ(back.height, 6);
    EXPECT_EQ(back.pixels, img.pixels);
    std::ofstream(dir / "bad.hs", std::ios::binary) << "XXXXXXXX";
    EXPECT_THROW(read_half_slice(dir / "bad.hs"), DataError);
}

/// Writes one synthetic case: a centred brain box, a lesion on the low-x side for z < 2.
void write_case(const fs::path& root, const std::string& name, bool with_flair) {
    const int nx = 16, ny = 12, nz = 4;
    fs::create_directories(root / name);
    Rng rng(std::hash<std::string>{}(name));
    Volume label;
    label.dims = {nx, ny, nz};
    label.voxels.assign(nx * ny * nz, 0.0f);
    for (int z = 0; z < 2; ++z)
        for (int y = 4; y < 7; ++y)
            for (int x = 3; x < 6; ++x) label.voxels[label.index(x, y, z)] = 1.0f;
    for (const char* seq : {"t1", "t2", "t1ce", "flair"}) {
        if (!with_flair && std::string(seq) == "flair") continue;
        Volume v;
        v.dims = {nx, ny, nz};
        v.voxels.assign(nx * ny * nz, 0.0f);
        for (int z = 0; z < nz; ++z)
            for (int y = 1; y < ny - 1; ++y)
                for (int x = 1; x < nx - 1; ++x) v.voxels[v.index(x, y, z)] = 100.0f + 10.0f * static_cast<float>(rng.normal());
        write_nifti(root / name / (name + "_" + seq + ".nii.gz"), v);
    }
    write_nifti(root / name / (name + "_seg.nii.gz"), label);
}

TEST(Brats, ConversionEndToEnd) {
    auto vol = testing::scratch_dir("brats_in");
    auto out = testing::scratch_dir("brats_out");
    for (int i = 0; i < 6; ++i) write_case(vol, "case" + std::to_string(i), true);
    write_case(vol, "broken", false);
    BratsSliceSpec spec;
    spec.labeled_fraction = 0.5;
    auto conv = brats_to_half_slices(vol, spec, out, 3);
    ASSERT_EQ(conv.skipped.size(), 1u);
    EXPECT_NE(conv.skipped[0].find("broken"), std::string::npos);

    const auto& m = conv.manifest;
    EXPECT_TRUE(validate_manifest(m, out).ok());
    std::size_t p = 0, a = 0;
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        const auto& r = m.records[i];
        auto img = read_half_slice(out / r.image_path);
        EXPECT_EQ(img.channels, 4);
        EXPECT_EQ(img.height, 12);
        EXPECT_EQ(img.width, 8);
        if (r.domain == ExampleDomain::P) {
            ++p;
            EXPECT_GT(gray8_to_mask(read_png_gray8(out / *r.mask_path)).count(), 0u);
        } else {
            ++a;
        }
    }
    // Each case: lesion half-slices at z = 0, 1; the other six half-slices are lesion-free.
    EXPECT_EQ(p, 6u * 2);
    EXPECT_EQ(a, 6u * 6);
    auto reread = read_manifest(out / "manifest.jsonl");
    EXPECT_EQ(reread.records.size(), m.records.size());
}

}  // namespace
}  // namespace transeg::data
