// Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//
// Criteria 1-7 run by default. The ordering experiment (8) and its residual
// check (9) need --full, and the full-scale protocol (10) needs --full-scale;
// both train for many CPU hours.

#include "support/checks.hpp"
#include "support/test_support.hpp"

#include "transeg/data/augment.hpp"
#include "transeg/data/cluttered_mnist.hpp"
#include "transeg/harness/checkpoint.hpp"
#include "transeg/harness/config.hpp"
#include "transeg/harness/dataset.hpp"
#include "transeg/harness/evaluate.hpp"
#include "transeg/harness/experiment.hpp"
#include "transeg/rng.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

namespace {

using namespace transeg;
namespace fs = std::filesystem;

// Pinned tolerances.
constexpr int kLossTrials = 60;
constexpr double kLossRtol = 1e-6;
constexpr int kGradCoords = 120;
constexpr double kGradStep = 1e-5;
constexpr double kGradRtol = 1e-4;
constexpr double kGradMagnitudeFloor = 1e-6;
constexpr std::int64_t kGradMaxParams = 5000;
constexpr int kSpectralMatrices = 50;
constexpr int kSpectralIters = 20;
constexpr double kSigmaLo = 0.95, kSigmaHi = 1.05;
constexpr std::size_t kDatasetTrain = 1000;
constexpr int kAugmentDraws = 1000;
constexpr int kOverfitExamples = 20;
constexpr int kOverfitSteps = 200;
constexpr double kOverfitDice = 0.9;
constexpr double kOrderingMargin = 0.05;
constexpr double kResidualRatio = 2.0;
constexpr std::size_t kResidualImages = 200;

struct Outcome {
    enum class Status { pass, fail, skip } status = Status::fail;
    std::string detail;
};

Outcome pass(std::string d) { return {Outcome::Status::pass, std::move(d)}; }
Outcome fail(std::string d) { return {Outcome::Status::fail, std::move(d)}; }
Outcome skip(std::string d) { return {Outcome::Status::skip, std::move(d)}; }
Outcome verdict(bool ok, std::string d) { return ok ? pass(std::move(d)) : fail(std::move(d)); }

struct Options {
    std::set<int> only;
    bool full = false;
    bool full_scale = false;
    fs::path mnist_dir;
    fs::path work_dir;
};

std::string fmt(double v, int precision = 4) {
    std::ostringstream s;
    s.precision(precision);
    s << v;
    return s.str();
}

/// Real MNIST digits when available, otherwise stroke-drawn stand-ins.
std::pair<data::FoldDigits, std::string> source_digits(const Options& opt) {
    try {
        return {data::load_mnist_dir(opt.mnist_dir, 500), "mnist"};
    } catch (const std::exception&) {
        auto all = testing::synthetic_digits(3000, 1);
        return {data::split_folds(all.slice(0, 2500), all.slice(2500, 3000), 500), "synthetic"};
    }
}

// --- 1 ---------------------------------------------------------------------

Outcome loss_oracles(const Options&) {
    double worst = 0.0;
    int checks = 0;
    auto track = [&](double got, double want) {
        worst = std::max(worst, testing::relative_error(got, want));
        ++checks;
    };
    const losses::LossWeights weightings[] = {losses::LossWeights::proposed(), losses::LossWeights::ae_baseline(),
                                              losses::LossWeights{0.5, 2.0, 0.3, 7.0, 3.0, true}};
    for (int s = 0; s < kLossTrials; ++s) {
        auto r = testing::random_objective(10000 + s);
        track(losses::dice_loss(r.p.y_seg, r.targets.masks).item<double>(),
              testing::oracle_dice_loss(r.p.y_seg, r.targets.masks));
        track(losses::l1_loss(r.p.x_P, r.a.x_A).item<double>(), testing::oracle_l1(r.p.x_P, r.a.x_A));
        track(losses::latent_loss(r.p, r.a).item<double>(), testing::oracle_latent(r));
        track(losses::cycle_loss(r.a.x_A, r.a.x_APA, true).item<double>(), testing::oracle_l1(r.a.x_A, r.a.x_APA));
        track(losses::hinge_discriminator_loss(r.fake_score_P, r.fake_score_A).item<double>(),
              testing::oracle_hinge_discriminator(r.fake_score_P, r.fake_score_A));
        track(losses::hinge_generator_loss(r.fake_score_A).item<double>(),
              testing::oracle_hinge_generator(r.fake_score_A));
        for (const auto& w : weightings) {
            auto out = losses::total_generator_loss(r.p, r.a, r.fake_score_A, r.fake_score_P, r.targets, w);
            track(out.total.item<double>(), testing::oracle_total(r, w));
        }
    }
    return verdict(worst < kLossRtol, std::to_string(checks) + " comparisons over " + std::to_string(kLossTrials) +
                                          " random sets per loss, max rel err " + fmt(worst, 3));
}

// --- 2 ---------------------------------------------------------------------

Outcome gradient(const Options&) {
    auto g = testing::gradient_check(0, kGradCoords, kGradStep, kGradRtol, kGradMagnitudeFloor);
    const bool ok = g.n_parameters <= kGradMaxParams && g.checked >= 100 && g.passed == g.checked;
    std::string d = std::to_string(g.n_parameters) + " params, " + std::to_string(g.passed) + "/" +
                    std::to_string(g.checked) + " coords within rel " + fmt(kGradRtol, 2) + ", max rel err " +
                    fmt(g.max_relative_error, 3) + "; " + std::to_string(g.near_zero) +
                    " coords below |g|=" + fmt(kGradMagnitudeFloor, 2) + " (max abs err " +
                    fmt(g.max_abs_error_near_zero, 2) + ")";
    if (!g.failures.empty()) d += "; first failure " + g.failures.front();
    return verdict(ok, d);
}

// --- 3 ---------------------------------------------------------------------

Outcome structure(const Options&) {
    auto s = testing::structural_identities(0);
    return verdict(s.ok(), s.describe());
}

// --- 4 ---------------------------------------------------------------------

Outcome spectral(const Options&) {
    Rng rng(42);
    double lo = 1e9, hi = -1e9;
    for (int trial = 0; trial < kSpectralMatrices; ++trial) {
        const std::int64_t out = trial < 3 ? 512 : rng.between(1, 512);
        const std::int64_t rest = trial < 3 ? 4608 : rng.between(1, 4608);
        torch::manual_seed(trial);
        auto w = torch::randn({out, rest});
        auto state = nn::make_spectral_state(w);
        auto normalized = nn::spectral_normalize(w, state, kSpectralIters);
        const double s = torch::linalg_svdvals(normalized.to(torch::kFloat64))[0].item<double>();
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    return verdict(lo >= kSigmaLo && hi <= kSigmaHi,
                   "sigma of normalized W in [" + fmt(lo, 5) + ", " + fmt(hi, 5) + "] over " +
                       std::to_string(kSpectralMatrices) + " matrices up to 512x4608");
}

// --- 5 ---------------------------------------------------------------------

std::string tree_bytes(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::string all;
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        all += fs::relative(f, dir).string() + '\0' + std::string(std::istreambuf_iterator<char>(in), {});
    }
    return all;
}

/// Nonzero pixels of an A example must all come from clutter crops.
bool digit_free(const data::ClutterExample& ex) {
    if (ex.digit || ex.mask || ex.digit_class) return false;
    for (int y = 0; y < ex.image.height; ++y) {
        for (int x = 0; x < ex.image.width; ++x) {
            if (ex.image.pixels[y * ex.image.width + x] == 0) continue;
            bool covered = false;
            for (const auto& s : ex.clutter) {
                const int sy = y - s.top, sx = x - s.left;
                covered = covered || (sy >= 0 && sx >= 0 && sy < s.height && sx < s.width && s.at(sy, sx) > 0);
            }
            if (!covered) return false;
        }
    }
    return true;
}

Outcome dataset(const Options& opt) {
    auto [digits, source] = source_digits(opt);
    std::ostringstream d;
    bool ok = true;

    for (const auto& spec : {data::ClutterSpec::simple48(), data::ClutterSpec::hard48(), data::ClutterSpec::large128()}) {
        for (std::size_t i = 0; i < 50; ++i) {
            auto p = generate_clutter_example(spec, digits.train, 3, data::ExampleDomain::P, i);
            auto a = generate_clutter_example(spec, digits.train, 3, data::ExampleDomain::A, i);
            ok = ok && static_cast<int>(p.clutter.size()) == spec.n_clutter &&
                 static_cast<int>(a.clutter.size()) == spec.n_clutter && digit_free(a);
        }
    }
    d << "clutter 8/24/80 " << (ok ? "ok" : "VIOLATED");

    const data::FoldSizes sizes{kDatasetTrain, 100, 100};
    const auto dir_a = opt.work_dir / "dataset_a", dir_b = opt.work_dir / "dataset_b";
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    auto m = data::generate_cluttered_mnist(data::ClutterSpec::simple48(), digits, sizes, 11, dir_a);
    std::size_t labeled = 0, labeled_nine = 0;
    for (const auto& r : m.records) {
        if (!r.labeled) continue;
        ++labeled;
        labeled_nine += r.digit_class == 9;
    }
    const auto expected = static_cast<std::size_t>(std::llround(0.01 * kDatasetTrain));
    const bool labels_ok = labeled == expected && labeled_nine == labeled;
    const bool valid = data::validate_manifest(m, dir_a).ok();
    data::generate_cluttered_mnist(data::ClutterSpec::simple48(), digits, sizes, 11, dir_b);
    const bool identical = tree_bytes(dir_a) == tree_bytes(dir_b);
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    d << ", labeled " << labeled << "/" << expected << " (digit 9: " << labeled_nine << ")"
      << ", manifest " << (valid ? "valid" : "INVALID") << ", regeneration " << (identical ? "byte-identical" : "DIFFERS")
      << ", " << source << " digits";
    return verdict(ok && labels_ok && valid && identical, d.str());
}

// --- 6 ---------------------------------------------------------------------

Outcome augmentation(const Options&) {
    auto digits = testing::synthetic_digits(8, 4);
    data::Image img(1, 48, 48, -1.0f);
    data::Mask mask(48, 48);
    for (int y = 0; y < 28; ++y) {
        for (int x = 0; x < 28; ++x) {
            const auto v = digits.pixels[y * 28 + x];
            img.at(0, y + 10, x + 10) = v / 127.5f - 1.0f;
            mask.at(y + 10, x + 10) = v > 0;
        }
    }
    auto id = data::augment(img, &mask, data::AugmentConfig::identity(), 1);
    const bool identity = id.image.pixels == img.pixels && id.mask->pixels == mask.pixels;

    data::AugmentConfig cfg;
    Rng rng(7);
    bool bounded = true, binary = true;
    double sq = 0.0;
    std::size_t n = 0;
    for (int i = 0; i < kAugmentDraws; ++i) {
        auto p = data::sample_augment_params(cfg, rng);
        bounded = bounded && std::abs(p.rotation_deg) <= cfg.max_rotation_deg &&
                  std::abs(p.zoom - 1.0) <= cfg.max_zoom_frac + 1e-12 &&
                  std::abs(p.intensity_scale - 1.0) <= cfg.max_intensity_shift_frac + 1e-12 &&
                  p.grid == cfg.spline_grid;
        for (std::size_t k = 0; k < p.grid_dy.size(); ++k) sq += p.grid_dy[k] * p.grid_dy[k] + p.grid_dx[k] * p.grid_dx[k];
        n += 2 * p.grid_dy.size();
        if (i < 100) {
            auto out = data::apply_augment(img, &mask, p);
            for (auto v : out.mask->pixels) binary = binary && (v == 0 || v == 1);
        }
    }
    const double sigma = std::sqrt(sq / static_cast<double>(n));
    const bool sigma_ok = std::abs(sigma - cfg.spline_sigma) < 0.05 * cfg.spline_sigma;
    return verdict(identity && bounded && binary && sigma_ok,
                   std::string("identity ") + (identity ? "exact" : "BROKEN") + ", " + std::to_string(kAugmentDraws) +
                       " draws " + (bounded ? "within" : "OUTSIDE") + " 3deg/10%/10%, grid sigma " + fmt(sigma, 4) +
                       ", masks " + (binary ? "binary" : "NOT BINARY"));
}

// --- 7 ---------------------------------------------------------------------

Outcome overfit(const Options& opt) {
    auto [digits, source] = source_digits(opt);
    const auto spec = data::ClutterSpec::simple48();
    const int n = kOverfitExamples;
    auto x_P = torch::zeros({n, 1, 48, 48}), x_A = torch::zeros({n, 1, 48, 48}), masks = torch::zeros({n, 1, 48, 48});
    for (int i = 0; i < n; ++i) {
        auto p = data::generate_clutter_example(spec, digits.train, 7, data::ExampleDomain::P, i);
        auto a = data::generate_clutter_example(spec, digits.train, 7, data::ExampleDomain::A, i);
        x_P[i] = harness::stack_images({data::gray8_to_image(p.image)})[0];
        x_A[i] = harness::stack_images({data::gray8_to_image(a.image)})[0];
        masks[i] = harness::stack_masks({p.mask}, 48, 48)[0];
    }
    auto model = make_model(ArchitecturePreset::mnist48(), VariantKind::proposed, 1);
    TrainingState state(model, OptimizerConfig{}, losses::LossWeights::proposed(), 7);
    TrainingBatch batch{x_P, x_A, {masks, torch::ones({n}, torch::kBool)}};

    auto train_dice = [&] {
        auto y = segment(*model, x_P);
        return harness::summarize_dice(harness::dice_counts(y, masks)).dice_mean_per_image;
    };
    double best = train_dice();
    int reached = -1;
    for (int step = 1; step <= kOverfitSteps; ++step) {
        training_step(state, batch);
        if (step % 10 != 0 && step != kOverfitSteps) continue;
        const double d = train_dice();
        best = std::max(best, d);
        std::cerr << "  overfit step " << step << " train dice " << fmt(d) << '\n';
        if (d >= kOverfitDice) {
            reached = step;
            break;
        }
    }
    return verdict(reached > 0, (reached > 0 ? "train Dice >= 0.9 at step " + std::to_string(reached)
                                             : "best train Dice " + fmt(best) + " after " +
                                                   std::to_string(kOverfitSteps) + " steps") +
                                    " (" + source + " digits, " + std::to_string(n) + " labeled examples)");
}

// --- 8, 9, 10 --------------------------------------------------------------

struct OrderingPlan {
    std::string name;
    data::FoldSizes sizes;
    int epochs = 50;
};

struct OrderingRun {
    std::map<VariantKind, std::vector<double>> dice;
    double residual_inside = 0.0;
    double residual_outside = 0.0;
};

OrderingRun run_ordering(const Options& opt, const OrderingPlan& plan) {
    auto digits = data::load_mnist_dir(opt.mnist_dir, 500);
    const auto data_dir = opt.work_dir / plan.name / "data";
    if (!fs::exists(data_dir / "manifest.jsonl"))
        data::generate_cluttered_mnist(data::ClutterSpec::simple48(), digits, plan.sizes, 0, data_dir);

    OrderingRun run;
    for (auto kind : {VariantKind::seg_only, VariantKind::ae_baseline, VariantKind::proposed}) {
        auto cfg = harness::ExperimentConfig::defaults_for(kind);
        cfg.name = plan.name + "_" + to_string(kind);
        cfg.manifest = data_dir / "manifest.jsonl";
        cfg.epochs = plan.epochs;
        cfg.output_dir = opt.work_dir / plan.name;
        cfg.panel_samples = kind == VariantKind::proposed ? 8 : 0;
        cfg.validate();
        auto report = harness::run_experiment(cfg);
        for (const auto& s : report["seeds"])
            run.dice[kind].push_back(s["test"]["dice_mean_per_image"].get<double>());
        if (kind != VariantKind::proposed) continue;

        auto store = harness::ExampleStore::open(cfg.manifest, ArchitecturePreset::mnist48());
        auto test = store.select(data::Fold::test, data::ExampleDomain::P);
        test.resize(std::min(test.size(), kResidualImages));
        for (auto seed : cfg.seeds) {
            auto model = harness::load_model(cfg.run_root() / ("seed_" + std::to_string(seed)) / "best.ckpt");
            auto r = harness::evaluate(*model, store, test, cfg.threshold);
            run.residual_inside += *r.residual_inside / static_cast<double>(cfg.seeds.size());
            run.residual_outside += *r.residual_outside / static_cast<double>(cfg.seeds.size());
        }
    }
    return run;
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

std::optional<OrderingRun> desk_run;

Outcome ordering(const Options& opt) {
    if (!opt.full) return skip("needs --full (3 variants x 3 seeds x 50 epochs on 5k images per domain)");
    desk_run = run_ordering(opt, {"desk", {5000, 1000, 1000}, 50});
    const auto& d = desk_run->dice;
    const auto& prop = d.at(VariantKind::proposed);
    const auto& ae = d.at(VariantKind::ae_baseline);
    const auto& seg = d.at(VariantKind::seg_only);
    int ordered = 0;
    for (std::size_t s = 0; s < prop.size(); ++s) ordered += prop[s] > ae[s] && ae[s] > seg[s];
    const double margin = mean(prop) - mean(seg);
    return verdict(ordered >= 2 && margin >= kOrderingMargin,
                   "ordered in " + std::to_string(ordered) + "/3 seeds; mean Dice proposed " + fmt(mean(prop)) +
                       ", ae " + fmt(mean(ae)) + ", seg-only " + fmt(mean(seg)));
}

Outcome residual(const Options& opt) {
    if (!opt.full) return skip("needs the --full run from criterion 8");
    if (!desk_run) return fail("criterion 8 did not produce a run");
    const double ratio = desk_run->residual_inside / desk_run->residual_outside;
    return verdict(ratio >= kResidualRatio, "mean |x_P - x_PA| inside/outside = " + fmt(desk_run->residual_inside) +
                                                "/" + fmt(desk_run->residual_outside) + " = " + fmt(ratio, 3));
}

Outcome full_scale(const Options& opt) {
    if (!opt.full_scale) return skip("needs --full-scale (50k images, 300 epochs, 3 seeds per variant)");
    auto run = run_ordering(opt, {"full", {50000, 5000, 5000}, 300});
    struct Band {
        VariantKind kind;
        double centre, width;
    };
    bool ok = true;
    std::ostringstream d;
    for (const auto& b : {Band{VariantKind::proposed, 0.79, 0.05}, Band{VariantKind::ae_baseline, 0.75, 0.05},
                          Band{VariantKind::seg_only, 0.61, 0.07}}) {
        const double m = mean(run.dice.at(b.kind));
        ok = ok && std::abs(m - b.centre) <= b.width;
        d << to_string(b.kind) << " " << fmt(m) << " (target " << b.centre << " +- " << b.width << ") ";
    }
    return verdict(ok, d.str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"transeg acceptance suite"};
    Options opt;
    std::vector<int> only;
    app.add_option("--only", only, "Run only these criteria (1-10)")->delimiter(',');
    app.add_flag("--full", opt.full, "Run the desk-scale ordering experiment (8) and residual check (9)");
    app.add_flag("--full-scale", opt.full_scale, "Run the full-scale protocol (10)");
    std::string mnist = TRANSEG_SOURCE_DIR "/data/mnist";
    if (const char* env = std::getenv("TRANSEG_MNIST_DIR")) mnist = env;
    app.add_option("--mnist-dir", mnist, "Directory with MNIST IDX files");
    std::string work = (fs::temp_directory_path() / "transeg_acceptance").string();
    app.add_option("--work-dir", work, "Scratch and run output directory");
    CLI11_PARSE(app, argc, argv);
    if (const char* env = std::getenv("TRANSEG_ACCEPTANCE_FULL"); env && std::string(env) == "1") opt.full = true;
    opt.only.insert(only.begin(), only.end());
    opt.mnist_dir = mnist;
    opt.work_dir = work;
    fs::create_directories(opt.work_dir);

    const std::vector<std::pair<std::string, std::function<Outcome(const Options&)>>> criteria = {
        {"loss oracles", loss_oracles},
        {"gradient check", gradient},
        {"structural identities", structure},
        {"spectral norm vs SVD", spectral},
        {"dataset suite", dataset},
        {"augmentation suite", augmentation},
        {"overfit smoke", overfit},
        {"desk-scale ordering", ordering},
        {"residual localizes target", residual},
        {"full-scale protocol", full_scale},
    };

    int failures = 0, passes = 0, skips = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!opt.only.empty() && !opt.only.count(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second(opt);
        } catch (const std::exception& e) {
            o = fail(std::string("error: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const char* tag = o.status == Outcome::Status::pass ? "PASS" : o.status == Outcome::Status::fail ? "FAIL" : "SKIP";
        failures += o.status == Outcome::Status::fail;
        passes += o.status == Outcome::Status::pass;
        skips += o.status == Outcome::Status::skip;
        std::cout << "[" << tag << "] " << id << ". " << criteria[i].first << ": " << o.detail << " (" << fmt(secs, 3)
                  << " s)" << std::endl;
    }
    std::cout << "acceptance complete: " << passes << " passed, " << failures << " failed, " << skips << " skipped"
              << std::endl;
    return failures == 0 ? 0 : 1;
}
