#include "transeg/harness/experiment.hpp"

#include "transeg/data/augment.hpp"
#include "transeg/errors.hpp"
#include "transeg/rng.hpp"
#include "transeg/harness/panels.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

namespace transeg::harness {

namespace {

enum StreamKey : std::uint64_t { kPresenceOrder = 1, kAbsenceOrder, kLabeledDraw, kAugment, kSampling, kPanels };

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
    return p;
}

void append_line(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::app);
    out << j.dump() << '\n';
    if (!out) throw DataError("cannot append to " + path.string());
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    out << j.dump(2) << '\n';
    if (!out) throw DataError("cannot write " + path.string());
}

std::vector<std::size_t> first_n(std::vector<std::size_t> v, int limit) {
    if (limit > 0 && v.size() > static_cast<std::size_t>(limit)) v.resize(static_cast<std::size_t>(limit));
    return v;
}

}  // namespace

TrainPools train_pools(const ExampleStore& store) {
    TrainPools p;
    p.presence = store.select(data::Fold::train, data::ExampleDomain::P);
    p.absence = store.select(data::Fold::train, data::ExampleDomain::A);
    for (auto i : p.presence)
        if (store.record(i).labeled) p.labeled.push_back(i);
    return p;
}

int steps_per_epoch(const ExperimentConfig& cfg, std::size_t n_presence) {
    const auto full = static_cast<int>((n_presence + cfg.batch_size - 1) / cfg.batch_size);
    return cfg.max_steps_per_epoch > 0 ? std::min(full, cfg.max_steps_per_epoch) : full;
}

BatchPlan plan_batch(const TrainPools& pools, std::uint64_t seed, int epoch, int step, int batch_size,
                     int steps) {
    if (pools.presence.empty() || pools.absence.empty())
        throw DataError("training fold needs both P and A examples");
    BatchPlan plan;
    const auto nP = pools.presence.size();
    const auto order = permutation(nP, derive_seed(seed, {kPresenceOrder, static_cast<std::uint64_t>(epoch)}));
    for (int k = 0; k < batch_size; ++k) {
        const auto pos = (static_cast<std::size_t>(step) * batch_size + k) % nP;
        plan.presence.push_back(pools.presence[order[pos]]);
    }
    if (!pools.labeled.empty()) {
        bool any = false;
        for (auto i : plan.presence)
            any = any || std::binary_search(pools.labeled.begin(), pools.labeled.end(), i);
        if (!any) {
            Rng rng(derive_seed(seed, {kLabeledDraw, static_cast<std::uint64_t>(epoch),
                                       static_cast<std::uint64_t>(step)}));
            plan.presence.back() = pools.labeled[rng.below(pools.labeled.size())];
        }
    }
    const auto nA = pools.absence.size();
    const std::uint64_t first = (static_cast<std::uint64_t>(epoch - 1) * steps + step) * batch_size;
    std::uint64_t cached_cycle = ~std::uint64_t{0};
    std::vector<std::size_t> a_order;
    for (int k = 0; k < batch_size; ++k) {
        const auto g = first + static_cast<std::uint64_t>(k);
        const auto cycle = g / nA;
        if (cycle != cached_cycle) {
            a_order = permutation(nA, derive_seed(seed, {kAbsenceOrder, cycle}));
            cached_cycle = cycle;
        }
        plan.absence.push_back(pools.absence[a_order[g % nA]]);
    }
    return plan;
}

TrainingBatch materialize_batch(const ExampleStore& store, const TrainPools& pools, const BatchPlan& plan,
                                const ExperimentConfig& cfg, std::uint64_t seed, int epoch, int step) {
    std::vector<data::Image> p_images, a_images;
    std::vector<std::optional<data::Mask>> masks;
    std::vector<std::uint8_t> labeled;
    std::uint64_t slot = 0;
    auto aug_seed = [&]() {
        return derive_seed(seed, {kAugment, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(step), slot++});
    };
    for (auto i : plan.presence) {
        const bool is_labeled = std::binary_search(pools.labeled.begin(), pools.labeled.end(), i);
        auto img = store.image(i);
        std::optional<data::Mask> mask;
        if (is_labeled) mask = store.mask(i);
        if (cfg.augmentation) {
            auto out = data::augment(img, mask ? &*mask : nullptr, cfg.augment, aug_seed());
            img = std::move(out.image);
            mask = std::move(out.mask);
        }
        p_images.push_back(std::move(img));
        masks.push_back(std::move(mask));
        labeled.push_back(is_labeled);
    }
    for (auto i : plan.absence) {
        auto img = store.image(i);
        if (cfg.augmentation) img = data::augment(img, nullptr, cfg.augment, aug_seed()).image;
        a_images.push_back(std::move(img));
    }
    TrainingBatch b;
    b.x_P = stack_images(p_images);
    b.x_A = stack_images(a_images);
    b.targets.masks = stack_masks(masks, p_images.front().height, p_images.front().width);
    b.targets.labeled = torch::from_blob(labeled.data(), {static_cast<std::int64_t>(labeled.size())}, torch::kUInt8)
                            .to(torch::kBool);
    return b;
}

nlohmann::json SeedResult::to_json() const {
    nlohmann::json j{{"seed", seed}, {"epochs_run", epochs_run}, {"best_epoch", best_epoch}, {"test", test.to_json()},
                     {"warnings", warnings}};
    if (best_valid) j["best_valid"] = best_valid->to_json();
    return j;
}

namespace {

EvalResult eval_from_json(const nlohmann::json& j) {
    EvalResult r;
    r.dice_mean_per_image = j.at("dice_mean_per_image").get<double>();
    r.dice_aggregate = j.at("dice_aggregate").get<double>();
    r.n = j.at("n").get<std::size_t>();
    if (j.contains("residual_inside")) r.residual_inside = j["residual_inside"].get<double>();
    if (j.contains("residual_outside")) r.residual_outside = j["residual_outside"].get<double>();
    return r;
}

}  // namespace

SeedResult SeedResult::from_json(const nlohmann::json& j) {
    SeedResult r;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.epochs_run = j.at("epochs_run").get<int>();
    r.best_epoch = j.at("best_epoch").get<int>();
    r.test = eval_from_json(j.at("test"));
    if (j.contains("best_valid")) r.best_valid = eval_from_json(j["best_valid"]);
    r.warnings = j.value("warnings", std::vector<std::string>{});
    return r;
}

nlohmann::json parameter_report(const ArchitecturePreset& preset, VariantKind kind) {
    SegTransModel model(preset, kind);
    const auto g = nn::parameter_count(model->generator_parameters());
    const auto d = nn::parameter_count(model->discriminator_parameters());
    return {{"generator", g}, {"discriminator", d}, {"total", g + d}};
}

SeedResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const std::optional<std::filesystem::path>& resume) {
    cfg.validate();
    const auto preset = ArchitecturePreset::by_name(cfg.preset);
    const auto store = ExampleStore::open(cfg.manifest, preset);
    const auto pools = train_pools(store);
    const auto valid = first_n(store.select(data::Fold::valid, data::ExampleDomain::P), cfg.valid_limit);
    const auto test = store.select(data::Fold::test, data::ExampleDomain::P);
    const int steps = steps_per_epoch(cfg, pools.presence.size());

    const auto dir = cfg.run_root() / ("seed_" + std::to_string(seed));
    std::filesystem::create_directories(dir);
    const auto metrics_path = dir / "metrics.jsonl";
    const auto timing_path = dir / "timing.jsonl";

    SeedResult result;
    result.seed = seed;
    CheckpointMeta meta;
    meta.preset = preset.name;
    meta.variant = to_string(cfg.variant);
    meta.config_json = cfg.to_json().dump();
    meta.config_hash = config_hash(cfg);
    meta.dataset_hash = file_hash(cfg.manifest);

    TrainingState state(make_model(preset, cfg.variant, seed), cfg.optimizer, cfg.weights,
                        derive_seed(seed, {kSampling}));
    int start_epoch = 1;
    std::int64_t global_step = 0;
    if (resume) {
        const auto loaded = load_checkpoint(*resume, state);
        if (loaded.config_hash != meta.config_hash)
            result.warnings.push_back("config hash differs from the resumed checkpoint");
        if (loaded.dataset_hash != meta.dataset_hash)
            result.warnings.push_back("dataset manifest hash differs from the resumed checkpoint");
        for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
        start_epoch = static_cast<int>(loaded.epoch) + 1;
        global_step = loaded.step;
        meta.best_valid_dice = loaded.best_valid_dice;
        meta.best_epoch = loaded.best_epoch;
    } else {
        std::filesystem::remove(metrics_path);
        std::filesystem::remove(timing_path);
        std::filesystem::remove(dir / "best.ckpt");
        const auto v = evaluate(*state.model, store, valid, cfg.threshold);
        append_line(metrics_path, {{"seed", seed}, {"epoch", 0}, {"step", 0}, {"losses", nlohmann::json::object()},
                                   {"valid", v.to_json()}});
    }

    for (int epoch = start_epoch; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::map<std::string, double> sums;
        for (int step = 0; step < steps; ++step) {
            const auto plan = plan_batch(pools, seed, epoch, step, cfg.batch_size, steps);
            const auto batch = materialize_batch(store, pools, plan, cfg, seed, epoch, step);
            const auto rep = training_step(state, batch);
            sums["total"] += rep.losses.total;
            for (const auto& [k, v] : rep.losses.terms) sums[k] += v;
            ++global_step;
        }
        nlohmann::json losses = nlohmann::json::object();
        for (const auto& [k, v] : sums) losses[k] = v / steps;
        const auto v = evaluate(*state.model, store, valid, cfg.threshold);
        append_line(metrics_path, {{"seed", seed}, {"epoch", epoch}, {"step", global_step}, {"losses", losses},
                                   {"valid", v.to_json()}});
        meta.epoch = epoch;
        meta.step = global_step;
        if (v.dice_mean_per_image > meta.best_valid_dice) {
            meta.best_valid_dice = v.dice_mean_per_image;
            meta.best_epoch = epoch;
            save_checkpoint(dir / "best.ckpt", state, meta);
        }
        if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0)
            save_checkpoint(dir / ("epoch_" + std::to_string(epoch) + ".ckpt"), state, meta);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        append_line(timing_path, {{"epoch", epoch}, {"wall_seconds", secs}});
        std::cerr << "seed " << seed << " epoch " << epoch << "/" << cfg.epochs << " valid dice "
                  << v.dice_mean_per_image << " (" << std::fixed << std::setprecision(1) << secs << " s)\n"
                  << std::defaultfloat;
    }
    if (cfg.epochs > 0) save_checkpoint(dir / "last.ckpt", state, meta);

    result.epochs_run = static_cast<int>(meta.epoch);
    result.best_epoch = static_cast<int>(meta.best_epoch);
    if (std::filesystem::exists(dir / "best.ckpt")) {
        load_checkpoint(dir / "best.ckpt", state);
        result.best_valid = evaluate(*state.model, store, valid, cfg.threshold);
    }
    result.test = evaluate(*state.model, store, test, cfg.threshold);

    if (cfg.panel_samples > 0 && cfg.variant == VariantKind::proposed) {
        const auto n = static_cast<std::size_t>(cfg.panel_samples);
        auto p = test;
        auto a = store.select(data::Fold::test, data::ExampleDomain::A);
        p.resize(std::min(n, p.size()));
        a.resize(std::min(n, a.size()));
        const auto x_A = a.size() == p.size() ? load_batch(store, a).images : torch::Tensor();
        emit_panels(*state.model, load_batch(store, p).images, x_A, dir / "panels", derive_seed(seed, {kPanels}));
    }
    write_json(dir / "result.json", result.to_json());
    return result;
}

nlohmann::json aggregate_report(const ExperimentConfig& cfg, const std::vector<SeedResult>& results) {
    if (results.empty()) throw ConfigError("report needs at least one seed");
    auto stats = [&](auto get) {
        double mean = 0.0;
        for (const auto& r : results) mean += get(r);
        mean /= static_cast<double>(results.size());
        double var = 0.0;
        for (const auto& r : results) var += (get(r) - mean) * (get(r) - mean);
        // Sample standard deviation; zero for a single seed.
        const double sd = results.size() > 1 ? std::sqrt(var / static_cast<double>(results.size() - 1)) : 0.0;
        return nlohmann::json{{"mean", mean}, {"std", sd}};
    };
    nlohmann::json report;
    report["name"] = cfg.name;
    report["variant"] = to_string(cfg.variant);
    report["preset"] = cfg.preset;
    report["epochs"] = cfg.epochs;
    report["n_seeds"] = results.size();
    report["test_dice_mean_per_image"] = stats([](const SeedResult& r) { return r.test.dice_mean_per_image; });
    report["test_dice_aggregate"] = stats([](const SeedResult& r) { return r.test.dice_aggregate; });
    report["parameters"] = parameter_report(ArchitecturePreset::by_name(cfg.preset), cfg.variant);
    report["seeds"] = nlohmann::json::array();
    for (const auto& r : results) report["seeds"].push_back(r.to_json());
    return report;
}

std::string render_report_table(const nlohmann::json& report) {
    std::ostringstream out;
    auto cell = [](const nlohmann::json& s) {
        std::ostringstream c;
        c << std::fixed << std::setprecision(2) << s.at("mean").get<double>() << " ("
          << s.at("std").get<double>() << ")";
        return c.str();
    };
    out << "Segmentation Dice on the test fold: mean (standard deviation) over " << report.at("n_seeds")
        << " seed(s)\n\n";
    out << std::left << std::setw(14) << "variant" << std::setw(12) << "preset" << std::setw(18) << "per-image"
        << std::setw(18) << "aggregate" << "parameters\n";
    out << std::setw(14) << report.at("variant").get<std::string>() << std::setw(12)
        << report.at("preset").get<std::string>() << std::setw(18) << cell(report.at("test_dice_mean_per_image"))
        << std::setw(18) << cell(report.at("test_dice_aggregate")) << report.at("parameters").at("total") << '\n';
    return out.str();
}

void write_report(const ExperimentConfig& cfg, const nlohmann::json& report) {
    const auto root = cfg.run_root();
    std::filesystem::create_directories(root);
    write_json(root / "report.json", report);
    std::ofstream txt(root / "report.txt");
    txt << render_report_table(report);
    write_json(root / "config.json", cfg.to_json());
}

nlohmann::json run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    std::vector<SeedResult> results;
    for (auto seed : cfg.seeds) results.push_back(run_seed(cfg, seed));
    auto report = aggregate_report(cfg, results);
    write_report(cfg, report);
    return report;
}

}  // namespace transeg::harness
