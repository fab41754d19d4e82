// Command-line front end: dataset generation, training, evaluation, panels.

#include "transeg/data/brats.hpp"
#include "transeg/data/cluttered_mnist.hpp"
#include "transeg/errors.hpp"
#include "transeg/harness/experiment.hpp"
#include "transeg/harness/panels.hpp"

#include <CLI11.hpp>

#include <spawn.h>
#include <sys/wait.h>

#include <iostream>

extern char** environ;

using namespace transeg;

namespace {

struct GenDataArgs {
    std::string kind = "mnist";
    std::string out;
    std::uint64_t seed = 0;
    std::string mnist_dir = "data/mnist";
    std::string clutter_preset = "simple48";
    int image_size = 0;
    int n_clutter = -1;
    std::size_t valid_digits = 500;
    data::FoldSizes sizes;
    double labeled_fraction = 0.01;
    std::string volumes;
    data::BratsSliceSpec brats;
};

int gen_data(const GenDataArgs& a) {
    if (a.kind == "mnist") {
        auto spec = data::ClutterSpec::by_name(a.clutter_preset);
        if (a.image_size > 0) spec.image_size = a.image_size;
        if (a.n_clutter >= 0) spec.n_clutter = a.n_clutter;
        spec.labeled_fraction = a.labeled_fraction;
        const auto digits = data::load_mnist_dir(a.mnist_dir, a.valid_digits);
        const auto m = data::generate_cluttered_mnist(spec, digits, a.sizes, a.seed, a.out);
        std::cout << "wrote " << m.records.size() << " examples to " << a.out << "/manifest.jsonl\n";
        return 0;
    }
    if (a.kind == "brats") {
        auto spec = a.brats;
        spec.labeled_fraction = a.labeled_fraction;
        const auto r = data::brats_to_half_slices(a.volumes, spec, a.out, a.seed);
        std::cout << "wrote " << r.manifest.records.size() << " half-slices to " << a.out << "/manifest.jsonl";
        if (!r.skipped.empty()) std::cout << " (" << r.skipped.size() << " volumes skipped)";
        std::cout << '\n';
        return 0;
    }
    throw ConfigError("gen-data --kind must be mnist or brats");
}

int validate_data(const std::string& manifest) {
    const auto m = data::read_manifest(manifest);
    const auto rep = data::validate_manifest(m, std::filesystem::path(manifest).parent_path());
    for (const auto& p : rep.problems) std::cout << p << '\n';
    std::cout << rep.n_records << " records, " << rep.problems.size() << " problems\n";
    return rep.ok() ? 0 : 1;
}

// One child process per seed; each writes its own seed_<n>/result.json.
std::vector<harness::SeedResult> train_parallel(const std::string& config_path, const harness::ExperimentConfig& cfg) {
    std::vector<pid_t> children;
    for (auto seed : cfg.seeds) {
        const std::string seed_arg = std::to_string(seed);
        std::vector<std::string> args{"/proc/self/exe", "train", "--config", config_path, "--seed", seed_arg};
        std::vector<char*> argv;
        for (auto& s : args) argv.push_back(s.data());
        argv.push_back(nullptr);
        pid_t pid;
        if (posix_spawn(&pid, "/proc/self/exe", nullptr, nullptr, argv.data(), environ) != 0)
            throw std::runtime_error("cannot spawn training process for seed " + seed_arg);
        children.push_back(pid);
    }
    bool ok = true;
    for (auto pid : children) {
        int status = 0;
        waitpid(pid, &status, 0);
        ok = ok && WIFEXITED(status) && WEXITSTATUS(status) == 0;
    }
    if (!ok) throw std::runtime_error("a seed's training process failed");
    std::vector<harness::SeedResult> results;
    for (auto seed : cfg.seeds) {
        std::ifstream in(cfg.run_root() / ("seed_" + std::to_string(seed)) / "result.json");
        results.push_back(harness::SeedResult::from_json(nlohmann::json::parse(in)));
    }
    return results;
}

int train(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& resume,
          bool parallel) {
    const auto cfg = harness::ExperimentConfig::load(config_path);
    cfg.validate();
    if (seed) {
        const auto r = harness::run_seed(cfg, *seed, resume.empty() ? std::nullopt
                                                                    : std::optional<std::filesystem::path>(resume));
        std::cout << r.to_json().dump(2) << '\n';
        return 0;
    }
    if (!resume.empty()) throw ConfigError("--resume needs --seed");
    const auto report = parallel ? harness::aggregate_report(cfg, train_parallel(config_path, cfg))
                                 : harness::run_experiment(cfg);
    if (parallel) harness::write_report(cfg, report);
    std::cout << harness::render_report_table(report);
    return 0;
}

harness::ExampleStore store_for(const harness::CheckpointMeta& meta, const std::string& manifest_override) {
    std::filesystem::path manifest = manifest_override;
    if (manifest.empty()) manifest = nlohmann::json::parse(meta.config_json).at("manifest").get<std::string>();
    return harness::ExampleStore::open(manifest, ArchitecturePreset::by_name(meta.preset));
}

int evaluate(const std::string& checkpoint, const std::string& fold, const std::string& manifest, double threshold) {
    harness::CheckpointMeta meta;
    auto model = harness::load_model(checkpoint, &meta);
    const auto store = store_for(meta, manifest);
    const auto r = harness::evaluate(*model, store, store.select(data::fold_from_string(fold), data::ExampleDomain::P),
                                     threshold);
    std::cout << r.to_json().dump(2) << '\n';
    return 0;
}

int panels(const std::string& checkpoint, int n, const std::string& out, const std::string& fold,
           const std::string& manifest, std::uint64_t seed) {
    harness::CheckpointMeta meta;
    auto model = harness::load_model(checkpoint, &meta);
    const auto store = store_for(meta, manifest);
    auto p = store.select(data::fold_from_string(fold), data::ExampleDomain::P);
    auto a = store.select(data::fold_from_string(fold), data::ExampleDomain::A);
    if (p.empty()) throw DataError("fold has no P examples");
    p.resize(std::min<std::size_t>(static_cast<std::size_t>(n), p.size()));
    a.resize(std::min<std::size_t>(static_cast<std::size_t>(n), a.size()));
    const auto x_A = a.empty() ? torch::Tensor() : harness::load_batch(store, a).images;
    harness::emit_panels(*model, harness::load_batch(store, p).images, x_A, out, seed);
    std::cout << "wrote " << out << "_P.png" << (a.empty() ? "" : " and " + out + "_A.png") << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semi-supervised segmentation through presence/absence image translation"};
    app.require_subcommand(1);

    GenDataArgs gd;
    auto* gen = app.add_subcommand("gen-data", "Generate cluttered MNIST or convert BraTS volumes");
    gen->add_option("--kind", gd.kind, "mnist or brats")->check(CLI::IsMember({"mnist", "brats"}));
    gen->add_option("--out", gd.out, "Output directory")->required();
    gen->add_option("--seed", gd.seed, "Master seed");
    gen->add_option("--labeled-fraction", gd.labeled_fraction, "Fraction of training P examples labeled");
    gen->add_option("--mnist-dir", gd.mnist_dir, "Directory with MNIST IDX files");
    gen->add_option("--preset", gd.clutter_preset, "simple48, hard48 or large128");
    gen->add_option("--image-size", gd.image_size, "Override canvas size");
    gen->add_option("--n-clutter", gd.n_clutter, "Override clutter count");
    gen->add_option("--valid-digits", gd.valid_digits, "Training digits held out as the validation source");
    gen->add_option("--train", gd.sizes.train, "Training examples per domain");
    gen->add_option("--valid", gd.sizes.valid, "Validation examples per domain");
    gen->add_option("--test", gd.sizes.test, "Test examples per domain");
    gen->add_option("--volumes", gd.volumes, "BraTS case directory");
    gen->add_option("--min-brain-frac", gd.brats.min_brain_frac);
    gen->add_option("--min-lesion-frac", gd.brats.min_lesion_frac_of_brain);
    gen->add_option("--sequences", gd.brats.channel_suffixes, "File-name suffixes of the four sequences");
    gen->add_option("--label-suffix", gd.brats.label_suffix);
    gen->add_option("--extension", gd.brats.extension);

    std::string config, resume, checkpoint, fold = "test", manifest, out = "panels";
    std::optional<std::uint64_t> seed;
    std::uint64_t panel_seed = 0;
    bool parallel = false;
    double threshold = 0.5;
    int n = 8;
    auto* tr = app.add_subcommand("train", "Train every seed of an experiment config");
    tr->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    tr->add_option("--seed", seed, "Train only this seed");
    tr->add_option("--resume", resume, "Resume a single seed from a checkpoint")->check(CLI::ExistingFile);
    tr->add_flag("--parallel", parallel, "One process per seed");

    auto* ev = app.add_subcommand("evaluate", "Dice of a checkpoint on one fold");
    ev->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
    ev->add_option("--fold", fold)->check(CLI::IsMember({"train", "valid", "test"}));
    ev->add_option("--manifest", manifest, "Defaults to the manifest recorded in the checkpoint");
    ev->add_option("--threshold", threshold);

    auto* pa = app.add_subcommand("panels", "Translation and segmentation panels");
    pa->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
    pa->add_option("--n", n, "Samples per panel")->check(CLI::PositiveNumber);
    pa->add_option("--out", out, "Output prefix");
    pa->add_option("--fold", fold)->check(CLI::IsMember({"train", "valid", "test"}));
    pa->add_option("--manifest", manifest);
    pa->add_option("--seed", panel_seed, "Seed of the sampled unique codes");

    auto* va = app.add_subcommand("validate-data", "Check a manifest and its files");
    va->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);
    try {
        if (*gen) return gen_data(gd);
        if (*tr) return train(config, seed, resume, parallel);
        if (*ev) return evaluate(checkpoint, fold, manifest, threshold);
        if (*pa) return panels(checkpoint, n, out, fold, manifest, panel_seed);
        if (*va) return validate_data(manifest);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
