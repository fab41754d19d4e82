#include "transeg/harness/config.hpp"

#include "transeg/errors.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>

namespace transeg::harness {

namespace {

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const char* where) {
    for (const auto& [k, v] : j.items()) {
        bool ok = false;
        for (const char* name : known) ok = ok || k == name;
        if (!ok) throw ConfigError(std::string("unknown key '") + k + "' in " + where);
    }
}

}  // namespace

losses::LossWeights default_weights(VariantKind variant) {
    switch (variant) {
        case VariantKind::proposed: return losses::LossWeights::proposed();
        case VariantKind::ae_baseline: return losses::LossWeights::ae_baseline();
        case VariantKind::seg_only: return losses::LossWeights::seg_only();
    }
    return losses::LossWeights::proposed();
}

ExperimentConfig ExperimentConfig::defaults_for(VariantKind variant) {
    ExperimentConfig c;
    c.variant = variant;
    c.weights = default_weights(variant);
    return c;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    try {
        reject_unknown(j, {"name", "variant", "preset", "loss_weights", "optimizer", "manifest", "epochs",
                           "batch_size", "seeds", "augmentation", "augment", "output_dir",
                           "checkpoint_every", "threshold", "max_steps_per_epoch", "valid_limit",
                           "panel_samples"},
                       "experiment config");
        auto c = defaults_for(j.contains("variant") ? variant_from_string(j["variant"].get<std::string>())
                                                    : VariantKind::proposed);
        read_key(j, "name", c.name);
        read_key(j, "preset", c.preset);
        if (j.contains("loss_weights")) {
            const auto& w = j["loss_weights"];
            reject_unknown(w, {"adv", "rec", "lat", "cyc", "seg", "cycle_enabled"}, "loss_weights");
            read_key(w, "adv", c.weights.adv);
            read_key(w, "rec", c.weights.rec);
            read_key(w, "lat", c.weights.lat);
            read_key(w, "cyc", c.weights.cyc);
            read_key(w, "seg", c.weights.seg);
            read_key(w, "cycle_enabled", c.weights.cycle_enabled);
        }
        if (j.contains("optimizer")) {
            const auto& o = j["optimizer"];
            reject_unknown(o, {"lr_generator", "lr_discriminator", "beta1", "beta2", "weight_decay", "amsgrad"},
                           "optimizer");
            read_key(o, "lr_generator", c.optimizer.lr_generator);
            read_key(o, "lr_discriminator", c.optimizer.lr_discriminator);
            read_key(o, "beta1", c.optimizer.beta1);
            read_key(o, "beta2", c.optimizer.beta2);
            read_key(o, "weight_decay", c.optimizer.weight_decay);
            read_key(o, "amsgrad", c.optimizer.amsgrad);
        }
        if (j.contains("manifest")) {
            std::filesystem::path m = j["manifest"].get<std::string>();
            c.manifest = m.is_relative() && !base_dir.empty() ? base_dir / m : m;
        }
        read_key(j, "epochs", c.epochs);
        read_key(j, "batch_size", c.batch_size);
        read_key(j, "seeds", c.seeds);
        read_key(j, "augmentation", c.augmentation);
        if (j.contains("augment")) {
            const auto& a = j["augment"];
            reject_unknown(a, {"max_rotation_deg", "max_zoom_frac", "max_intensity_shift_frac", "hflip",
                               "vflip", "spline_grid", "spline_sigma"},
                           "augment");
            read_key(a, "max_rotation_deg", c.augment.max_rotation_deg);
            read_key(a, "max_zoom_frac", c.augment.max_zoom_frac);
            read_key(a, "max_intensity_shift_frac", c.augment.max_intensity_shift_frac);
            read_key(a, "hflip", c.augment.hflip);
            read_key(a, "vflip", c.augment.vflip);
            read_key(a, "spline_grid", c.augment.spline_grid);
            read_key(a, "spline_sigma", c.augment.spline_sigma);
        }
        if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
        read_key(j, "checkpoint_every", c.checkpoint_every);
        read_key(j, "threshold", c.threshold);
        read_key(j, "max_steps_per_epoch", c.max_steps_per_epoch);
        read_key(j, "valid_limit", c.valid_limit);
        read_key(j, "panel_samples", c.panel_samples);
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed experiment config: ") + e.what());
    }
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path());
}

nlohmann::json ExperimentConfig::to_json() const {
    return {{"name", name},
            {"variant", to_string(variant)},
            {"preset", preset},
            {"loss_weights",
             {{"adv", weights.adv},
              {"rec", weights.rec},
              {"lat", weights.lat},
              {"cyc", weights.cyc},
              {"seg", weights.seg},
              {"cycle_enabled", weights.cycle_enabled}}},
            {"optimizer",
             {{"lr_generator", optimizer.lr_generator},
              {"lr_discriminator", optimizer.lr_discriminator},
              {"beta1", optimizer.beta1},
              {"beta2", optimizer.beta2},
              {"weight_decay", optimizer.weight_decay},
              {"amsgrad", optimizer.amsgrad}}},
            {"manifest", manifest.string()},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"seeds", seeds},
            {"augmentation", augmentation},
            {"augment",
             {{"max_rotation_deg", augment.max_rotation_deg},
              {"max_zoom_frac", augment.max_zoom_frac},
              {"max_intensity_shift_frac", augment.max_intensity_shift_frac},
              {"hflip", augment.hflip},
              {"vflip", augment.vflip},
              {"spline_grid", augment.spline_grid},
              {"spline_sigma", augment.spline_sigma}}},
            {"output_dir", output_dir.string()},
            {"checkpoint_every", checkpoint_every},
            {"threshold", threshold},
            {"max_steps_per_epoch", max_steps_per_epoch},
            {"valid_limit", valid_limit},
            {"panel_samples", panel_samples}};
}

void ExperimentConfig::validate(bool check_paths) const {
    ArchitecturePreset::by_name(preset).validate();
    weights.validate();
    if (epochs < 0) throw ConfigError("epochs must be nonnegative");
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
    if (seeds.empty()) throw ConfigError("seeds must be nonempty");
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
    if (checkpoint_every < 0 || max_steps_per_epoch < 0 || valid_limit < 0 || panel_samples < 0)
        throw ConfigError("checkpoint_every, max_steps_per_epoch, valid_limit and panel_samples must be nonnegative");
    if (optimizer.lr_generator <= 0.0 || optimizer.lr_discriminator <= 0.0)
        throw ConfigError("learning rates must be positive");
    augment.validate();
    if (variant != VariantKind::proposed && (weights.adv > 0.0 || weights.lat > 0.0 || weights.cyc > 0.0))
        throw ConfigError("translation loss weights need the proposed variant");
    if (check_paths) {
        if (manifest.empty()) throw ConfigError("config has no manifest path");
        if (!std::filesystem::exists(manifest))
            throw ConfigError("manifest " + manifest.string() + " does not exist");
    }
}

std::filesystem::path ExperimentConfig::run_root() const {
    const char* env = std::getenv(kOutputRootEnv);
    const std::filesystem::path root = env && *env ? std::filesystem::path(env) : output_dir;
    return root / name;
}

std::string config_hash(const ExperimentConfig& cfg) {
    auto j = cfg.to_json();
    // Where a run writes and which seeds it covers do not change its results.
    j.erase("output_dir");
    j.erase("seeds");
    return hex(fnv1a(j.dump()));
}

std::string file_hash(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return hex(fnv1a(bytes));
}

}  // namespace transeg::harness
