#include "transeg/data/manifest.hpp"

#include "transeg/data/png_io.hpp"
#include "transeg/errors.hpp"
#include "transeg/rng.hpp"

#include <cmath>
#include <fstream>

namespace transeg::data {

std::string to_string(Fold f) {
    switch (f) {
        case Fold::train: return "train";
        case Fold::valid: return "valid";
        case Fold::test: return "test";
    }
    return "unknown";
}

std::string to_string(ExampleDomain d) { return d == ExampleDomain::P ? "P" : "A"; }

Fold fold_from_string(const std::string& s) {
    if (s == "train") return Fold::train;
    if (s == "valid") return Fold::valid;
    if (s == "test") return Fold::test;
    throw DataError("unknown fold '" + s + "'");
}

ExampleDomain domain_from_string(const std::string& s) {
    if (s == "P") return ExampleDomain::P;
    if (s == "A") return ExampleDomain::A;
    throw DataError("unknown domain '" + s + "'");
}

std::vector<std::size_t> DatasetManifest::select(Fold fold, std::optional<ExampleDomain> domain) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (r.fold == fold && (!domain || r.domain == *domain)) out.push_back(i);
    }
    return out;
}

nlohmann::json to_json(const ExampleRecord& r) {
    nlohmann::json j;
    j["image_path"] = r.image_path;
    if (r.mask_path) j["mask_path"] = *r.mask_path;
    j["domain"] = to_string(r.domain);
    if (r.digit_class) j["digit_class"] = *r.digit_class;
    j["labeled"] = r.labeled;
    j["fold"] = to_string(r.fold);
    if (r.n_clutter) j["n_clutter"] = *r.n_clutter;
    return j;
}

ExampleRecord record_from_json(const nlohmann::json& j) {
    try {
        ExampleRecord r;
        r.image_path = j.at("image_path").get<std::string>();
        if (j.contains("mask_path")) r.mask_path = j["mask_path"].get<std::string>();
        r.domain = domain_from_string(j.at("domain").get<std::string>());
        if (j.contains("digit_class")) r.digit_class = j["digit_class"].get<int>();
        r.labeled = j.at("labeled").get<bool>();
        r.fold = fold_from_string(j.at("fold").get<std::string>());
        if (j.contains("n_clutter")) r.n_clutter = j["n_clutter"].get<int>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed manifest record: ") + e.what());
    }
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write manifest " + path.string());
    auto header = m.header;
    header["kind"] = "header";
    out << header.dump() << '\n';
    for (const auto& r : m.records) out << to_json(r).dump() << '\n';
    if (!out) throw DataError("write failed for manifest " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest " + path.string());
    DatasetManifest m;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (lineno == 1) {
            if (j.value("kind", "") != "header")
                throw DataError(path.string() + ": first line must be the header");
            j.erase("kind");
            m.header = std::move(j);
            continue;
        }
        m.records.push_back(record_from_json(j));
    }
    if (lineno == 0) throw DataError(path.string() + ": empty manifest");
    return m;
}

ValidationReport validate_manifest(const DatasetManifest& m,
                                   const std::optional<std::filesystem::path>& base_dir) {
    ValidationReport rep;
    rep.n_records = m.records.size();
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        const auto& r = m.records[i];
        auto problem = [&](const std::string& what) {
            rep.problems.push_back("record " + std::to_string(i) + " (" + r.image_path + "): " + what);
        };
        if (r.domain == ExampleDomain::A) {
            if (r.mask_path) problem("A example has a mask");
            if (r.digit_class) problem("A example has a digit class");
            if (r.labeled) problem("A example is labeled");
        } else {
            if (!r.mask_path) problem("P example has no mask");
            if (r.digit_class && (*r.digit_class < 0 || *r.digit_class > 9))
                problem("digit class out of range");
        }
        if (r.labeled && r.fold != Fold::train) problem("labeled example outside the training fold");
        if (!base_dir) continue;

        const auto image = *base_dir / r.image_path;
        if (!std::filesystem::exists(image)) {
            problem("image file missing");
            continue;
        }
        if (!r.mask_path || image.extension() != ".png") continue;
        const auto mask_file = *base_dir / *r.mask_path;
        if (!std::filesystem::exists(mask_file)) {
            problem("mask file missing");
            continue;
        }
        try {
            const auto img = read_png_gray8(image);
            const auto mask = read_png_gray8(mask_file);
            if (img.height != mask.height || img.width != mask.width)
                problem("image and mask sizes differ");
            std::size_t on = 0;
            for (auto v : mask.pixels) {
                if (v != 0 && v != 255) {
                    problem("mask is not binary");
                    break;
                }
                on += v != 0;
            }
            if (on == 0) problem("P mask is empty");
        } catch (const DataError& e) {
            problem(e.what());
        }
    }
    return rep;
}

DatasetManifest select_labeled_subset(const DatasetManifest& m, double fraction,
                                      std::optional<int> class_filter, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction <= 1.0))
        throw ConfigError("labeled fraction must lie in [0, 1]");
    DatasetManifest out = m;
    std::vector<std::size_t> eligible;
    std::size_t n_train_p = 0;
    for (std::size_t i = 0; i < out.records.size(); ++i) {
        auto& r = out.records[i];
        r.labeled = false;
        if (r.fold != Fold::train || r.domain != ExampleDomain::P) continue;
        ++n_train_p;
        if (!class_filter || (r.digit_class && *r.digit_class == *class_filter)) eligible.push_back(i);
    }
    const auto want = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n_train_p)));
    if (eligible.size() < want) {
        throw DataError("labeled subset needs " + std::to_string(want) + " examples but only " +
                        std::to_string(eligible.size()) + " qualify (deficit " +
                        std::to_string(want - eligible.size()) + ")");
    }
    Rng rng(derive_seed(seed, {0x1abe1ed}));
    for (std::size_t k = 0; k < want; ++k) {
        const auto j = k + rng.below(eligible.size() - k);
        std::swap(eligible[k], eligible[j]);
        out.records[eligible[k]].labeled = true;
    }
    out.header["labeled"] = {{"fraction", fraction}, {"count", want}, {"seed", seed}};
    if (class_filter) out.header["labeled"]["class_filter"] = *class_filter;
    return out;
}

}  // namespace transeg::data
