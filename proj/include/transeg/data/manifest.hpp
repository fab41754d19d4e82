#pragma once

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace transeg::data {

enum class Fold { train, valid, test };
enum class ExampleDomain { P, A };

std::string to_string(Fold f);
std::string to_string(ExampleDomain d);
Fold fold_from_string(const std::string& s);
ExampleDomain domain_from_string(const std::string& s);

/// One generated example. Paths are relative to the manifest's directory.
///
/// Invariants: domain A has neither mask nor digit class; labeled implies
/// domain P with a mask.
struct ExampleRecord {
    std::string image_path;
    std::optional<std::string> mask_path;
    ExampleDomain domain = ExampleDomain::P;
    std::optional<int> digit_class;
    bool labeled = false;
    Fold fold = Fold::train;
    /// Clutter crops placed (cluttered MNIST only).
    std::optional<int> n_clutter;
};

struct DatasetManifest {
    /// Generator kind, spec and seed.
    nlohmann::json header = nlohmann::json::object();
    std::vector<ExampleRecord> records;

    std::vector<std::size_t> select(Fold fold, std::optional<ExampleDomain> domain = {}) const;
};

nlohmann::json to_json(const ExampleRecord& r);
ExampleRecord record_from_json(const nlohmann::json& j);

/// JSONL: a header object tagged `"kind": "header"` followed by one record per line.
void write_manifest(const std::filesystem::path& path, const DatasetManifest& m);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Problems found by validate_manifest; empty when the manifest is sound.
struct ValidationReport {
    std::vector<std::string> problems;
    std::size_t n_records = 0;
    bool ok() const { return problems.empty(); }
};

/// Checks record invariants and, with `base_dir`, that files exist, P masks
/// are nonempty and image/mask sizes agree.
ValidationReport validate_manifest(const DatasetManifest& m,
                                   const std::optional<std::filesystem::path>& base_dir = {});

/// Marks round(fraction * |train P|) training P examples as labeled, drawn
/// uniformly without replacement from those of `class_filter` (all training P
/// examples when absent). Throws DataError naming the deficit when too few
/// examples qualify.
DatasetManifest select_labeled_subset(const DatasetManifest& m, double fraction,
                                      std::optional<int> class_filter, std::uint64_t seed);

}  // namespace transeg::data
