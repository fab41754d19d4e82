#pragma once

#include "transeg/data/image.hpp"
#include "transeg/data/manifest.hpp"
#include "transeg/networks.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace transeg::harness {

/// Manifest-backed access to generated examples. PNG datasets are decoded
/// once up front; half-slice datasets are read per request.
class ExampleStore {
public:
    ExampleStore(data::DatasetManifest manifest, std::filesystem::path base_dir,
                 const ArchitecturePreset& preset);
    static ExampleStore open(const std::filesystem::path& manifest_path, const ArchitecturePreset& preset);

    const data::DatasetManifest& manifest() const { return manifest_; }
    const data::ExampleRecord& record(std::size_t i) const { return manifest_.records.at(i); }

    /// Throws DataError when the file disagrees with the preset's image shape.
    data::Image image(std::size_t i) const;
    std::optional<data::Mask> mask(std::size_t i) const;

    std::vector<std::size_t> select(data::Fold fold, std::optional<data::ExampleDomain> domain = {}) const {
        return manifest_.select(fold, domain);
    }

private:
    data::Image load_image(std::size_t i) const;
    std::optional<data::Mask> load_mask(std::size_t i) const;

    data::DatasetManifest manifest_;
    std::filesystem::path base_dir_;
    ArchitecturePreset preset_;
    bool preloaded_ = false;
    std::vector<data::Image> images_;
    std::vector<std::optional<data::Mask>> masks_;
};

/// (B, C, H, W) float32.
torch::Tensor stack_images(const std::vector<data::Image>& images);
/// (B, 1, H, W) float32 in {0, 1}; missing masks become zeros of size (h, w).
torch::Tensor stack_masks(const std::vector<std::optional<data::Mask>>& masks, int height, int width);

/// Convenience: images (and masks) of `records` as batch tensors.
struct Batch {
    torch::Tensor images;
    torch::Tensor masks;
};
Batch load_batch(const ExampleStore& store, const std::vector<std::size_t>& records);

}  // namespace transeg::harness
