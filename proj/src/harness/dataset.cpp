#include "transeg/harness/dataset.hpp"

#include "transeg/data/brats.hpp"
#include "transeg/data/png_io.hpp"
#include "transeg/errors.hpp"

#include <cstring>

namespace transeg::harness {

ExampleStore::ExampleStore(data::DatasetManifest manifest, std::filesystem::path base_dir,
                           const ArchitecturePreset& preset)
    : manifest_(std::move(manifest)), base_dir_(std::move(base_dir)), preset_(preset) {
    bool all_png = !manifest_.records.empty();
    for (const auto& r : manifest_.records)
        all_png = all_png && std::filesystem::path(r.image_path).extension() == ".png";
    if (!all_png) return;
    images_.reserve(manifest_.records.size());
    masks_.reserve(manifest_.records.size());
    for (std::size_t i = 0; i < manifest_.records.size(); ++i) {
        images_.push_back(load_image(i));
        masks_.push_back(load_mask(i));
    }
    preloaded_ = true;
}

ExampleStore ExampleStore::open(const std::filesystem::path& manifest_path, const ArchitecturePreset& preset) {
    return ExampleStore(data::read_manifest(manifest_path), manifest_path.parent_path(), preset);
}

data::Image ExampleStore::load_image(std::size_t i) const {
    const auto& r = manifest_.records.at(i);
    const auto path = base_dir_ / r.image_path;
    data::Image img = path.extension() == ".png" ? data::gray8_to_image(data::read_png_gray8(path))
                                                 : data::read_half_slice(path);
    if (img.channels != preset_.image_channels || img.height != preset_.height || img.width != preset_.width) {
        throw DataError(path.string() + ": image is " + std::to_string(img.channels) + "x" +
                        std::to_string(img.height) + "x" + std::to_string(img.width) + " but preset '" +
                        preset_.name + "' expects " + std::to_string(preset_.image_channels) + "x" +
                        std::to_string(preset_.height) + "x" + std::to_string(preset_.width));
    }
    return img;
}

std::optional<data::Mask> ExampleStore::load_mask(std::size_t i) const {
    const auto& r = manifest_.records.at(i);
    if (!r.mask_path) return std::nullopt;
    auto m = data::gray8_to_mask(data::read_png_gray8(base_dir_ / *r.mask_path));
    if (m.height != preset_.height || m.width != preset_.width)
        throw DataError(*r.mask_path + ": mask size does not match the preset");
    return m;
}

data::Image ExampleStore::image(std::size_t i) const { return preloaded_ ? images_.at(i) : load_image(i); }

std::optional<data::Mask> ExampleStore::mask(std::size_t i) const {
    return preloaded_ ? masks_.at(i) : load_mask(i);
}

torch::Tensor stack_images(const std::vector<data::Image>& images) {
    if (images.empty()) throw ShapeError("cannot stack an empty image list");
    const auto& f = images.front();
    auto out = torch::empty({static_cast<std::int64_t>(images.size()), f.channels, f.height, f.width});
    float* dst = out.data_ptr<float>();
    for (const auto& img : images) {
        if (img.pixels.size() != f.pixels.size()) throw ShapeError("images in a batch differ in size");
        std::memcpy(dst, img.pixels.data(), img.pixels.size() * sizeof(float));
        dst += img.pixels.size();
    }
    return out;
}

torch::Tensor stack_masks(const std::vector<std::optional<data::Mask>>& masks, int height, int width) {
    auto out = torch::zeros({static_cast<std::int64_t>(masks.size()), 1, height, width});
    auto acc = out.accessor<float, 4>();
    for (std::size_t b = 0; b < masks.size(); ++b) {
        if (!masks[b]) continue;
        const auto& m = *masks[b];
        if (m.height != height || m.width != width) throw ShapeError("mask size does not match the batch");
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) acc[b][0][y][x] = m.at(y, x);
    }
    return out;
}

Batch load_batch(const ExampleStore& store, const std::vector<std::size_t>& records) {
    std::vector<data::Image> images;
    std::vector<std::optional<data::Mask>> masks;
    for (auto i : records) {
        images.push_back(store.image(i));
        masks.push_back(store.mask(i));
    }
    Batch b;
    b.images = stack_images(images);
    b.masks = stack_masks(masks, images.front().height, images.front().width);
    return b;
}

}  // namespace transeg::harness
