#pragma once

#include "transeg/data/image.hpp"
#include "transeg/data/manifest.hpp"
#include "transeg/data/nifti.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace transeg::data {

/// Half-slice admission rules and the on-disk case layout
/// `<volume_dir>/<case>/<case>_<suffix><extension>`.
struct BratsSliceSpec {
    double min_brain_frac = 0.25;
    double min_lesion_frac_of_brain = 0.01;
    bool hemisphere_split = true;
    std::vector<std::string> channel_suffixes{"t1", "t2", "t1ce", "flair"};
    std::string label_suffix = "seg";
    std::string extension = ".nii.gz";
    double valid_fraction = 0.1;
    double test_fraction = 0.1;
    double labeled_fraction = 0.01;

    void validate() const;
    nlohmann::json to_json() const;
};

enum class SliceRoute { presence, absence, discard };

/// Admission needs brain >= min_brain_frac of all pixels; P needs lesion >=
/// min_lesion_frac_of_brain of brain pixels, A needs no lesion at all.
SliceRoute route_half_slice(std::size_t total_px, std::size_t brain_px, std::size_t lesion_px,
                            const BratsSliceSpec& spec);

/// Voxels nonzero in any channel.
std::vector<std::uint8_t> brain_mask(const std::vector<Volume>& channels);

/// Per channel, brain voxels become (v - mean) / std over the brain; background stays 0.
void normalize_brain(std::vector<Volume>& channels, const std::vector<std::uint8_t>& brain);

struct HalfSlice {
    Image image;
    Mask lesion;
    std::size_t brain_px = 0;
    std::size_t lesion_px = 0;
    /// 0 for the low-x half (or the full slice), 1 for the high-x half.
    int side = 0;
};

/// Axial slice z split at the x midline. Rows follow y, columns follow x.
std::vector<HalfSlice> extract_half_slices(const std::vector<Volume>& channels, const Volume& label,
                                           const std::vector<std::uint8_t>& brain, int z,
                                           bool hemisphere_split);

/// Flat float32 array behind an 8-byte header: magic 0x4853, then channels,
/// height, width, all little-endian u16.
void write_half_slice(const std::filesystem::path& path, const Image& img);
Image read_half_slice(const std::filesystem::path& path);

struct BratsConversion {
    DatasetManifest manifest;
    /// One "<case>: <reason>" entry per skipped volume.
    std::vector<std::string> skipped;
};

/// Converts every case directory below `volume_dir`, writes half-slices,
/// lesion masks and `out_dir/manifest.jsonl`. Cases are assigned to folds by
/// a hash of their name; the labeled subset is drawn from training P slices.
BratsConversion brats_to_half_slices(const std::filesystem::path& volume_dir,
                                     const BratsSliceSpec& spec, const std::filesystem::path& out_dir,
                                     std::uint64_t seed);

}  // namespace transeg::data
