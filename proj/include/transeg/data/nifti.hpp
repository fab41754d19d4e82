#pragma once

#include <array>
#include <filesystem>
#include <vector>

namespace transeg::data {

/// A 3-D scalar volume, x varying fastest.
struct Volume {
    std::array<int, 3> dims{0, 0, 0};
    std::vector<float> voxels;

    std::size_t index(int x, int y, int z) const {
        return (static_cast<std::size_t>(z) * dims[1] + y) * dims[0] + x;
    }
    float at(int x, int y, int z) const { return voxels[index(x, y, z)]; }
};

/// NIfTI-1 single-file reader (.nii or .nii.gz, either byte order). Integer and
/// float voxel types are converted to float with scl_slope/scl_inter applied.
Volume read_nifti(const std::filesystem::path& path);

/// Writes a gzip-compressed little-endian float32 NIfTI-1 file.
void write_nifti(const std::filesystem::path& path, const Volume& v);

}  // namespace transeg::data
