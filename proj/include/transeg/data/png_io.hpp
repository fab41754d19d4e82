#pragma once

#include "transeg/data/image.hpp"

#include <filesystem>

namespace transeg::data {

/// Writes an 8-bit grayscale PNG with fixed compression settings and no
/// ancillary chunks, so identical rasters give identical files.
void write_png_gray8(const std::filesystem::path& path, const Gray8& img);

/// Reads an 8-bit grayscale PNG. Throws DataError for any other format.
Gray8 read_png_gray8(const std::filesystem::path& path);

}  // namespace transeg::data
