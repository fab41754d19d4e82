#pragma once

#include <cstdint>
#include <vector>

namespace transeg::data {

/// Planar float image, channel-major then row-major.
struct Image {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> pixels;

    Image() = default;
    Image(int c, int h, int w, float fill = 0.0f)
        : channels(c), height(h), width(w), pixels(static_cast<std::size_t>(c) * h * w, fill) {}

    float& at(int c, int y, int x) { return pixels[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    float at(int c, int y, int x) const {
        return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
};

/// Binary segmentation mask, one byte per pixel holding 0 or 1.
struct Mask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;

    Mask() = default;
    Mask(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, 0) {}

    std::uint8_t& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::size_t count() const {
        std::size_t n = 0;
        for (auto p : pixels) n += p != 0;
        return n;
    }
};

/// 8-bit grayscale raster as stored on disk.
struct Gray8 {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;
};

/// Byte value v maps to v / 127.5 - 1.
Image gray8_to_image(const Gray8& g);
/// Inverse of gray8_to_image with rounding and clamping to [0, 255].
Gray8 image_to_gray8(const Image& img, int channel = 0);

/// Mask pixels are 1 where the byte is nonzero.
Mask gray8_to_mask(const Gray8& g);
/// Stored as {0, 255}.
Gray8 mask_to_gray8(const Mask& m);

}  // namespace transeg::data
