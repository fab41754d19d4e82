#include "transeg/data/png_io.hpp"

#include "transeg/errors.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

namespace transeg::data {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_file(const std::filesystem::path& path, const char* mode) {
    File f(std::fopen(path.c_str(), mode));
    if (!f) throw DataError("cannot open " + path.string());
    return f;
}

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
    (void)png;
    throw DataError(std::string("png: ") + msg);
}

void png_warn(png_structp, png_const_charp) {}

void write_png(const std::filesystem::path& path, int height, int width, int color_type,
               int bytes_per_pixel, const std::uint8_t* data) {
    if (height <= 0 || width <= 0) throw DataError("png: empty image for " + path.string());
    auto f = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    if (!png) throw DataError("png: cannot allocate writer");
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* p;
        png_infop* i;
        ~Guard() { png_destroy_write_struct(p, i); }
    } guard{&png, &info};
    png_init_io(png, f.get());
    png_set_compression_level(png, 9);
    png_set_filter(png, 0, PNG_FILTER_NONE);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(width) * bytes_per_pixel;
    for (int y = 0; y < height; ++y)
        png_write_row(png, const_cast<png_bytep>(data + y * stride));
    png_write_end(png, nullptr);
}

}  // namespace

void write_png_gray8(const std::filesystem::path& path, const Gray8& img) {
    if (img.pixels.size() != static_cast<std::size_t>(img.height) * img.width)
        throw DataError("png: raster size does not match its dimensions");
    write_png(path, img.height, img.width, PNG_COLOR_TYPE_GRAY, 1, img.pixels.data());
}

Gray8 read_png_gray8(const std::filesystem::path& path) {
    auto f = open_file(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    if (!png) throw DataError("png: cannot allocate reader");
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* p;
        png_infop* i;
        ~Guard() { png_destroy_read_struct(p, i, nullptr); }
    } guard{&png, &info};
    png_init_io(png, f.get());
    png_read_info(png, info);
    const auto width = png_get_image_width(png, info);
    const auto height = png_get_image_height(png, info);
    if (png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY || png_get_bit_depth(png, info) != 8)
        throw DataError("png: " + path.string() + " is not 8-bit grayscale");
    Gray8 out{static_cast<int>(height), static_cast<int>(width),
              std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height)};
    for (png_uint_32 y = 0; y < height; ++y) png_read_row(png, out.pixels.data() + y * width, nullptr);
    png_read_end(png, nullptr);
    return out;
}

}  // namespace transeg::data
