#include "transeg/data/image.hpp"

#include <algorithm>
#include <cmath>

namespace transeg::data {

Image gray8_to_image(const Gray8& g) {
    Image img(1, g.height, g.width);
    for (std::size_t i = 0; i < g.pixels.size(); ++i)
        img.pixels[i] = static_cast<float>(g.pixels[i] / 127.5 - 1.0);
    return img;
}

Gray8 image_to_gray8(const Image& img, int channel) {
    Gray8 g{img.height, img.width, std::vector<std::uint8_t>(img.plane())};
    const float* src = img.pixels.data() + channel * img.plane();
    for (std::size_t i = 0; i < img.plane(); ++i) {
        const double v = std::round((static_cast<double>(src[i]) + 1.0) * 127.5);
        g.pixels[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
    return g;
}

Mask gray8_to_mask(const Gray8& g) {
    Mask m(g.height, g.width);
    for (std::size_t i = 0; i < g.pixels.size(); ++i) m.pixels[i] = g.pixels[i] != 0;
    return m;
}

Gray8 mask_to_gray8(const Mask& m) {
    Gray8 g{m.height, m.width, std::vector<std::uint8_t>(m.pixels.size())};
    for (std::size_t i = 0; i < m.pixels.size(); ++i) g.pixels[i] = m.pixels[i] ? 255 : 0;
    return g;
}

}  // namespace transeg::data
