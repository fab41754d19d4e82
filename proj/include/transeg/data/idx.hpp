#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace transeg::data {

/// A set of equally sized 8-bit digit images with class labels.
struct DigitSet {
    int rows = 28;
    int cols = 28;
    std::vector<std::uint8_t> pixels;
    std::vector<std::uint8_t> labels;

    std::size_t size() const { return labels.size(); }
    const std::uint8_t* digit(std::size_t i) const {
        return pixels.data() + i * static_cast<std::size_t>(rows) * cols;
    }
    DigitSet slice(std::size_t begin, std::size_t end) const;
};

/// IDX3 (images) and IDX1 (labels) readers; gzip-compressed files are accepted.
DigitSet read_idx(const std::filesystem::path& images, const std::filesystem::path& labels);
void write_idx(const DigitSet& set, const std::filesystem::path& images,
               const std::filesystem::path& labels);

/// Source digits partitioned by fold.
struct FoldDigits {
    DigitSet train;
    DigitSet valid;
    DigitSet test;
};

/// The last `n_valid` training digits become the validation fold.
FoldDigits split_folds(const DigitSet& train, const DigitSet& test, std::size_t n_valid);

/// Reads `train-images-idx3-ubyte[.gz]` and siblings from `dir`.
FoldDigits load_mnist_dir(const std::filesystem::path& dir, std::size_t n_valid);

}  // namespace transeg::data
