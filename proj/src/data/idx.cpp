#include "transeg/data/idx.hpp"

#include "transeg/errors.hpp"

#include <zlib.h>

#include <array>
#include <memory>

namespace transeg::data {

namespace {

struct GzCloser {
    void operator()(gzFile f) const {
        if (f) gzclose(f);
    }
};
using GzFile = std::unique_ptr<std::remove_pointer_t<gzFile>, GzCloser>;

// gzread passes uncompressed files through unchanged.
std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
    GzFile f(gzopen(path.c_str(), "rb"));
    if (!f) throw DataError("cannot open " + path.string());
    std::vector<std::uint8_t> out;
    std::array<std::uint8_t, 1 << 16> buf;
    int n;
    while ((n = gzread(f.get(), buf.data(), buf.size())) > 0) out.insert(out.end(), buf.begin(), buf.begin() + n);
    if (n < 0) throw DataError("read error in " + path.string());
    return out;
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off) {
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
           (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

void write_all(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> f(std::fopen(path.c_str(), "wb"), std::fclose);
    if (!f || std::fwrite(bytes.data(), 1, bytes.size(), f.get()) != bytes.size())
        throw DataError("cannot write " + path.string());
}

std::filesystem::path find_variant(const std::filesystem::path& dir, const std::string& stem) {
    for (const auto& name : {stem, stem + ".gz"}) {
        if (std::filesystem::exists(dir / name)) return dir / name;
    }
    throw DataError("missing MNIST file " + (dir / stem).string() + "[.gz]");
}

}  // namespace

DigitSet DigitSet::slice(std::size_t begin, std::size_t end) const {
    DigitSet out;
    out.rows = rows;
    out.cols = cols;
    const std::size_t px = static_cast<std::size_t>(rows) * cols;
    out.pixels.assign(pixels.begin() + begin * px, pixels.begin() + end * px);
    out.labels.assign(labels.begin() + begin, labels.begin() + end);
    return out;
}

DigitSet read_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
    const auto img = read_all(images);
    const auto lab = read_all(labels);
    if (img.size() < 16 || be32(img, 0) != 0x00000803)
        throw DataError(images.string() + ": not an IDX3 unsigned-byte file");
    if (lab.size() < 8 || be32(lab, 0) != 0x00000801)
        throw DataError(labels.string() + ": not an IDX1 unsigned-byte file");
    const std::size_t n = be32(img, 4);
    DigitSet set;
    set.rows = static_cast<int>(be32(img, 8));
    set.cols = static_cast<int>(be32(img, 12));
    const std::size_t px = static_cast<std::size_t>(set.rows) * set.cols;
    if (img.size() != 16 + n * px) throw DataError(images.string() + ": truncated image data");
    if (be32(lab, 4) != n || lab.size() != 8 + n)
        throw DataError(labels.string() + ": label count does not match image count");
    set.pixels.assign(img.begin() + 16, img.end());
    set.labels.assign(lab.begin() + 8, lab.end());
    for (auto l : set.labels) {
        if (l > 9) throw DataError(labels.string() + ": label out of range");
    }
    return set;
}

void write_idx(const DigitSet& set, const std::filesystem::path& images,
               const std::filesystem::path& labels) {
    std::vector<std::uint8_t> img, lab;
    put_be32(img, 0x00000803);
    put_be32(img, static_cast<std::uint32_t>(set.size()));
    put_be32(img, static_cast<std::uint32_t>(set.rows));
    put_be32(img, static_cast<std::uint32_t>(set.cols));
    img.insert(img.end(), set.pixels.begin(), set.pixels.end());
    put_be32(lab, 0x00000801);
    put_be32(lab, static_cast<std::uint32_t>(set.size()));
    lab.insert(lab.end(), set.labels.begin(), set.labels.end());
    write_all(images, img);
    write_all(labels, lab);
}

FoldDigits split_folds(const DigitSet& train, const DigitSet& test, std::size_t n_valid) {
    if (n_valid >= train.size())
        throw DataError("validation split needs fewer digits than the training set holds");
    FoldDigits f;
    f.train = train.slice(0, train.size() - n_valid);
    f.valid = train.slice(train.size() - n_valid, train.size());
    f.test = test;
    return f;
}

FoldDigits load_mnist_dir(const std::filesystem::path& dir, std::size_t n_valid) {
    auto train = read_idx(find_variant(dir, "train-images-idx3-ubyte"),
                          find_variant(dir, "train-labels-idx1-ubyte"));
    auto test = read_idx(find_variant(dir, "t10k-images-idx3-ubyte"),
                         find_variant(dir, "t10k-labels-idx1-ubyte"));
    return split_folds(train, test, n_valid);
}

}  // namespace transeg::data
