#include "transeg/data/nifti.hpp"

#include "transeg/errors.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <memory>

namespace transeg::data {

namespace {

constexpr int kHeaderSize = 348;
constexpr int kDataOffset = 352;

struct GzCloser {
    void operator()(gzFile f) const {
        if (f) gzclose(f);
    }
};
using GzFile = std::unique_ptr<std::remove_pointer_t<gzFile>, GzCloser>;

template <typename T>
T load(const std::uint8_t* p, bool swap) {
    T v;
    std::memcpy(&v, p, sizeof v);
    if (swap) {
        auto* b = reinterpret_cast<std::uint8_t*>(&v);
        for (std::size_t i = 0; i < sizeof v / 2; ++i) std::swap(b[i], b[sizeof v - 1 - i]);
    }
    return v;
}

template <typename T>
void store(std::uint8_t* p, T v) {
    static_assert(std::endian::native == std::endian::little);
    std::memcpy(p, &v, sizeof v);
}

template <typename T>
void convert(const std::vector<std::uint8_t>& raw, bool swap, std::vector<float>& out) {
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<float>(load<T>(raw.data() + i * sizeof(T), swap));
}

}  // namespace

Volume read_nifti(const std::filesystem::path& path) {
    GzFile f(gzopen(path.c_str(), "rb"));
    if (!f) throw DataError("cannot open " + path.string());
    std::uint8_t hdr[kHeaderSize];
    if (gzread(f.get(), hdr, kHeaderSize) != kHeaderSize)
        throw DataError(path.string() + ": truncated NIfTI header");
    bool swap = false;
    if (load<std::int32_t>(hdr, false) != kHeaderSize) {
        if (load<std::int32_t>(hdr, true) != kHeaderSize)
            throw DataError(path.string() + ": not a NIfTI-1 file");
        swap = true;
    }
    if (std::memcmp(hdr + 344, "n+1", 4) != 0)
        throw DataError(path.string() + ": only single-file NIfTI-1 (n+1) is supported");

    const auto ndim = load<std::int16_t>(hdr + 40, swap);
    if (ndim < 3) throw DataError(path.string() + ": expected a 3-D volume");
    Volume v;
    std::size_t n = 1;
    for (int d = 0; d < 3; ++d) {
        v.dims[d] = load<std::int16_t>(hdr + 42 + 2 * d, swap);
        if (v.dims[d] < 1) throw DataError(path.string() + ": nonpositive dimension");
        n *= static_cast<std::size_t>(v.dims[d]);
    }
    for (int d = 3; d < ndim; ++d) {
        if (load<std::int16_t>(hdr + 42 + 2 * d, swap) > 1)
            throw DataError(path.string() + ": volumes with more than one frame are not supported");
    }
    const auto datatype = load<std::int16_t>(hdr + 70, swap);
    const auto bitpix = load<std::int16_t>(hdr + 72, swap);
    const auto vox_offset = static_cast<long>(load<float>(hdr + 108, swap));
    const auto slope = load<float>(hdr + 112, swap);
    const auto inter = load<float>(hdr + 116, swap);

    if (gzseek(f.get(), vox_offset < kDataOffset ? kDataOffset : vox_offset, SEEK_SET) < 0)
        throw DataError(path.string() + ": cannot seek to voxel data");
    std::vector<std::uint8_t> raw(n * static_cast<std::size_t>(bitpix / 8));
    if (raw.empty()) throw DataError(path.string() + ": unsupported bit depth");
    if (gzread(f.get(), raw.data(), static_cast<unsigned>(raw.size())) != static_cast<int>(raw.size()))
        throw DataError(path.string() + ": truncated voxel data");

    v.voxels.resize(n);
    switch (datatype) {
        case 2: convert<std::uint8_t>(raw, false, v.voxels); break;
        case 4: convert<std::int16_t>(raw, swap, v.voxels); break;
        case 8: convert<std::int32_t>(raw, swap, v.voxels); break;
        case 16: convert<float>(raw, swap, v.voxels); break;
        case 64: convert<double>(raw, swap, v.voxels); break;
        case 256: convert<std::int8_t>(raw, false, v.voxels); break;
        case 512: convert<std::uint16_t>(raw, swap, v.voxels); break;
        case 768: convert<std::uint32_t>(raw, swap, v.voxels); break;
        default:
            throw DataError(path.string() + ": unsupported NIfTI datatype " + std::to_string(datatype));
    }
    if (slope != 0.0f && !(slope == 1.0f && inter == 0.0f)) {
        for (auto& x : v.voxels) x = x * slope + inter;
    }
    return v;
}

void write_nifti(const std::filesystem::path& path, const Volume& v) {
    std::uint8_t hdr[kDataOffset] = {};
    store<std::int32_t>(hdr, kHeaderSize);
    store<std::int16_t>(hdr + 40, 3);
    for (int d = 0; d < 3; ++d) store<std::int16_t>(hdr + 42 + 2 * d, static_cast<std::int16_t>(v.dims[d]));
    for (int d = 3; d < 8; ++d) store<std::int16_t>(hdr + 42 + 2 * d, 1);
    store<std::int16_t>(hdr + 70, 16);
    store<std::int16_t>(hdr + 72, 32);
    for (int d = 0; d < 4; ++d) store<float>(hdr + 76 + 4 * d, 1.0f);
    store<float>(hdr + 108, static_cast<float>(kDataOffset));
    store<float>(hdr + 112, 1.0f);
    std::memcpy(hdr + 344, "n+1", 4);

    GzFile f(gzopen(path.c_str(), "wb6"));
    if (!f) throw DataError("cannot write " + path.string());
    const auto bytes = static_cast<unsigned>(v.voxels.size() * sizeof(float));
    if (gzwrite(f.get(), hdr, kDataOffset) != kDataOffset ||
        gzwrite(f.get(), v.voxels.data(), bytes) != static_cast<int>(bytes))
        throw DataError("write failed for " + path.string());
}

}  // namespace transeg::data
