#include "transeg/data/brats.hpp"

#include "transeg/data/png_io.hpp"
#include "transeg/errors.hpp"
#include "transeg/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>

namespace transeg::data {

namespace {

constexpr std::uint16_t kHalfSliceMagic = 0x4853;

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

Fold case_fold(const std::string& name, const BratsSliceSpec& spec, std::uint64_t seed) {
    Rng rng(derive_seed(seed, {fnv1a(name)}));
    const double u = rng.uniform();
    if (u < spec.test_fraction) return Fold::test;
    if (u < spec.test_fraction + spec.valid_fraction) return Fold::valid;
    return Fold::train;
}

void put_u16(std::ostream& out, std::uint16_t v) {
    const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
    out.write(b, 2);
}

std::uint16_t get_u16(const unsigned char* b) { return static_cast<std::uint16_t>(b[0] | (b[1] << 8)); }

std::string slice_name(const std::string& case_name, int z, int side, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "_z%03d_%c%s", z, side == 0 ? 'a' : 'b', ext);
    return case_name + buf;
}

}  // namespace

void BratsSliceSpec::validate() const {
    if (!(min_brain_frac >= 0.0 && min_brain_frac <= 1.0))
        throw ConfigError("min_brain_frac must lie in [0, 1]");
    if (!(min_lesion_frac_of_brain > 0.0 && min_lesion_frac_of_brain <= 1.0))
        throw ConfigError("min_lesion_frac_of_brain must lie in (0, 1]");
    if (channel_suffixes.empty()) throw ConfigError("at least one MRI sequence is required");
    if (valid_fraction < 0.0 || test_fraction < 0.0 || valid_fraction + test_fraction >= 1.0)
        throw ConfigError("valid and test fractions must leave a training fold");
}

nlohmann::json BratsSliceSpec::to_json() const {
    return {{"min_brain_frac", min_brain_frac},
            {"min_lesion_frac_of_brain", min_lesion_frac_of_brain},
            {"hemisphere_split", hemisphere_split},
            {"channels", channel_suffixes},
            {"label_suffix", label_suffix},
            {"valid_fraction", valid_fraction},
            {"test_fraction", test_fraction},
            {"labeled_fraction", labeled_fraction}};
}

SliceRoute route_half_slice(std::size_t total_px, std::size_t brain_px, std::size_t lesion_px,
                            const BratsSliceSpec& spec) {
    if (total_px == 0) return SliceRoute::discard;
    if (static_cast<double>(brain_px) < spec.min_brain_frac * static_cast<double>(total_px))
        return SliceRoute::discard;
    if (lesion_px == 0) return SliceRoute::absence;
    if (static_cast<double>(lesion_px) >= spec.min_lesion_frac_of_brain * static_cast<double>(brain_px))
        return SliceRoute::presence;
    return SliceRoute::discard;
}

std::vector<std::uint8_t> brain_mask(const std::vector<Volume>& channels) {
    if (channels.empty()) return {};
    std::vector<std::uint8_t> brain(channels[0].voxels.size(), 0);
    for (const auto& v : channels)
        for (std::size_t i = 0; i < brain.size(); ++i) brain[i] |= v.voxels[i] != 0.0f;
    return brain;
}

void normalize_brain(std::vector<Volume>& channels, const std::vector<std::uint8_t>& brain) {
    for (auto& v : channels) {
        double sum = 0.0, sq = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < brain.size(); ++i) {
            if (!brain[i]) continue;
            sum += v.voxels[i];
            ++n;
        }
        if (n == 0) throw DataError("volume has no brain voxels");
        const double mean = sum / static_cast<double>(n);
        for (std::size_t i = 0; i < brain.size(); ++i) {
            if (!brain[i]) continue;
            const double d = v.voxels[i] - mean;
            sq += d * d;
        }
        const double sd = std::sqrt(sq / static_cast<double>(n));
        const double inv = sd > 0.0 ? 1.0 / sd : 1.0;
        for (std::size_t i = 0; i < brain.size(); ++i)
            v.voxels[i] = brain[i] ? static_cast<float>((v.voxels[i] - mean) * inv) : 0.0f;
    }
}

std::vector<HalfSlice> extract_half_slices(const std::vector<Volume>& channels, const Volume& label,
                                           const std::vector<std::uint8_t>& brain, int z,
                                           bool hemisphere_split) {
    const int nx = channels.at(0).dims[0];
    const int ny = channels[0].dims[1];
    const int sides = hemisphere_split ? 2 : 1;
    const int w = hemisphere_split ? nx / 2 : nx;
    std::vector<HalfSlice> out;
    for (int side = 0; side < sides; ++side) {
        HalfSlice hs;
        hs.side = side;
        hs.image = Image(static_cast<int>(channels.size()), ny, w);
        hs.lesion = Mask(ny, w);
        const int x0 = side == 0 ? 0 : nx - w;
        for (int y = 0; y < ny; ++y) {
            for (int x = 0; x < w; ++x) {
                const auto i = channels[0].index(x0 + x, y, z);
                for (std::size_t c = 0; c < channels.size(); ++c)
                    hs.image.at(static_cast<int>(c), y, x) = channels[c].voxels[i];
                hs.brain_px += brain[i];
                const bool lesion = label.voxels[i] > 0.0f;
                hs.lesion.at(y, x) = lesion;
                hs.lesion_px += lesion;
            }
        }
        out.push_back(std::move(hs));
    }
    return out;
}

void write_half_slice(const std::filesystem::path& path, const Image& img) {
    if (img.channels > 0xffff || img.height > 0xffff || img.width > 0xffff)
        throw DataError("half-slice dimensions exceed the 16-bit header");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    put_u16(out, kHalfSliceMagic);
    put_u16(out, static_cast<std::uint16_t>(img.channels));
    put_u16(out, static_cast<std::uint16_t>(img.height));
    put_u16(out, static_cast<std::uint16_t>(img.width));
    static_assert(std::endian::native == std::endian::little);
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size() * sizeof(float)));
    if (!out) throw DataError("write failed for " + path.string());
}

Image read_half_slice(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    unsigned char hdr[8];
    if (!in.read(reinterpret_cast<char*>(hdr), 8)) throw DataError(path.string() + ": truncated header");
    if (get_u16(hdr) != kHalfSliceMagic) throw DataError(path.string() + ": bad half-slice magic");
    Image img(get_u16(hdr + 2), get_u16(hdr + 4), get_u16(hdr + 6));
    const auto bytes = static_cast<std::streamsize>(img.pixels.size() * sizeof(float));
    if (!in.read(reinterpret_cast<char*>(img.pixels.data()), bytes) || in.peek() != EOF)
        throw DataError(path.string() + ": payload size does not match header");
    return img;
}

BratsConversion brats_to_half_slices(const std::filesystem::path& volume_dir,
                                     const BratsSliceSpec& spec, const std::filesystem::path& out_dir,
                                     std::uint64_t seed) {
    spec.validate();
    if (!std::filesystem::is_directory(volume_dir))
        throw DataError("volume directory " + volume_dir.string() + " does not exist");
    std::vector<std::filesystem::path> cases;
    for (const auto& e : std::filesystem::directory_iterator(volume_dir))
        if (e.is_directory()) cases.push_back(e.path());
    std::sort(cases.begin(), cases.end());

    BratsConversion result;
    auto& m = result.manifest;
    for (const auto& dir : cases) {
        const std::string name = dir.filename().string();
        std::vector<Volume> channels;
        Volume label;
        try {
            for (const auto& s : spec.channel_suffixes) {
                const auto file = dir / (name + "_" + s + spec.extension);
                if (!std::filesystem::exists(file)) throw DataError("missing sequence '" + s + "'");
                channels.push_back(read_nifti(file));
            }
            const auto label_file = dir / (name + "_" + spec.label_suffix + spec.extension);
            if (!std::filesystem::exists(label_file)) throw DataError("missing label volume");
            label = read_nifti(label_file);
            for (const auto& v : channels) {
                if (v.dims != channels[0].dims) throw DataError("sequence shapes disagree");
            }
            if (label.dims != channels[0].dims) throw DataError("label shape disagrees with sequences");
        } catch (const DataError& e) {
            result.skipped.push_back(name + ": " + e.what());
            std::cerr << "brats: skipping " << name << ": " << e.what() << '\n';
            continue;
        }

        const auto brain = brain_mask(channels);
        try {
            normalize_brain(channels, brain);
        } catch (const DataError& e) {
            result.skipped.push_back(name + ": " + e.what());
            std::cerr << "brats: skipping " << name << ": " << e.what() << '\n';
            continue;
        }
        const Fold fold = case_fold(name, spec, seed);
        for (int z = 0; z < channels[0].dims[2]; ++z) {
            for (auto& hs : extract_half_slices(channels, label, brain, z, spec.hemisphere_split)) {
                const auto route = route_half_slice(hs.lesion.pixels.size(), hs.brain_px,
                                                    hs.lesion_px, spec);
                if (route == SliceRoute::discard) continue;
                const auto domain = route == SliceRoute::presence ? ExampleDomain::P : ExampleDomain::A;
                const auto rel = std::filesystem::path(to_string(fold)) / to_string(domain);
                std::filesystem::create_directories(out_dir / rel);
                ExampleRecord r;
                r.domain = domain;
                r.fold = fold;
                r.image_path = (rel / slice_name(name, z, hs.side, ".hs")).generic_string();
                write_half_slice(out_dir / r.image_path, hs.image);
                if (domain == ExampleDomain::P) {
                    r.mask_path = (rel / slice_name(name, z, hs.side, "_mask.png")).generic_string();
                    write_png_gray8(out_dir / *r.mask_path, mask_to_gray8(hs.lesion));
                }
                m.records.push_back(std::move(r));
            }
        }
    }
    m.header = {{"format", "transeg-manifest"},
                {"version", 1},
                {"generator", "brats_half_slices"},
                {"spec", spec.to_json()},
                {"master_seed", seed},
                {"skipped", result.skipped}};
    m = select_labeled_subset(m, spec.labeled_fraction, std::nullopt, seed);
    write_manifest(out_dir / "manifest.jsonl", m);
    return result;
}

}  // namespace transeg::data
