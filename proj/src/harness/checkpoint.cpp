#include "transeg/harness/checkpoint.hpp"

#include "transeg/errors.hpp"

#include <zlib.h>

#include <array>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace transeg::harness {

namespace {

constexpr std::array<char, 8> kMagic{'T', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};
constexpr std::size_t kHeaderBytes = 8 + 4 + 8 + 4;

using Kind = CheckpointError::Kind;

template <typename T>
void put(std::string& out, T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    out.append(b, sizeof(T));
}

template <typename T>
T get(const std::string& in, std::size_t off) {
    T v;
    std::memcpy(&v, in.data() + off, sizeof(T));
    return v;
}

std::uint32_t crc(const std::string& payload) {
    return static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size())));
}

// Returns the verified payload.
std::string read_payload(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(Kind::io, "cannot open checkpoint " + path.string());
    const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0)
        throw CheckpointError(Kind::corrupt, path.string() + ": not a checkpoint (bad magic or truncated header)");
    const auto version = get<std::uint32_t>(bytes, 8);
    if (version != kCheckpointVersion) {
        throw CheckpointError(Kind::version, path.string() + ": checkpoint format version " +
                                                 std::to_string(version) + ", expected " +
                                                 std::to_string(kCheckpointVersion));
    }
    const auto length = get<std::uint64_t>(bytes, 12);
    const auto expected_crc = get<std::uint32_t>(bytes, 20);
    if (bytes.size() - kHeaderBytes != length) {
        throw CheckpointError(Kind::corrupt, path.string() + ": payload is " +
                                                 std::to_string(bytes.size() - kHeaderBytes) +
                                                 " bytes, header says " + std::to_string(length));
    }
    std::string payload = bytes.substr(kHeaderBytes);
    if (crc(payload) != expected_crc) throw CheckpointError(Kind::corrupt, path.string() + ": checksum mismatch");
    return payload;
}

torch::serialize::InputArchive open_archive(const std::string& payload, const std::filesystem::path& path) {
    torch::serialize::InputArchive archive;
    try {
        std::istringstream in(payload);
        archive.load_from(in);
    } catch (const c10::Error& e) {
        throw CheckpointError(Kind::corrupt, path.string() + ": unreadable archive: " + e.what_without_backtrace());
    }
    return archive;
}

CheckpointMeta read_meta(torch::serialize::InputArchive& archive) {
    torch::serialize::InputArchive m;
    archive.read("meta", m);
    auto str = [&](const char* key) {
        c10::IValue v;
        m.read(key, v);
        return v.toStringRef();
    };
    auto integer = [&](const char* key) {
        c10::IValue v;
        m.read(key, v);
        return v.toInt();
    };
    CheckpointMeta meta;
    meta.preset = str("preset");
    meta.variant = str("variant");
    meta.epoch = integer("epoch");
    meta.step = integer("step");
    c10::IValue best;
    m.read("best_valid_dice", best);
    meta.best_valid_dice = best.toDouble();
    meta.best_epoch = integer("best_epoch");
    meta.config_json = str("config_json");
    meta.config_hash = str("config_hash");
    meta.dataset_hash = str("dataset_hash");
    return meta;
}

void check_compatible(const CheckpointMeta& meta, const SegTransModelImpl& model, const std::filesystem::path& path) {
    if (meta.preset != model.preset().name || meta.variant != to_string(model.kind())) {
        throw CheckpointError(Kind::incompatible, path.string() + ": checkpoint holds a " + meta.variant + "/" +
                                                      meta.preset + " model, target is " +
                                                      to_string(model.kind()) + "/" + model.preset().name);
    }
}

void load_into(torch::serialize::InputArchive& archive, TrainingState& state) {
    torch::serialize::InputArchive model, gen_opt, disc_opt;
    archive.read("model", model);
    state.model->load(model);
    archive.read("generator_optimizer", gen_opt);
    state.generator_optimizer->load(gen_opt);
    if (state.discriminator_optimizer) {
        archive.read("discriminator_optimizer", disc_opt);
        state.discriminator_optimizer->load(disc_opt);
    }
    torch::Tensor gen_state;
    archive.read("sampling_generator", gen_state);
    state.generator.set_state(gen_state);
}

bool same_shapes(torch::nn::Module& a, torch::nn::Module& b) {
    auto pa = a.named_parameters(), pb = b.named_parameters();
    auto ba = a.named_buffers(), bb = b.named_buffers();
    if (pa.size() != pb.size() || ba.size() != bb.size()) return false;
    for (const auto& item : pa) {
        const auto* other = pb.find(item.key());
        if (!other || other->sizes() != item.value().sizes()) return false;
    }
    for (const auto& item : ba) {
        const auto* other = bb.find(item.key());
        if (!other || other->sizes() != item.value().sizes()) return false;
    }
    return true;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, TrainingState& state, const CheckpointMeta& meta) {
    torch::serialize::OutputArchive archive, model, gen_opt, disc_opt, m;
    state.model->save(model);
    archive.write("model", model);
    state.generator_optimizer->save(gen_opt);
    archive.write("generator_optimizer", gen_opt);
    if (state.discriminator_optimizer) {
        state.discriminator_optimizer->save(disc_opt);
        archive.write("discriminator_optimizer", disc_opt);
    }
    archive.write("sampling_generator", state.generator.get_state());
    m.write("preset", c10::IValue(meta.preset));
    m.write("variant", c10::IValue(meta.variant));
    m.write("epoch", c10::IValue(meta.epoch));
    m.write("step", c10::IValue(meta.step));
    m.write("best_valid_dice", c10::IValue(meta.best_valid_dice));
    m.write("best_epoch", c10::IValue(meta.best_epoch));
    m.write("config_json", c10::IValue(meta.config_json));
    m.write("config_hash", c10::IValue(meta.config_hash));
    m.write("dataset_hash", c10::IValue(meta.dataset_hash));
    archive.write("meta", m);

    std::ostringstream body;
    archive.save_to(body);
    const std::string payload = body.str();
    std::string header(kMagic.data(), kMagic.size());
    put<std::uint32_t>(header, kCheckpointVersion);
    put<std::uint64_t>(header, payload.size());
    put<std::uint32_t>(header, crc(payload));

    // Write-then-rename keeps the previous checkpoint intact if writing fails.
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        out.write(header.data(), static_cast<std::streamsize>(header.size()));
        out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
        if (!out) throw CheckpointError(Kind::io, "cannot write checkpoint " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path) {
    const auto payload = read_payload(path);
    auto archive = open_archive(payload, path);
    try {
        return read_meta(archive);
    } catch (const c10::Error& e) {
        throw CheckpointError(Kind::corrupt, path.string() + ": missing metadata: " + e.what_without_backtrace());
    }
}

CheckpointMeta load_checkpoint(const std::filesystem::path& path, TrainingState& state) {
    const auto payload = read_payload(path);
    auto archive = open_archive(payload, path);
    CheckpointMeta meta;
    try {
        meta = read_meta(archive);
    } catch (const c10::Error& e) {
        throw CheckpointError(Kind::corrupt, path.string() + ": missing metadata: " + e.what_without_backtrace());
    }
    check_compatible(meta, *state.model, path);

    // Dry run on a scratch copy so a failing load leaves `state` untouched.
    {
        SegTransModel scratch(state.model->preset(), state.model->kind());
        TrainingState probe(scratch, state.optimizer_config, state.weights, 0);
        try {
            load_into(archive, probe);
        } catch (const c10::Error& e) {
            throw CheckpointError(Kind::incompatible,
                                  path.string() + ": cannot restore state: " + e.what_without_backtrace());
        }
        if (!same_shapes(*probe.model, *state.model))
            throw CheckpointError(Kind::incompatible, path.string() + ": tensor shapes differ from the target model");
    }
    auto fresh = open_archive(payload, path);
    load_into(fresh, state);
    return meta;
}

SegTransModel load_model(const std::filesystem::path& path, CheckpointMeta* meta_out) {
    const auto payload = read_payload(path);
    auto archive = open_archive(payload, path);
    CheckpointMeta meta;
    try {
        meta = read_meta(archive);
    } catch (const c10::Error& e) {
        throw CheckpointError(Kind::corrupt, path.string() + ": missing metadata: " + e.what_without_backtrace());
    }
    SegTransModel model(ArchitecturePreset::by_name(meta.preset), variant_from_string(meta.variant));
    try {
        torch::serialize::InputArchive m;
        archive.read("model", m);
        model->load(m);
    } catch (const c10::Error& e) {
        throw CheckpointError(Kind::incompatible, path.string() + ": cannot restore model: " + e.what_without_backtrace());
    }
    if (meta_out) *meta_out = meta;
    return model;
}

}  // namespace transeg::harness
