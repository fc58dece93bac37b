#include "genda/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "genda/errors.hpp"

namespace genda {

namespace {

constexpr char kMagic[4] = {'G', 'D', 'A', 'C'};
constexpr uint32_t kVersion = 1;
constexpr uint64_t kMaxMetaBytes = 16ull << 20;
constexpr uint64_t kMaxNameBytes = 4096;

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
void put_f32(std::string& out, float v) {
    put_u32(out, std::bit_cast<uint32_t>(v));
}

struct Cursor {
    const std::string& buf;
    size_t pos = 0;
    const std::string& path;

    void need(size_t n, const char* what) {
        if (buf.size() - pos < n)
            throw IoError(path + ": truncated checkpoint (reading " + what + ")");
    }
    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(buf[pos++])) << (8 * i);
        return v;
    }
    uint64_t u64(const char* what) {
        need(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(uint8_t(buf[pos++])) << (8 * i);
        return v;
    }
    uint8_t u8(const char* what) {
        need(1, what);
        return uint8_t(buf[pos++]);
    }
    std::string bytes(uint64_t n, const char* what) {
        need(n, what);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed on " + path);
    return buf;
}

void write_file(const std::string& path, const std::string& buf) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(buf.data(), std::streamsize(buf.size()));
    out.flush();
    if (!out) throw IoError("write failed on " + path);
}

nlohmann::json dims_to_json(const Dims& d) {
    return {{"latent", d.latent},
            {"mapping_layers", d.mapping_layers},
            {"hidden", d.hidden},
            {"style_layers", d.style_layers},
            {"image_res", d.image_res},
            {"out_dim", d.out_dim},
            {"disc_features", d.disc_features},
            {"disc_layers", d.disc_layers}};
}

Dims dims_from_json(const nlohmann::json& j) {
    Dims d;
    d.latent = j.at("latent").get<int>();
    d.mapping_layers = j.at("mapping_layers").get<int>();
    d.hidden = j.at("hidden").get<int>();
    d.style_layers = j.at("style_layers").get<int>();
    d.image_res = j.at("image_res").get<int>();
    d.out_dim = j.at("out_dim").get<int>();
    d.disc_features = j.at("disc_features").get<int>();
    d.disc_layers = j.at("disc_layers").get<int>();
    return d;
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& r : tensors)
        if (r.name == name) return &r.value;
    return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    std::string meta = ck.meta.dump();
    put_u64(out, meta.size());
    out += meta;
    put_u32(out, uint32_t(ck.tensors.size()));
    for (const auto& r : ck.tensors) {
        put_u64(out, r.name.size());
        out += r.name;
        out.push_back(0);  // dtype f32
        put_u32(out, uint32_t(r.value.shape.size()));
        for (int d : r.value.shape) put_u32(out, uint32_t(d));
        for (float v : r.value.data) put_f32(out, v);
    }
    write_file(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::string buf = read_file(path);
    Cursor c{buf, 0, path};

    c.need(4, "magic");
    if (std::memcmp(buf.data(), kMagic, 4) != 0)
        throw IoError(path + ": not a GDAC checkpoint");
    c.pos = 4;
    uint32_t ver = c.u32("version");
    if (ver != kVersion)
        throw IoError(path + ": unsupported checkpoint version " + std::to_string(ver));

    Checkpoint ck;
    uint64_t meta_len = c.u64("metadata length");
    if (meta_len > kMaxMetaBytes) throw IoError(path + ": metadata length is implausible");
    std::string meta = c.bytes(meta_len, "metadata");
    ck.meta = nlohmann::json::parse(meta, nullptr, false);
    if (ck.meta.is_discarded()) throw IoError(path + ": metadata is not valid JSON");

    uint32_t count = c.u32("tensor count");
    for (uint32_t i = 0; i < count; ++i) {
        uint64_t name_len = c.u64("name length");
        if (name_len > kMaxNameBytes) throw IoError(path + ": tensor name length is implausible");
        TensorRecord rec;
        rec.name = c.bytes(name_len, "name");
        uint8_t dtype = c.u8("dtype");
        if (dtype != 0)
            throw IoError(path + ": unsupported dtype " + std::to_string(int(dtype)) + " for " +
                          rec.name);
        uint32_t rank = c.u32("rank");
        if (rank > 2) throw IoError(path + ": rank " + std::to_string(rank) + " for " + rec.name);
        Shape shape;
        uint64_t n = 1;
        for (uint32_t r = 0; r < rank; ++r) {
            uint32_t d = c.u32("dim");
            if (d == 0 || d > (1u << 28)) throw IoError(path + ": bad dim for " + rec.name);
            shape.push_back(int(d));
            n *= d;
        }
        c.need(n * 4, "payload");  // before any allocation
        rec.value.shape = shape;
        rec.value.data.resize(n);
        for (uint64_t k = 0; k < n; ++k) rec.value.data[k] = std::bit_cast<float>(c.u32("f32"));
        ck.tensors.push_back(std::move(rec));
    }
    if (c.pos != buf.size()) throw IoError(path + ": trailing bytes after last tensor");
    return ck;
}

uint64_t file_hash(const std::string& path) {
    std::string buf = read_file(path);
    return fnv1a64(buf.data(), buf.size());
}

std::string hash_hex(uint64_t h) {
    static const char* hex = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, h >>= 4) s[size_t(i)] = hex[h & 0xf];
    return s;
}

// model snapshots ------------------------------------------------------

void save_model(const std::string& path, Model& model, nlohmann::json extra_meta) {
    Checkpoint ck;
    ck.meta = std::move(extra_meta);
    ck.meta["kind"] = "model";
    ck.meta["dims"] = dims_to_json(model.dims);
    for (auto& np : named_state(model)) ck.tensors.push_back({np.name, *np.tensor});
    save_checkpoint(path, ck);
}

LoadedModel load_model(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.meta.value("kind", "") != "model")
        throw IoError(path + ": not a model snapshot (kind=" + ck.meta.value("kind", "?") + ")");
    Dims dims = dims_from_json(ck.meta.at("dims"));

    RngStream scratch(0);
    LoadedModel out{init_model(dims, scratch), std::move(ck.meta)};
    auto state = named_state(out.model);
    if (state.size() != ck.tensors.size())
        throw ShapeError(path + ": expected " + std::to_string(state.size()) + " tensors, found " +
                         std::to_string(ck.tensors.size()));
    for (auto& np : state) {
        const Tensor* rec = ck.find(np.name);
        if (!rec) throw ShapeError(path + ": missing tensor " + np.name);
        if (rec->shape != np.tensor->shape)
            throw ShapeError(path + ": " + np.name + " has shape " + shape_str(rec->shape) +
                             ", model wants " + shape_str(np.tensor->shape));
        np.tensor->data = rec->data;
    }
    return out;
}

// adapted artifacts ----------------------------------------------------

namespace {

std::vector<NamedParam<float>> adapted_subset(Model& model) {
    auto part = parameter_partition(model, AdaptMode::genda);
    return part.trainable;
}

}  // namespace

void save_artifacts(const std::string& path, Model& model, uint64_t source_hash,
                    nlohmann::json extra_meta) {
    Checkpoint ck;
    ck.meta = std::move(extra_meta);
    ck.meta["kind"] = "adapted";
    ck.meta["source"] = hash_hex(source_hash);
    for (auto& np : adapted_subset(model)) ck.tensors.push_back({np.name, *np.tensor});
    save_checkpoint(path, ck);
}

nlohmann::json apply_artifacts(Model& model, const std::string& artifacts_path,
                               uint64_t base_hash) {
    Checkpoint ck = load_checkpoint(artifacts_path);
    if (ck.meta.value("kind", "") != "adapted")
        throw IoError(artifacts_path + ": not an adapted-parameters snapshot");
    std::string want = ck.meta.value("source", "");
    if (want != hash_hex(base_hash))
        throw FingerprintError(artifacts_path + ": trained from base " + want +
                               " but the loaded base hashes to " + hash_hex(base_hash));
    auto subset = adapted_subset(model);
    if (subset.size() != ck.tensors.size())
        throw ShapeError(artifacts_path + ": expected " + std::to_string(subset.size()) +
                         " tensors, found " + std::to_string(ck.tensors.size()));
    for (auto& np : subset) {
        const Tensor* rec = ck.find(np.name);
        if (!rec) throw ShapeError(artifacts_path + ": missing tensor " + np.name);
        if (rec->shape != np.tensor->shape)
            throw ShapeError(artifacts_path + ": " + np.name + " has shape " +
                             shape_str(rec->shape) + ", model wants " +
                             shape_str(np.tensor->shape));
        np.tensor->data = rec->data;
    }
    return ck.meta;
}

}  // namespace genda
