#include "amoc/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "amoc/common.hpp"

namespace amoc {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'A', 'M', 'O', 'C', 'C', 'K', 'P', 'T'};

double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

void append_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t read_u32(const std::string& buf, size_t off) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[off + i])) << (8 * i);
    return v;
}

uint64_t read_u64(const std::string& buf, size_t off) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[off + i])) << (8 * i);
    return v;
}

std::string pack_payload(const std::vector<NamedArray>& arrays) {
    std::string out;
    size_t total = 0;
    for (const NamedArray& a : arrays) total += a.values.size() * 4;
    out.reserve(total);
    for (const NamedArray& a : arrays) {
        for (double d : a.values) {
            float f = static_cast<float>(d);
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            append_u32(out, bits);
        }
    }
    return out;
}

uint64_t fnv1a64(const std::string& bytes) {
    uint64_t h = 1469598103934665603ull;
    for (char c : bytes) {
        h ^= static_cast<uint8_t>(c);
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

json header_json(const Checkpoint& ck, const std::string& fingerprint) {
    json h;
    h["version"] = ck.version;
    h["arch"] = {{"backbone", ck.arch.backbone},
                 {"width", ck.arch.width},
                 {"embed_dim", ck.arch.embed_dim},
                 {"in_channels", ck.arch.in_channels}};
    h["num_classes"] = ck.num_classes;
    h["epoch"] = ck.epoch;
    h["step"] = ck.step;
    h["momentum"] = ck.momentum;
    h["bank"] = {{"capacity", ck.bank_capacity},
                 {"write_clean", ck.bank_write_clean},
                 {"write_adv", ck.bank_write_adv}};
    h["config"] = ck.config_echo;
    h["rng"] = json::object();
    for (const auto& [name, state] : ck.rng_states) h["rng"][name] = state;
    h["fingerprint"] = fingerprint;
    json arr = json::array();
    for (const NamedArray& a : ck.arrays) arr.push_back({{"name", a.name}, {"shape", a.shape}});
    h["arrays"] = arr;
    return h;
}

}  // namespace

const NamedArray* Checkpoint::find(const std::string& name) const {
    for (const NamedArray& a : arrays)
        if (a.name == name) return &a;
    return nullptr;
}

std::string checkpoint_fingerprint(const std::vector<NamedArray>& arrays) {
    std::string names;
    for (const NamedArray& a : arrays) {
        names += a.name;
        names.push_back('\n');
    }
    return hex64(fnv1a64(names + pack_payload(arrays)));
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    std::string header = header_json(ck, checkpoint_fingerprint(ck.arrays)).dump();
    std::string payload = pack_payload(ck.arrays);

    std::string blob;
    blob.reserve(8 + 4 + 8 + header.size() + payload.size());
    blob.append(kMagic, 8);
    append_u32(blob, ck.version);
    append_u64(blob, header.size());
    blob += header;
    blob += payload;

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    check_arg(f.good(), "cannot open checkpoint path for writing: " + path);
    f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    f.close();
    if (!f.good()) throw FormatError("short write while saving checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check_arg(f.good(), "cannot open checkpoint: " + path);
    std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    if (blob.size() < 20 || std::memcmp(blob.data(), kMagic, 8) != 0)
        throw FormatError("not a checkpoint file: " + path);
    uint32_t version = read_u32(blob, 8);
    if (version != kCheckpointVersion)
        throw IncompatibilityError("checkpoint version " + std::to_string(version) +
                                   " (supported: " + std::to_string(kCheckpointVersion) + ")");
    uint64_t header_len = read_u64(blob, 12);
    if (20 + header_len > blob.size()) throw FormatError("truncated checkpoint header: " + path);

    json h;
    try {
        h = json::parse(blob.substr(20, header_len));
    } catch (const json::exception& e) {
        throw FormatError(std::string("corrupt checkpoint header: ") + e.what());
    }

    Checkpoint ck;
    try {
        ck.version = version;
        ck.arch.backbone = h.at("arch").at("backbone").get<std::string>();
        ck.arch.width = h.at("arch").at("width").get<int>();
        ck.arch.embed_dim = h.at("arch").at("embed_dim").get<int>();
        ck.arch.in_channels = h.at("arch").at("in_channels").get<int>();
        ck.num_classes = h.at("num_classes").get<int>();
        ck.epoch = h.at("epoch").get<int>();
        ck.step = h.at("step").get<int64_t>();
        ck.momentum = h.at("momentum").get<double>();
        ck.bank_capacity = h.at("bank").at("capacity").get<int64_t>();
        ck.bank_write_clean = h.at("bank").at("write_clean").get<int64_t>();
        ck.bank_write_adv = h.at("bank").at("write_adv").get<int64_t>();
        ck.config_echo = h.at("config").get<std::string>();
        for (const auto& [name, state] : h.at("rng").items())
            ck.rng_states[name] = state.get<std::string>();
        ck.fingerprint = h.at("fingerprint").get<std::string>();
        for (const json& a : h.at("arrays")) {
            NamedArray na;
            na.name = a.at("name").get<std::string>();
            na.shape = a.at("shape").get<std::vector<int64_t>>();
            na.values.resize(static_cast<size_t>(Tensor::count(na.shape)));
            ck.arrays.push_back(std::move(na));
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint header missing fields: ") + e.what());
    }

    size_t off = 20 + header_len;
    for (NamedArray& a : ck.arrays) {
        if (off + a.values.size() * 4 > blob.size())
            throw FormatError("truncated checkpoint payload: " + path);
        for (double& d : a.values) {
            uint32_t bits = read_u32(blob, off);
            float fv;
            std::memcpy(&fv, &bits, 4);
            d = static_cast<double>(fv);
            off += 4;
        }
    }
    if (off != blob.size()) throw FormatError("trailing bytes in checkpoint: " + path);

    if (checkpoint_fingerprint(ck.arrays) != ck.fingerprint)
        throw FormatError("checkpoint payload does not match its fingerprint: " + path);
    return ck;
}

void capture_tensor(std::vector<NamedArray>& out, const std::string& name, Tensor& live) {
    NamedArray a;
    a.name = name;
    a.shape = live.shape;
    a.values.resize(live.v.size());
    for (size_t i = 0; i < live.v.size(); ++i) {
        live.v[i] = round_f32(live.v[i]);
        a.values[i] = live.v[i];
    }
    out.push_back(std::move(a));
}

void capture_params(std::vector<NamedArray>& out, const std::string& prefix,
                    const std::vector<ParamRef>& params) {
    for (const ParamRef& p : params) capture_tensor(out, prefix + p.name, *p.value);
}

void capture_buffers(std::vector<NamedArray>& out, const std::string& prefix,
                     const std::vector<BufferRef>& buffers) {
    for (const BufferRef& b : buffers) capture_tensor(out, prefix + b.name, *b.value);
}

namespace {

const NamedArray& locate(const Checkpoint& ck, const std::string& name,
                         const std::vector<int64_t>& shape) {
    const NamedArray* a = ck.find(name);
    if (!a) throw IncompatibilityError("checkpoint has no array '" + name + "'");
    if (a->shape != shape)
        throw IncompatibilityError("checkpoint array '" + name + "' shape mismatch");
    return *a;
}

}  // namespace

void restore_tensor(const Checkpoint& ck, const std::string& name, Tensor& live) {
    const NamedArray& a = locate(ck, name, live.shape);
    std::copy(a.values.begin(), a.values.end(), live.v.begin());
}

void restore_params(const Checkpoint& ck, const std::string& prefix,
                    const std::vector<ParamRef>& params) {
    // Validate the whole group before touching anything.
    for (const ParamRef& p : params) locate(ck, prefix + p.name, p.value->shape);
    for (const ParamRef& p : params) restore_tensor(ck, prefix + p.name, *p.value);
}

void restore_buffers(const Checkpoint& ck, const std::string& prefix,
                     const std::vector<BufferRef>& buffers) {
    for (const BufferRef& b : buffers) locate(ck, prefix + b.name, b.value->shape);
    for (const BufferRef& b : buffers) restore_tensor(ck, prefix + b.name, *b.value);
}

}  // namespace amoc
