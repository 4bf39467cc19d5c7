#include "esrt/checkpoint.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>

namespace esrt {

namespace {

// wire format, little-endian throughout:
//   magic "ESRT1" (5 bytes)
//   version u32
//   config block: count u32, then per entry u16 key len, key bytes,
//                 u16 value len, value bytes (UTF-8)
//   tensor block: count u32, then per tensor u16 name len, name bytes,
//                 ndim u8, dims u32[ndim], raw f32 data
// Parameters come first in store order, then adam.m.<name> / adam.v.<name>.

void put_u16(std::ostream& os, uint16_t v) { os.write(reinterpret_cast<const char*>(&v), 2); }
void put_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void put_str(std::ostream& os, const std::string& s) {
    if (s.size() > 0xffff) throw ArgError("checkpoint string too long");
    put_u16(os, uint16_t(s.size()));
    os.write(s.data(), std::streamsize(s.size()));
}

uint16_t get_u16(std::istream& is) {
    uint16_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 2);
    return v;
}
uint32_t get_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
std::string get_str(std::istream& is) {
    const uint16_t n = get_u16(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    return s;
}

std::string hex_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

void put_tensor(std::ostream& os, const std::string& name, const Tensor<float>& t) {
    put_str(os, name);
    const uint8_t ndim = uint8_t(t.rank());
    os.write(reinterpret_cast<const char*>(&ndim), 1);
    for (int i = 0; i < t.rank(); ++i) put_u32(os, uint32_t(t.dim(i)));
    os.write(reinterpret_cast<const char*>(t.data()), std::streamsize(t.size() * 4));
}

Tensor<float> get_tensor(std::istream& is, std::string& name) {
    name = get_str(is);
    uint8_t ndim = 0;
    is.read(reinterpret_cast<char*>(&ndim), 1);
    Shape shape(ndim, 0);
    for (uint8_t i = 0; i < ndim; ++i) shape[i] = int64_t(get_u32(is));
    Tensor<float> t(shape);
    is.read(reinterpret_cast<char*>(t.data()), std::streamsize(t.size() * 4));
    return t;
}

int64_t to_i64(const std::string& s) { return std::strtoll(s.c_str(), nullptr, 10); }

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint " + path);
    os.write(Checkpoint::kMagic, 5);
    put_u32(os, Checkpoint::kVersion);

    std::vector<std::pair<std::string, std::string>> conf{
        {"channels", std::to_string(ck.cfg.channels)},
        {"n_hpb", std::to_string(ck.cfg.n_hpb)},
        {"n_et", std::to_string(ck.cfg.n_et)},
        {"pool_k", std::to_string(ck.cfg.pool_k)},
        {"unfold_k", std::to_string(ck.cfg.unfold_k)},
        {"split_s", std::to_string(ck.cfg.split_s)},
        {"heads", std::to_string(ck.cfg.heads)},
        {"scale", std::to_string(ck.cfg.scale)},
        {"hpb_shared_reps", std::to_string(ck.cfg.hpb_shared_reps)},
        {"mlp_ratio", std::to_string(ck.cfg.mlp_ratio)},
        {"ca_reduction", std::to_string(ck.cfg.ca_reduction)},
        {"epoch", std::to_string(ck.epoch)},
        {"adam_step", std::to_string(ck.adam.step)},
        {"adam_beta1", hex_double(ck.adam.beta1)},
        {"adam_beta2", hex_double(ck.adam.beta2)},
        {"adam_eps", hex_double(ck.adam.eps)},
        {"lr0", hex_double(ck.lr0)},
        {"lr_half_epochs", std::to_string(ck.lr_half_epochs)},
        {"rng", ck.rng_state_hex},
    };
    put_u32(os, uint32_t(conf.size()));
    for (const auto& [k, v] : conf) {
        put_str(os, k);
        put_str(os, v);
    }

    const bool with_adam = ck.adam.m.size() == ck.params.count();
    const uint32_t n_tensors = uint32_t(ck.params.count() * (with_adam ? 3 : 1));
    put_u32(os, n_tensors);
    const auto& names = ck.params.names();
    for (const auto& name : names) put_tensor(os, name, ck.params.at(name));
    if (with_adam) {
        for (size_t i = 0; i < names.size(); ++i) put_tensor(os, "adam.m." + names[i], ck.adam.m[i]);
        for (size_t i = 0; i < names.size(); ++i) put_tensor(os, "adam.v." + names[i], ck.adam.v[i]);
    }
    if (!os) throw IoError("short write on checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint " + path);
    char magic[5] = {0};
    is.read(magic, 5);
    if (std::memcmp(magic, Checkpoint::kMagic, 5) != 0)
        throw DataError("not an ESRT checkpoint: " + path);
    const uint32_t version = get_u32(is);
    if (version != Checkpoint::kVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version));

    std::map<std::string, std::string> conf;
    const uint32_t n_conf = get_u32(is);
    for (uint32_t i = 0; i < n_conf; ++i) {
        std::string k = get_str(is);
        conf[k] = get_str(is);
    }

    Checkpoint ck;
    ck.cfg.channels = to_i64(conf.at("channels"));
    ck.cfg.n_hpb = to_i64(conf.at("n_hpb"));
    ck.cfg.n_et = to_i64(conf.at("n_et"));
    ck.cfg.pool_k = to_i64(conf.at("pool_k"));
    ck.cfg.unfold_k = to_i64(conf.at("unfold_k"));
    ck.cfg.split_s = to_i64(conf.at("split_s"));
    ck.cfg.heads = to_i64(conf.at("heads"));
    ck.cfg.scale = to_i64(conf.at("scale"));
    ck.cfg.hpb_shared_reps = to_i64(conf.at("hpb_shared_reps"));
    ck.cfg.mlp_ratio = to_i64(conf.at("mlp_ratio"));
    ck.cfg.ca_reduction = to_i64(conf.at("ca_reduction"));
    ck.cfg.validate();
    ck.epoch = to_i64(conf.at("epoch"));
    ck.adam.step = to_i64(conf.at("adam_step"));
    ck.adam.beta1 = std::strtod(conf.at("adam_beta1").c_str(), nullptr);
    ck.adam.beta2 = std::strtod(conf.at("adam_beta2").c_str(), nullptr);
    ck.adam.eps = std::strtod(conf.at("adam_eps").c_str(), nullptr);
    ck.lr0 = std::strtod(conf.at("lr0").c_str(), nullptr);
    ck.lr_half_epochs = to_i64(conf.at("lr_half_epochs"));
    ck.rng_state_hex = conf.at("rng");

    const uint32_t n_tensors = get_u32(is);
    std::vector<std::pair<std::string, Tensor<float>>> adam_m, adam_v;
    for (uint32_t i = 0; i < n_tensors; ++i) {
        std::string name;
        Tensor<float> t = get_tensor(is, name);
        if (!is) throw DataError("truncated checkpoint: " + path);
        if (name.rfind("adam.m.", 0) == 0)
            adam_m.emplace_back(name.substr(7), std::move(t));
        else if (name.rfind("adam.v.", 0) == 0)
            adam_v.emplace_back(name.substr(7), std::move(t));
        else
            ck.params.add(name, std::move(t));
    }
    if (!adam_m.empty()) {
        if (adam_m.size() != ck.params.count() || adam_v.size() != ck.params.count())
            throw DataError("checkpoint optimizer state incomplete: " + path);
        for (size_t i = 0; i < adam_m.size(); ++i) {
            if (adam_m[i].first != ck.params.names()[i] || adam_v[i].first != ck.params.names()[i])
                throw DataError("checkpoint optimizer state out of order: " + path);
            ck.adam.m.push_back(std::move(adam_m[i].second));
            ck.adam.v.push_back(std::move(adam_v[i].second));
        }
    }
    return ck;
}

}  // namespace esrt
