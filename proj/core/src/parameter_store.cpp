#include "sdfgan/parameter_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "sdfgan/errors.hpp"

namespace sdfgan {

namespace {

void write_u16(std::ostream& os, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
}

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_f64(std::ostream& os, double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint16_t read_u16(std::istream& is) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

double read_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
}

constexpr std::uint32_t kVersion = 1;

}  // namespace

void ParameterStore::create(const std::string& name, Tensor init) {
    if (entries_.count(name)) throw DataError("parameter '" + name + "' already exists");
    Entry e;
    e.sq_avg = Tensor::zeros(init.shape);
    e.value = std::move(init);
    entries_.emplace(name, std::move(e));
}

void ParameterStore::create_uniform(const std::string& name, std::vector<int> shape, int fan_in, Rng& rng) {
    Tensor t = Tensor::zeros(shape);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : t.data) v = rng.uniform(-bound, bound);
    create(name, std::move(t));
}

const Tensor& ParameterStore::get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw DataError("unknown parameter '" + name + "'");
    return it->second.value;
}

Tensor& ParameterStore::mutable_value(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw DataError("unknown parameter '" + name + "'");
    return it->second.value;
}

std::vector<std::string> ParameterStore::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [k, v] : entries_) out.push_back(k);
    return out;
}

std::map<std::string, int> ParameterStore::leaves_into(Tape& t) const {
    std::map<std::string, int> ids;
    for (const auto& [k, e] : entries_) ids[k] = t.leaf(e.value);
    return ids;
}

std::map<std::string, int> ParameterStore::constants_into(Tape& t) const {
    std::map<std::string, int> ids;
    for (const auto& [k, e] : entries_) ids[k] = t.constant(e.value);
    return ids;
}

void ParameterStore::rmsprop_update(const std::map<std::string, Tensor>& grads, double lr,
                                    double alpha, double eps) {
    for (const auto& [name, g] : grads) {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw DataError("gradient for unknown parameter '" + name + "'");
        Entry& e = it->second;
        if (!g.same_shape(e.value))
            throw DataError("gradient shape " + g.shape_str() + " does not match parameter '" + name +
                            "' " + e.value.shape_str());
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double gi = g.data[i];
            double& v = e.sq_avg.data[i];
            v = alpha * v + (1.0 - alpha) * gi * gi;
            e.value.data[i] -= lr * gi / (std::sqrt(v) + eps);
        }
    }
}

void ParameterStore::fill(double v) {
    for (auto& [k, e] : entries_)
        for (double& x : e.value.data) x = v;
}

bool ParameterStore::all_finite() const {
    for (const auto& [k, e] : entries_)
        for (double x : e.value.data)
            if (!std::isfinite(x)) return false;
    return true;
}

std::uint64_t ParameterStore::value_hash() const {
    // FNV-1a over names and raw value bytes.
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& [k, e] : entries_) {
        mix(k.data(), k.size());
        mix(e.value.data.data(), e.value.data.size() * sizeof(double));
    }
    return h;
}

ParameterStore ParameterStore::optimizer_state() const {
    ParameterStore out;
    for (const auto& [name, e] : entries_) out.create(name, e.sq_avg);
    return out;
}

void ParameterStore::load_optimizer_state(const ParameterStore& state) {
    for (auto& [name, e] : entries_) {
        if (!state.has(name)) throw DataError("optimizer state missing parameter '" + name + "'");
        const Tensor& v = state.get(name);
        if (!v.same_shape(e.sq_avg))
            throw DataError("optimizer state shape mismatch for '" + name + "'");
        e.sq_avg = v;
    }
}

void ParameterStore::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    os.write("SGPC", 4);
    write_u32(os, kVersion);
    write_u32(os, static_cast<std::uint32_t>(entries_.size()));
    for (const auto& [name, e] : entries_) {
        if (name.size() > 0xffff) throw DataError("parameter name too long: " + name);
        write_u16(os, static_cast<std::uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        os.put(static_cast<char>(e.value.rank()));
        for (int ext : e.value.shape) write_u32(os, static_cast<std::uint32_t>(ext));
        for (double v : e.value.data) write_f64(os, v);
    }
    if (!os) throw DataError("write failed for '" + path + "'");
}

ParameterStore ParameterStore::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "SGPC", 4) != 0)
        throw DataError("'" + path + "' is not a parameter checkpoint (bad magic)");
    const std::uint32_t version = read_u32(is);
    if (version != kVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version) + " in '" + path + "'");
    const std::uint32_t count = read_u32(is);
    ParameterStore store;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t len = read_u16(is);
        std::string name(len, '\0');
        is.read(name.data(), len);
        const int rank = is.get();
        if (rank < 0 || rank > 8) throw DataError("corrupt checkpoint entry in '" + path + "'");
        std::vector<int> shape(rank);
        for (int r = 0; r < rank; ++r) shape[r] = static_cast<int>(read_u32(is));
        Tensor t = Tensor::zeros(shape);
        for (double& v : t.data) v = read_f64(is);
        if (!is) throw DataError("truncated checkpoint '" + path + "'");
        store.create(name, std::move(t));
    }
    return store;
}

}  // namespace sdfgan
