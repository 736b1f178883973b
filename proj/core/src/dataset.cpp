#include "sdfgan/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "sdfgan/errors.hpp"

namespace sdfgan {

namespace {

constexpr std::uint32_t kVersion = 1;
const int kRasterResolutions[] = {8, 16, 32, 64};

void write_u16(std::ostream& os, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
}
void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}
void write_f32(std::ostream& os, float f) {
    std::uint32_t v;
    std::memcpy(&v, &f, 4);
    write_u32(os, v);
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
float read_f32(std::istream& is) {
    const std::uint32_t v = read_u32(is);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
}

std::string read_id(std::istream& is) {
    const std::uint16_t len = read_u16(is);
    std::string id(len, '\0');
    is.read(id.data(), len);
    return id;
}

void write_id(std::ostream& os, const std::string& id) {
    if (id.size() > 0xffff) throw DataError("shape id too long: " + id);
    write_u16(os, static_cast<std::uint16_t>(id.size()));
    os.write(id.data(), static_cast<std::streamsize>(id.size()));
}

}  // namespace

double VoxelGrid::trilerp(const Vec3& p) const {
    const int r = resolution;
    const double cell = 2.0 / r;
    double fx = (p[0] + 1.0) / cell - 0.5;
    double fy = (p[1] + 1.0) / cell - 0.5;
    double fz = (p[2] + 1.0) / cell - 0.5;
    auto split = [&](double f, int& base, double& t) {
        base = static_cast<int>(std::floor(f));
        t = f - base;
        if (base < 0) { base = 0; t = 0.0; }
        if (base > r - 2) { base = r - 2; t = 1.0; }
    };
    int x0, y0, z0;
    double tx, ty, tz;
    split(fx, x0, tx);
    split(fy, y0, ty);
    split(fz, z0, tz);
    double acc = 0.0;
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
                const double w = (dx ? tx : 1.0 - tx) * (dy ? ty : 1.0 - ty) * (dz ? tz : 1.0 - tz);
                acc += w * at(x0 + dx, y0 + dy, z0 + dz);
            }
    return acc;
}

Tensor VoxelGrid::to_tensor() const {
    Tensor t = Tensor::zeros({1, resolution, resolution, resolution});
    t.data = values;
    return t;
}

VoxelGrid VoxelGrid::upsample_trilinear(int target_resolution) const {
    VoxelGrid out(target_resolution);
    for (int z = 0; z < target_resolution; ++z)
        for (int y = 0; y < target_resolution; ++y)
            for (int x = 0; x < target_resolution; ++x)
                out.at(x, y, z) = trilerp(out.position(x, y, z));
    return out;
}

double SdfSampleSet::interior_fraction() const {
    if (samples.empty()) return 0.0;
    std::size_t inside = 0, uniform = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (i < provenance.size() && provenance[i] != 0) continue;
        ++uniform;
        if (samples[i].s < 0.0) ++inside;
    }
    if (uniform == 0) return 0.0;
    return static_cast<double>(inside) / static_cast<double>(uniform);
}

const VoxelGrid& ShapeRecord::raster(int resolution) const {
    for (const auto& g : rasters)
        if (g.resolution == resolution) return g;
    throw DataError("shape '" + samples.id + "' has no raster at resolution " +
                    std::to_string(resolution));
}

ShapeOracle::ShapeOracle(const ShapeRecord& record) : record_(&record), tree_(record.cloud) {
    if (record.cloud.empty()) throw DataError("shape '" + record.samples.id + "' has an empty cloud");
}

double ShapeOracle::signed_distance(const Vec3& p) const {
    double dist = 0.0;
    tree_.nearest(p, &dist);
    const double interp = record_->rasters.back().trilerp(p);
    return interp < 0.0 ? -dist : dist;
}

Vec3 ShapeOracle::nearest_surface_point(const Vec3& p) const {
    return tree_.point(tree_.nearest(p));
}

void write_sdfd(const std::string& path, const std::vector<ShapeRecord>& shapes) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    os.write("SDFD", 4);
    write_u32(os, kVersion);
    write_u32(os, static_cast<std::uint32_t>(shapes.size()));
    for (const auto& rec : shapes) {
        const auto& set = rec.samples;
        write_id(os, set.id);
        write_u32(os, static_cast<std::uint32_t>(set.samples.size()));
        for (const auto& s : set.samples) {
            write_f32(os, static_cast<float>(s.p[0]));
            write_f32(os, static_cast<float>(s.p[1]));
            write_f32(os, static_cast<float>(s.p[2]));
            write_f32(os, static_cast<float>(s.s));
        }
        for (std::size_t i = 0; i < set.samples.size(); ++i)
            os.put(i < set.provenance.size() ? static_cast<char>(set.provenance[i]) : 0);
    }
    if (!os) throw DataError("write failed for '" + path + "'");
}

void write_sdfv(const std::string& path, const std::vector<ShapeRecord>& shapes) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    os.write("SDFV", 4);
    write_u32(os, kVersion);
    write_u32(os, static_cast<std::uint32_t>(shapes.size()));
    for (const auto& rec : shapes) {
        write_id(os, rec.samples.id);
        os.put(static_cast<char>(rec.rasters.size()));
        for (const auto& g : rec.rasters) {
            write_u32(os, static_cast<std::uint32_t>(g.resolution));
            for (double v : g.values) write_f32(os, static_cast<float>(v));
        }
        write_u32(os, static_cast<std::uint32_t>(rec.cloud.size()));
        for (const Vec3& p : rec.cloud)
            for (int i = 0; i < 3; ++i) write_f32(os, static_cast<float>(p[i]));
    }
    if (!os) throw DataError("write failed for '" + path + "'");
}

std::vector<SdfSampleSet> read_sdfd(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open dataset '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "SDFD", 4) != 0)
        throw DataError("'" + path + "' is not an SDF dataset (bad magic)");
    if (read_u32(is) != kVersion) throw DataError("unsupported dataset version in '" + path + "'");
    const std::uint32_t count = read_u32(is);
    std::vector<SdfSampleSet> out(count);
    for (auto& set : out) {
        set.id = read_id(is);
        const std::uint32_t n = read_u32(is);
        set.samples.resize(n);
        for (auto& s : set.samples) {
            s.p[0] = read_f32(is);
            s.p[1] = read_f32(is);
            s.p[2] = read_f32(is);
            s.s = read_f32(is);
        }
        set.provenance.resize(n);
        is.read(reinterpret_cast<char*>(set.provenance.data()), n);
        if (!is) throw DataError("truncated dataset '" + path + "'");
    }
    return out;
}

std::string sidecar_path(const std::string& sdfd_path) {
    const std::string suffix = ".sdfd";
    if (sdfd_path.size() > suffix.size() &&
        sdfd_path.compare(sdfd_path.size() - suffix.size(), suffix.size(), suffix) == 0)
        return sdfd_path.substr(0, sdfd_path.size() - suffix.size()) + ".sdfv";
    return sdfd_path + ".sdfv";
}

std::vector<ShapeRecord> read_dataset(const std::string& sdfd_path) {
    std::vector<SdfSampleSet> sets = read_sdfd(sdfd_path);
    const std::string vox_path = sidecar_path(sdfd_path);
    std::ifstream is(vox_path, std::ios::binary);
    if (!is) throw DataError("missing sidecar '" + vox_path + "' for dataset '" + sdfd_path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "SDFV", 4) != 0)
        throw DataError("'" + vox_path + "' is not a raster sidecar (bad magic)");
    if (read_u32(is) != kVersion) throw DataError("unsupported sidecar version in '" + vox_path + "'");
    const std::uint32_t count = read_u32(is);
    if (count != sets.size())
        throw DataError("shape count mismatch between '" + sdfd_path + "' and '" + vox_path + "'");
    std::vector<ShapeRecord> out(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        out[i].samples = std::move(sets[i]);
        const std::string id = read_id(is);
        if (id != out[i].samples.id)
            throw DataError("shape id mismatch in sidecar: '" + id + "' vs '" + out[i].samples.id + "'");
        const int n_grids = is.get();
        out[i].rasters.resize(n_grids);
        for (auto& g : out[i].rasters) {
            g.resolution = static_cast<int>(read_u32(is));
            g.values.resize(static_cast<std::size_t>(g.resolution) * g.resolution * g.resolution);
            for (double& v : g.values) v = read_f32(is);
        }
        const std::uint32_t n_cloud = read_u32(is);
        out[i].cloud.resize(n_cloud);
        for (Vec3& p : out[i].cloud)
            for (int c = 0; c < 3; ++c) p[c] = read_f32(is);
        if (!is) throw DataError("truncated sidecar '" + vox_path + "'");
    }
    return out;
}

ProceduralKind procedural_kind_from_string(const std::string& s) {
    if (s == "spheres") return ProceduralKind::Spheres;
    if (s == "boxes") return ProceduralKind::Boxes;
    if (s == "mixed") return ProceduralKind::Mixed;
    throw DataError("unknown procedural kind '" + s + "' (expected spheres|boxes|mixed)");
}

ShapeRecord record_from_field(const SdfField& field, const std::string& id, int n_uniform,
                              int cloud_points, Rng& rng) {
    ShapeRecord rec;
    rec.samples.id = id;
    rec.samples.samples.reserve(n_uniform);
    for (int i = 0; i < n_uniform; ++i) {
        Vec3 p{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        rec.samples.samples.push_back({p, field.value(p)});
    }
    rec.samples.provenance.assign(n_uniform, 0);
    for (int r : kRasterResolutions) {
        VoxelGrid g(r);
        for (int z = 0; z < r; ++z)
            for (int y = 0; y < r; ++y)
                for (int x = 0; x < r; ++x) g.at(x, y, z) = field.value(g.position(x, y, z));
        rec.rasters.push_back(std::move(g));
    }
    rec.cloud.reserve(cloud_points);
    while (static_cast<int>(rec.cloud.size()) < cloud_points) {
        Vec3 p{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        const double s = field.value(p);
        const Vec3 g = field.gradient(p);
        if (norm(g) < 1e-9) continue;
        Vec3 q = p - g * s;
        // Keep only points that really landed on the zero level set.
        if (std::fabs(field.value(q)) > 1e-9) continue;
        rec.cloud.push_back(q);
    }
    return rec;
}

std::vector<ShapeRecord> make_procedural_dataset(const ProceduralConfig& cfg) {
    if (cfg.count < 1) throw DataError("procedural dataset needs at least one shape");
    Rng rng(cfg.seed);
    std::vector<ShapeRecord> out;
    out.reserve(cfg.count);
    for (int i = 0; i < cfg.count; ++i) {
        bool sphere = cfg.kind == ProceduralKind::Spheres;
        if (cfg.kind == ProceduralKind::Mixed) sphere = (i % 2) == 0;
        SdfField field;
        std::string id;
        if (sphere) {
            const double r = rng.uniform(cfg.radius_min, cfg.radius_max);
            field = sphere_field({0.0, 0.0, 0.0}, r);
            id = "sphere_" + std::to_string(i);
        } else {
            Vec3 half{rng.uniform(0.25, 0.6), rng.uniform(0.25, 0.6), rng.uniform(0.25, 0.6)};
            field = box_field({0.0, 0.0, 0.0}, half);
            id = "box_" + std::to_string(i);
        }
        out.push_back(record_from_field(field, id, cfg.n_uniform, cfg.cloud_points, rng));
    }
    return out;
}

SplitIndices split_dataset(int shape_count, std::uint64_t seed) {
    if (shape_count < 1) throw DataError("cannot split an empty dataset");
    std::vector<int> order(shape_count);
    for (int i = 0; i < shape_count; ++i) order[i] = i;
    Rng rng(seed ^ 0x517cc1b727220a95ULL);
    for (int i = shape_count - 1; i > 0; --i)
        std::swap(order[i], order[rng.uniform_int(0, i)]);
    const int n_train = static_cast<int>(shape_count * 0.85);
    const int n_val = static_cast<int>(shape_count * 0.05);
    SplitIndices split;
    split.train.assign(order.begin(), order.begin() + n_train);
    split.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
    split.test.assign(order.begin() + n_train + n_val, order.end());
    if (split.train.empty() || split.val.empty() || split.test.empty())
        throw DataError("dataset too small for an 85/5/10 split (" + std::to_string(shape_count) +
                        " shapes)");
    return split;
}

TrainingSet::TrainingSet(std::vector<ShapeRecord> shapes, std::uint64_t split_seed)
    : shapes_(std::move(shapes)),
      split_(split_dataset(static_cast<int>(shapes_.size()), split_seed)),
      oracles_(shapes_.size()) {}

const ShapeOracle& TrainingSet::oracle(int idx) const {
    if (!oracles_[idx]) oracles_[idx] = std::make_unique<ShapeOracle>(shapes_[idx]);
    return *oracles_[idx];
}

}  // namespace sdfgan
