#include "sdfgan/surfacing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sdfgan/errors.hpp"
#include "sdfgan/mc_tables.hpp"

namespace sdfgan {

SdfSource make_field_source(const SdfField& field) {
    SdfSource src;
    src.eval_batch = [field](const Vec3* pts, double* out, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) out[i] = field.value(pts[i]);
    };
    return src;
}

SdfSource make_grid_source(const VoxelGrid& grid) {
    SdfSource src;
    src.eval_batch = [&grid](const Vec3* pts, double* out, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) out[i] = grid.trilerp(pts[i]);
    };
    return src;
}

SdfSource make_generator_source(const SdfGenerator& gen, LatentCode z) {
    SdfSource src;
    src.eval_batch = [&gen, z = std::move(z)](const Vec3* pts, double* out, std::size_t n) {
        PointBatch batch;
        batch.points.assign(pts, pts + n);
        std::vector<double> vals = gen.forward_batch(z, batch);
        std::copy(vals.begin(), vals.end(), out);
    };
    return src;
}

VoxelGrid grid_from_source(const SdfSource& source, int resolution) {
    VoxelGrid g(resolution);
    std::vector<Vec3> pts;
    pts.reserve(g.values.size());
    for (int z = 0; z < resolution; ++z)
        for (int y = 0; y < resolution; ++y)
            for (int x = 0; x < resolution; ++x) pts.push_back(g.position(x, y, z));
    source.eval_batch(pts.data(), g.values.data(), pts.size());
    return g;
}

namespace {

// Shared cell walker over a corner lattice with `n` samples per axis at
// coordinates coord(i).
TriangleMesh marching_cubes_lattice(const std::vector<double>& values, int n,
                                    const std::function<double(int)>& coord) {
    TriangleMesh mesh;
    if (n < 2) throw DataError("marching cubes: needs at least a 2-sample lattice");
    auto value_at = [&](int x, int y, int z) -> double {
        return values[(static_cast<std::size_t>(z) * n + y) * n + x];
    };

    // Corner offsets in the table convention.
    static const int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                      {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
    static const int kEdge[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                     {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

    // Weld vertices through canonical edge keys: (lattice point, axis).
    std::unordered_map<std::uint64_t, int> edge_vertex;
    auto edge_key = [n](int x, int y, int z, int axis) -> std::uint64_t {
        return ((static_cast<std::uint64_t>(z) * n + y) * n + x) * 3 + axis;
    };

    auto vertex_on_edge = [&](int cx, int cy, int cz, int e) -> int {
        const int* c0 = kCorner[kEdge[e][0]];
        const int* c1 = kCorner[kEdge[e][1]];
        int x0 = cx + c0[0], y0 = cy + c0[1], z0 = cz + c0[2];
        int x1 = cx + c1[0], y1 = cy + c1[1], z1 = cz + c1[2];
        int axis = x0 != x1 ? 0 : (y0 != y1 ? 1 : 2);
        // Canonical direction: lower lattice point owns the edge.
        if (x0 > x1 || y0 > y1 || z0 > z1) {
            std::swap(x0, x1);
            std::swap(y0, y1);
            std::swap(z0, z1);
        }
        const std::uint64_t key = edge_key(x0, y0, z0, axis);
        auto it = edge_vertex.find(key);
        if (it != edge_vertex.end()) return it->second;
        const double v0 = value_at(x0, y0, z0), v1 = value_at(x1, y1, z1);
        double t = (v1 - v0) != 0.0 ? (0.0 - v0) / (v1 - v0) : 0.5;
        t = std::clamp(t, 0.0, 1.0);
        Vec3 p{coord(x0), coord(y0), coord(z0)};
        const double lo = p[axis];
        const double hi = coord(axis == 0 ? x1 : axis == 1 ? y1 : z1);
        p[axis] = lo + t * (hi - lo);
        const int id = static_cast<int>(mesh.vertices.size());
        mesh.vertices.push_back(p);
        edge_vertex.emplace(key, id);
        return id;
    };

    for (int z = 0; z + 1 < n; ++z)
        for (int y = 0; y + 1 < n; ++y)
            for (int x = 0; x + 1 < n; ++x) {
                int cube = 0;
                for (int i = 0; i < 8; ++i) {
                    if (value_at(x + kCorner[i][0], y + kCorner[i][1], z + kCorner[i][2]) < 0.0)
                        cube |= 1 << i;
                }
                if (kMcEdgeTable[cube] == 0) continue;
                const int* tri = kMcTriTable[cube];
                for (int i = 0; tri[i] >= 0; i += 3) {
                    const int a = vertex_on_edge(x, y, z, tri[i]);
                    const int b = vertex_on_edge(x, y, z, tri[i + 1]);
                    const int c = vertex_on_edge(x, y, z, tri[i + 2]);
                    if (a == b || b == c || a == c) continue;  // collapsed by welding
                    mesh.triangles.push_back({a, c, b});       // outward along the gradient
                }
            }
    return mesh;
}

}  // namespace

TriangleMesh marching_cubes(const SdfSource& source, int resolution) {
    if (resolution < 2) throw DataError("marching cubes: resolution must be >= 2");
    const int n = resolution + 1;
    std::vector<Vec3> pts;
    pts.reserve(static_cast<std::size_t>(n) * n * n);
    auto coord = [resolution](int i) { return -1.0 + 2.0 * i / resolution; };
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) pts.push_back({coord(x), coord(y), coord(z)});
    std::vector<double> values(pts.size());
    source.eval_batch(pts.data(), values.data(), pts.size());
    return marching_cubes_lattice(values, n, coord);
}

TriangleMesh marching_cubes_grid(const VoxelGrid& grid) {
    const int r = grid.resolution;
    auto coord = [r](int i) { return VoxelGrid::coord(i, r); };
    return marching_cubes_lattice(grid.values, r, coord);
}

UpscaleComparison grid_upscale_eval(const SdfSource& source, int low_resolution, int high_resolution) {
    UpscaleComparison cmp;
    cmp.low = grid_from_source(source, low_resolution);
    cmp.upsampled = cmp.low.upsample_trilinear(high_resolution);
    cmp.direct = grid_from_source(source, high_resolution);
    return cmp;
}

RayHit trace_ray(const SdfSource& source, const Vec3& origin, const Vec3& dir,
                 const TraceOptions& options, std::vector<double>* march_log) {
    RayHit hit;
    const Vec3 d = normalized(dir);
    double t = 0.0;
    for (int step = 0; step < options.max_steps; ++step) {
        const Vec3 p = origin + d * t;
        const double s = source(p);
        if (march_log) march_log->push_back(s);
        hit.steps = step + 1;
        if (s < options.hit_eps) {
            hit.hit = true;
            hit.t = t;
            hit.position = p;
            return hit;
        }
        t += std::max(options.damping * s, options.t_min);
        if (t > options.t_max) break;
    }
    return hit;
}

RayImage sphere_trace(const SdfSource& source, const TraceCamera& camera, int width, int height,
                      const TraceOptions& options) {
    if (width <= 0 || height <= 0) throw DataError("sphere_trace: image dimensions must be positive");
    RayImage img;
    img.width = width;
    img.height = height;
    img.intensity.assign(static_cast<std::size_t>(width) * height, 0.0);
    img.hit.assign(static_cast<std::size_t>(width) * height, 0);

    const Vec3 forward = normalized(camera.target - camera.position);
    const Vec3 right = normalized(cross(forward, camera.up));
    const Vec3 up = cross(right, forward);
    const double tan_half = std::tan(camera.fov_deg * 3.14159265358979323846 / 360.0);
    const double aspect = static_cast<double>(width) / height;

    const std::size_t n_rays = img.intensity.size();
    std::vector<Vec3> ray_dir(n_rays);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const double sx = (2.0 * (x + 0.5) / width - 1.0) * tan_half * aspect;
            const double sy = (1.0 - 2.0 * (y + 0.5) / height) * tan_half;
            ray_dir[static_cast<std::size_t>(y) * width + x] =
                normalized(forward + right * sx + up * sy);
        }

    // March all active rays in lockstep so sources pay batched evaluation.
    std::vector<double> t(n_rays, 0.0);
    std::vector<std::uint8_t> active(n_rays, 1);
    std::vector<std::size_t> idx;
    std::vector<Vec3> pts;
    std::vector<double> s;
    std::vector<Vec3> hit_pos(n_rays);
    for (int step = 0; step < options.max_steps; ++step) {
        idx.clear();
        pts.clear();
        for (std::size_t i = 0; i < n_rays; ++i)
            if (active[i]) {
                idx.push_back(i);
                pts.push_back(camera.position + ray_dir[i] * t[i]);
            }
        if (idx.empty()) break;
        s.resize(idx.size());
        source.eval_batch(pts.data(), s.data(), pts.size());
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const std::size_t i = idx[k];
            if (s[k] < options.hit_eps) {
                active[i] = 0;
                img.hit[i] = 1;
                hit_pos[i] = pts[k];
                continue;
            }
            t[i] += std::max(options.damping * s[k], options.t_min);
            if (t[i] > options.t_max) active[i] = 0;
        }
    }

    // Shade hits: central-difference normals, one directional light.
    idx.clear();
    pts.clear();
    for (std::size_t i = 0; i < n_rays; ++i)
        if (img.hit[i]) idx.push_back(i);
    if (!idx.empty()) {
        const double h = 1e-3;
        pts.resize(idx.size() * 6);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const Vec3& p = hit_pos[idx[k]];
            for (int axis = 0; axis < 3; ++axis) {
                Vec3 lo = p, hi = p;
                lo[axis] -= h;
                hi[axis] += h;
                pts[k * 6 + axis * 2] = hi;
                pts[k * 6 + axis * 2 + 1] = lo;
            }
        }
        s.resize(pts.size());
        source.eval_batch(pts.data(), s.data(), pts.size());
        const Vec3 light = normalized({0.4, 0.6, 0.8});
        for (std::size_t k = 0; k < idx.size(); ++k) {
            Vec3 n{s[k * 6] - s[k * 6 + 1], s[k * 6 + 2] - s[k * 6 + 3], s[k * 6 + 4] - s[k * 6 + 5]};
            n = normalized(n);
            const double lambert = std::max(0.0, dot(n, light));
            img.intensity[idx[k]] = std::clamp(0.12 + 0.88 * lambert, 0.0, 1.0);
        }
    }
    return img;
}

void write_ppm(const RayImage& image, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    os << "P6\n" << image.width << " " << image.height << "\n255\n";
    for (std::size_t i = 0; i < image.intensity.size(); ++i) {
        unsigned char rgb[3];
        if (image.hit[i]) {
            const auto v = static_cast<unsigned char>(std::lround(image.intensity[i] * 255.0));
            rgb[0] = rgb[1] = rgb[2] = v;
        } else {
            rgb[0] = 24;
            rgb[1] = 26;
            rgb[2] = 34;
        }
        os.write(reinterpret_cast<const char*>(rgb), 3);
    }
    if (!os) throw DataError("write failed for '" + path + "'");
}

std::vector<LatentCode> interpolate_latents(const LatentCode& z0, const LatentCode& z1, int count) {
    if (count < 2) throw DataError("interpolate_latents: count must be >= 2");
    if (z0.size() != z1.size()) throw DataError("interpolate_latents: latent size mismatch");
    std::vector<LatentCode> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        const double t = static_cast<double>(i) / (count - 1);
        LatentCode z(z0.size());
        for (std::size_t k = 0; k < z.size(); ++k) z[k] = (1.0 - t) * z0[k] + t * z1[k];
        out.push_back(std::move(z));
    }
    return out;
}

}  // namespace sdfgan
