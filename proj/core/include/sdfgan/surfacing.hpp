#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sdfgan/generator.hpp"
#include "sdfgan/mesh.hpp"
#include "sdfgan/sdf_primitives.hpp"
#include "sdfgan/voxel_grid.hpp"

namespace sdfgan {

// Batched SDF evaluation callback; deterministic (same p -> same s). The
// batch form matters for network sources where per-point calls would dominate.
struct SdfSource {
    std::function<void(const Vec3* pts, double* out, std::size_t n)> eval_batch;

    double operator()(const Vec3& p) const {
        double s;
        eval_batch(&p, &s, 1);
        return s;
    }
};

SdfSource make_field_source(const SdfField& field);
SdfSource make_grid_source(const VoxelGrid& grid);  // trilinear; grid must outlive the source
SdfSource make_generator_source(const SdfGenerator& gen, LatentCode z);

// Samples the source at R^3 cell centers.
VoxelGrid grid_from_source(const SdfSource& source, int resolution);

// Zero iso-surface extraction. Samples the (R+1)^3 corner lattice over
// [-1,1]^3 (R cells per axis), places vertices by linear interpolation along
// sign-changing edges, welds shared vertices, and orients triangles with
// outward normals where the field gradient points. A field with no sign
// change yields an empty mesh.
TriangleMesh marching_cubes(const SdfSource& source, int resolution);
// Same, but over an existing raster's cell-center lattice ((R-1)^3 cells).
TriangleMesh marching_cubes_grid(const VoxelGrid& grid);

// Fig-style resolution generalization probe: the generator rastered at a low
// resolution, that grid trilinearly upsampled, and a direct high-resolution
// evaluation, for side-by-side comparison.
struct UpscaleComparison {
    VoxelGrid low;
    VoxelGrid upsampled;
    VoxelGrid direct;
};
UpscaleComparison grid_upscale_eval(const SdfSource& source, int low_resolution, int high_resolution);

// --- direct rendering -------------------------------------------------------

struct TraceCamera {
    Vec3 position{0.0, 0.0, 2.5};
    Vec3 target{0.0, 0.0, 0.0};
    Vec3 up{0.0, 1.0, 0.0};
    double fov_deg = 40.0;
};

struct TraceOptions {
    double hit_eps = 1e-3;
    double t_min = 1e-4;   // minimum march step
    double t_max = 6.0;
    int max_steps = 200;
    double damping = 1.0;  // 0.8 for learned fields, which need not bound distance
};

struct RayImage {
    int width = 0, height = 0;
    std::vector<double> intensity;       // shaded value for hits
    std::vector<std::uint8_t> hit;       // 1 = surface, 0 = background

    bool pixel_hit(int x, int y) const { return hit[static_cast<std::size_t>(y) * width + x] != 0; }
};

RayImage sphere_trace(const SdfSource& source, const TraceCamera& camera, int width, int height,
                      const TraceOptions& options = {});

struct RayHit {
    bool hit = false;
    double t = 0.0;
    Vec3 position{0.0, 0.0, 0.0};
    int steps = 0;
};
// Single-ray march; `march_log` (when given) records s at every visited point.
RayHit trace_ray(const SdfSource& source, const Vec3& origin, const Vec3& dir,
                 const TraceOptions& options = {}, std::vector<double>* march_log = nullptr);

void write_ppm(const RayImage& image, const std::string& path);

// Linear blend z(t) for t in {0, 1/(count-1), ..., 1}; count >= 2.
std::vector<LatentCode> interpolate_latents(const LatentCode& z0, const LatentCode& z1, int count);

}  // namespace sdfgan
