#include "sdfgan/mesh_to_sdf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sdfgan/errors.hpp"

namespace sdfgan {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

// Depth of a point along a view axis; cameras sit at distance 2 so depths
// stay positive for the whole query cube.
inline double view_depth(const ViewFrame& f, const Vec3& p) { return 2.0 + dot(f.forward, p); }

// Continuous pixel coordinate: pixel center i corresponds to fx == i.
inline double to_pixel(double lateral, double halfwidth, int size) {
    return (lateral + halfwidth) / (2.0 * halfwidth) * size - 0.5;
}
inline double from_pixel(int px, double halfwidth, int size) {
    return (px + 0.5) / size * (2.0 * halfwidth) - halfwidth;
}

}  // namespace

CameraRig CameraRig::make(int views, int buffer_size) {
    CameraRig rig;
    rig.buffer_size = buffer_size;
    rig.directions.reserve(views);
    const double golden_angle = 3.14159265358979323846 * (3.0 - std::sqrt(5.0));
    for (int k = 0; k < views; ++k) {
        const double z = 1.0 - 2.0 * (k + 0.5) / views;
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = golden_angle * k;
        rig.directions.push_back({r * std::cos(phi), r * std::sin(phi), z});
    }
    return rig;
}

double CameraRig::min_pairwise_angle_deg() const {
    double min_cos = -1.0;
    bool found = false;
    for (std::size_t i = 0; i < directions.size(); ++i)
        for (std::size_t j = i + 1; j < directions.size(); ++j) {
            const double c = dot(directions[i], directions[j]);
            if (!found || c > min_cos) {
                min_cos = c;
                found = true;
            }
        }
    if (!found) return 180.0;
    return std::acos(std::clamp(min_cos, -1.0, 1.0)) * 180.0 / 3.14159265358979323846;
}

ViewFrame ViewFrame::from_direction(const Vec3& dir) {
    ViewFrame f;
    f.forward = normalized(dir) * -1.0;         // camera looks at the origin
    Vec3 up_hint{0.0, 0.0, 1.0};
    if (std::fabs(dot(f.forward, up_hint)) > 0.99) up_hint = {1.0, 0.0, 0.0};
    f.right = normalized(cross(f.forward, up_hint));
    f.up = cross(f.right, f.forward);
    return f;
}

bool DepthBuffer::hit(int px, int py) const {
    if (px < 0 || py < 0 || px >= size || py >= size) return false;
    return std::isfinite(at(px, py));
}

void DepthBuffer::finalize_blocks() {
    blocks_per_side = (size + kBlock - 1) / kBlock;
    block_max.assign(static_cast<std::size_t>(blocks_per_side) * blocks_per_side,
                     -std::numeric_limits<double>::infinity());
    for (int py = 0; py < size; ++py)
        for (int px = 0; px < size; ++px) {
            const double d = at(px, py);
            if (!std::isfinite(d)) continue;
            double& slot = block_max[static_cast<std::size_t>(py / kBlock) * blocks_per_side +
                                     px / kBlock];
            slot = std::max(slot, d);
        }
}

bool DepthBuffer::any_depth_behind(int px, int py, int radius_px, double depth_threshold) const {
    const int b0x = std::max(0, (px - radius_px) / kBlock);
    const int b1x = std::min(blocks_per_side - 1, (px + radius_px) / kBlock);
    const int b0y = std::max(0, (py - radius_px) / kBlock);
    const int b1y = std::min(blocks_per_side - 1, (py + radius_px) / kBlock);
    for (int by = b0y; by <= b1y; ++by)
        for (int bx = b0x; bx <= b1x; ++bx)
            if (block_max[static_cast<std::size_t>(by) * blocks_per_side + bx] > depth_threshold)
                return true;
    return false;
}

namespace {

void rasterize_view(const TriangleMesh& mesh, const ViewFrame& frame, const CameraRig& rig,
                    DepthBuffer& buffer) {
    const int W = rig.buffer_size;
    buffer.size = W;
    buffer.depth.assign(static_cast<std::size_t>(W) * W, kInf);
    const double hw = rig.lateral_halfwidth;

    for (const auto& tri : mesh.triangles) {
        const Vec3& a = mesh.vertices[tri[0]];
        const Vec3& b = mesh.vertices[tri[1]];
        const Vec3& c = mesh.vertices[tri[2]];
        // Back-face culling: keep triangles whose outward normal opposes the
        // viewing direction.
        const Vec3 n = cross(b - a, c - a);
        if (dot(n, frame.forward) >= 0.0) continue;

        const double ax = to_pixel(dot(frame.right, a), hw, W), ay = to_pixel(dot(frame.up, a), hw, W);
        const double bx = to_pixel(dot(frame.right, b), hw, W), by = to_pixel(dot(frame.up, b), hw, W);
        const double cx = to_pixel(dot(frame.right, c), hw, W), cy = to_pixel(dot(frame.up, c), hw, W);
        const double da = view_depth(frame, a), db = view_depth(frame, b), dc = view_depth(frame, c);

        const double area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
        if (area == 0.0) continue;
        const double inv_area = 1.0 / area;
        const double orient = area > 0.0 ? 1.0 : -1.0;
        // Conservative coverage: a pixel counts when its center is within
        // about half a pixel of the triangle. Geometry thinner than a pixel
        // (plate edges seen edge-on) must still occupy its silhouette,
        // otherwise the visibility sign test leaks around it.
        const double dilate = 0.71;
        auto edge_dist = [orient](double ex0, double ey0, double ex1, double ey1, double px,
                                  double py) {
            const double len = std::sqrt((ex1 - ex0) * (ex1 - ex0) + (ey1 - ey0) * (ey1 - ey0));
            if (len == 0.0) return 0.0;
            return orient * ((ex1 - ex0) * (py - ey0) - (ey1 - ey0) * (px - ex0)) / len;
        };

        const int x0 = std::max(0, static_cast<int>(std::floor(std::min({ax, bx, cx}) - dilate)));
        const int x1 = std::min(W - 1, static_cast<int>(std::ceil(std::max({ax, bx, cx}) + dilate)));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min({ay, by, cy}) - dilate)));
        const int y1 = std::min(W - 1, static_cast<int>(std::ceil(std::max({ay, by, cy}) + dilate)));
        for (int py = y0; py <= y1; ++py)
            for (int px = x0; px <= x1; ++px) {
                const double wx = px, wy = py;
                if (edge_dist(ax, ay, bx, by, wx, wy) < -dilate ||
                    edge_dist(bx, by, cx, cy, wx, wy) < -dilate ||
                    edge_dist(cx, cy, ax, ay, wx, wy) < -dilate)
                    continue;
                // Clamp the barycentrics onto the triangle so dilated pixels
                // take the depth of a nearby on-triangle point instead of an
                // affine extrapolation that can run away on edge-on planes.
                double w0 = std::clamp(((bx - wx) * (cy - wy) - (by - wy) * (cx - wx)) * inv_area, 0.0, 1.0);
                double w1 = std::clamp(((cx - wx) * (ay - wy) - (cy - wy) * (ax - wx)) * inv_area, 0.0, 1.0);
                double w2 = std::clamp(1.0 - w0 - w1, 0.0, 1.0);
                const double wsum = w0 + w1 + w2;
                const double depth = (w0 * da + w1 * db + w2 * dc) / wsum;
                double& slot = buffer.depth[static_cast<std::size_t>(py) * W + px];
                if (depth < slot) slot = depth;
            }
    }
}

std::uint64_t cell_key(const Vec3& p, double cell) {
    const auto q = [&](double v) {
        return static_cast<std::uint64_t>(static_cast<std::int64_t>(std::floor((v + 2.0) / cell))) &
               0x1fffff;
    };
    return (q(p[0]) << 42) | (q(p[1]) << 21) | q(p[2]);
}

}  // namespace

std::vector<Vec3> back_project(const DepthBuffer& buffer, const ViewFrame& frame,
                               const CameraRig& rig) {
    std::vector<Vec3> points;
    const int W = buffer.size;
    for (int py = 0; py < W; ++py)
        for (int px = 0; px < W; ++px) {
            const double d = buffer.at(px, py);
            if (!std::isfinite(d)) continue;
            const double x = from_pixel(px, rig.lateral_halfwidth, W);
            const double y = from_pixel(py, rig.lateral_halfwidth, W);
            points.push_back(frame.right * x + frame.up * y + frame.forward * (d - 2.0));
        }
    return points;
}

DepthRender render_depth(const TriangleMesh& mesh, const CameraRig& rig, double dedupe_cell) {
    if (mesh.empty()) throw DataError("render_depth: empty mesh");
    DepthRender render;
    render.rig = rig;
    const int n = static_cast<int>(rig.directions.size());
    render.frames.resize(n);
    render.buffers.resize(n);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int k = 0; k < n; ++k) {
        render.frames[k] = ViewFrame::from_direction(rig.directions[k]);
        rasterize_view(mesh, render.frames[k], rig, render.buffers[k]);
        render.buffers[k].finalize_blocks();
    }
    std::unordered_set<std::uint64_t> cells;
    for (int k = 0; k < n; ++k) {
        for (const Vec3& p : back_project(render.buffers[k], render.frames[k], rig)) {
            if (cells.insert(cell_key(p, dedupe_cell)).second) render.cloud.push_back(p);
        }
    }
    if (render.cloud.empty()) throw DataError("render_depth: no surface points rasterized");
    return render;
}

MeshSdf::MeshSdf(const TriangleMesh& normalized_mesh, const CameraRig& rig, double dedupe_cell)
    : render_(render_depth(normalized_mesh, rig, dedupe_cell)), tree_(render_.cloud) {}

bool MeshSdf::seen_by_any_camera(const Vec3& p) const {
    const int W = render_.rig.buffer_size;
    const double hw = render_.rig.lateral_halfwidth;
    const double bias = render_.rig.depth_bias;
    const int radius_px =
        static_cast<int>(std::ceil(render_.rig.visibility_neighborhood / (2.0 * hw / W)));
    for (std::size_t k = 0; k < render_.frames.size(); ++k) {
        const ViewFrame& f = render_.frames[k];
        const int px = static_cast<int>(std::lround(to_pixel(dot(f.right, p), hw, W)));
        const int py = static_cast<int>(std::lround(to_pixel(dot(f.up, p), hw, W)));
        if (px < 0 || py < 0 || px >= W || py >= W) continue;
        const double depth_p = view_depth(f, p);
        if (render_.buffers[k].hit(px, py)) {
            // Surface on this exact ray: the point is outside when it sits
            // strictly in front of it; otherwise it is occluded here.
            if (depth_p < render_.buffers[k].at(px, py) - bias) return true;
            continue;
        }
        // Clear line to infinity on the exact ray. Count the view when a
        // nearby ray shows surface behind the point, which covers thin
        // geometry falling between the discrete camera rays.
        if (render_.buffers[k].any_depth_behind(px, py, radius_px, depth_p + bias)) return true;
    }
    return false;
}

double MeshSdf::signed_distance(const Vec3& p) const {
    double dist = 0.0;
    tree_.nearest(p, &dist);
    return seen_by_any_camera(p) ? dist : -dist;
}

SdfSampleSet build_sample_set(const MeshSdf& sdf, const std::string& id, int n_uniform, Rng& rng) {
    SdfSampleSet set;
    set.id = id;
    set.samples.resize(n_uniform);
    for (auto& s : set.samples)
        s.p = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int i = 0; i < n_uniform; ++i) set.samples[i].s = sdf.signed_distance(set.samples[i].p);
    set.provenance.assign(n_uniform, 0);
    return set;
}

FilterResult filter_shape(const SdfSampleSet& set, const MeshSdf& sdf, Rng& rng, int pair_count) {
    FilterResult res;
    res.interior_fraction = set.interior_fraction();
    if (res.interior_fraction < 0.01) {
        res.reason = "interior";
        return res;
    }
    int violations = 0;
    for (int i = 0; i < pair_count; ++i) {
        Vec3 p{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
        const double len = rng.uniform(0.0, 0.05);
        dir = normalized(dir);
        Vec3 q = p + dir * len;
        for (int c = 0; c < 3; ++c) q[c] = std::clamp(q[c], -1.0, 1.0);
        const double sep = norm(q - p);
        if (std::fabs(sdf.signed_distance(p) - sdf.signed_distance(q)) > sep + 0.01) ++violations;
    }
    res.violation_fraction = static_cast<double>(violations) / pair_count;
    if (res.violation_fraction > 0.001) {
        res.reason = "discontinuous";
        return res;
    }
    res.accepted = true;
    return res;
}

PreprocessResult preprocess_mesh(const TriangleMesh& mesh, const std::string& id, int n_uniform,
                                 const CameraRig& rig, Rng& rng, int max_cloud_points) {
    PreprocessResult out;
    TriangleMesh normalized = normalize_mesh(mesh);
    MeshSdf sdf(normalized, rig);
    SdfSampleSet set = build_sample_set(sdf, id, n_uniform, rng);
    out.filter = filter_shape(set, sdf, rng);
    if (!out.filter.accepted) return out;

    out.record.samples = std::move(set);
    for (int r : {8, 16, 32, 64}) {
        VoxelGrid g(r);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (int z = 0; z < r; ++z)
            for (int y = 0; y < r; ++y)
                for (int x = 0; x < r; ++x) g.at(x, y, z) = sdf.signed_distance(g.position(x, y, z));
        out.record.rasters.push_back(std::move(g));
    }
    // Subsample the cloud deterministically to bound the stored size.
    const auto& cloud = sdf.cloud();
    const std::size_t stride = std::max<std::size_t>(1, cloud.size() / max_cloud_points);
    for (std::size_t i = 0; i < cloud.size(); i += stride) out.record.cloud.push_back(cloud[i]);
    return out;
}

}  // namespace sdfgan
