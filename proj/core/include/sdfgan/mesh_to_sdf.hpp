#pragma once

#include <string>
#include <vector>

#include "sdfgan/dataset.hpp"
#include "sdfgan/kdtree.hpp"
#include "sdfgan/mesh.hpp"
#include "sdfgan/rng.hpp"

namespace sdfgan {

// Orthographic depth cameras distributed over the sphere (Fibonacci lattice)
// around a normalized shape.
struct CameraRig {
    std::vector<Vec3> directions;  // unit vectors from the origin toward each camera
    int buffer_size = 1024;
    double lateral_halfwidth = 1.8;  // window covers the whole [-1,1]^3 query cube
    double depth_bias = 1e-4;        // visibility margin against self-classification
    // With 50 discrete cameras a query ray can narrowly miss thin geometry
    // that a ray a few degrees away would hit. When the exact pixel is empty,
    // surface evidence behind the point is accepted from rays within this
    // lateral distance.
    double visibility_neighborhood = 0.35;

    static CameraRig make(int views = 50, int buffer_size = 1024);
    double min_pairwise_angle_deg() const;
};

// Depth along the viewing axis: depth = 2 + dot(forward, p), cleared to
// +infinity where no front-facing geometry was rasterized. A coarse max-depth
// grid accelerates neighborhood queries.
struct DepthBuffer {
    static constexpr int kBlock = 16;

    int size = 0;
    std::vector<double> depth;
    int blocks_per_side = 0;
    std::vector<double> block_max;  // -inf where a block is fully empty

    bool hit(int px, int py) const;
    double at(int px, int py) const { return depth[static_cast<std::size_t>(py) * size + px]; }
    void finalize_blocks();
    // True when some pixel within `radius_px` of (px,py) holds a depth
    // greater than `depth_threshold` (coarse, block-granular test).
    bool any_depth_behind(int px, int py, int radius_px, double depth_threshold) const;
};

struct ViewFrame {
    Vec3 right, up, forward;
    static ViewFrame from_direction(const Vec3& dir);
};

struct DepthRender {
    CameraRig rig;
    std::vector<ViewFrame> frames;
    std::vector<DepthBuffer> buffers;
    std::vector<Vec3> cloud;  // deduplicated back-projected surface points
};

// Rasterizes the mesh into every view (back faces culled) and back-projects
// pixel centers into object space. The cloud is deduplicated on a grid of
// `dedupe_cell` to bound its size; points remain genuine back-projections.
DepthRender render_depth(const TriangleMesh& mesh, const CameraRig& rig, double dedupe_cell = 0.003);

// Raw back-projections of a single view, without deduplication.
std::vector<Vec3> back_project(const DepthBuffer& buffer, const ViewFrame& frame, const CameraRig& rig);

// Signed distance oracle for a normalized mesh. Magnitude is the distance to
// the nearest back-projected surface point; a point is outside when at least
// one view sees it in front of the rasterized surface at its pixel (views
// with no geometry at that pixel cast no vote).
class MeshSdf {
public:
    MeshSdf(const TriangleMesh& normalized_mesh, const CameraRig& rig, double dedupe_cell = 0.003);

    double signed_distance(const Vec3& p) const;
    bool seen_by_any_camera(const Vec3& p) const;
    const DepthRender& render() const { return render_; }
    const std::vector<Vec3>& cloud() const { return render_.cloud; }

private:
    DepthRender render_;
    KdTree3 tree_;
};

// n_uniform points ~ U(-1,1)^3 with SDF values, provenance 0.
SdfSampleSet build_sample_set(const MeshSdf& sdf, const std::string& id, int n_uniform, Rng& rng);

struct FilterResult {
    bool accepted = false;
    std::string reason;  // "interior" | "discontinuous" | "" when accepted
    double interior_fraction = 0.0;
    double violation_fraction = 0.0;
};

// Rejects shapes with less than 1% of uniform samples inside, then shapes
// whose field jumps: |s(p)-s(q)| > |p-q| + 0.01 on more than 0.1% of 10^4
// random close pairs (|p-q| < 0.05).
FilterResult filter_shape(const SdfSampleSet& set, const MeshSdf& sdf, Rng& rng,
                          int pair_count = 10000);

// Full preprocessing of one mesh: normalize, render, sample, filter, and
// (when accepted) assemble the stored record including stage rasters.
struct PreprocessResult {
    FilterResult filter;
    ShapeRecord record;  // valid only when filter.accepted
};
PreprocessResult preprocess_mesh(const TriangleMesh& mesh, const std::string& id, int n_uniform,
                                 const CameraRig& rig, Rng& rng, int max_cloud_points = 65536);

}  // namespace sdfgan
