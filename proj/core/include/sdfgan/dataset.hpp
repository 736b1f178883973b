#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sdfgan/kdtree.hpp"
#include "sdfgan/rng.hpp"
#include "sdfgan/sdf_primitives.hpp"
#include "sdfgan/voxel_grid.hpp"

namespace sdfgan {

struct SdfSample {
    Vec3 p;
    double s;
};

// Per-shape collection of (point, signed distance) pairs; the dataset unit.
// Provenance runs parallel to samples: 0 = uniform, 1 = near-surface.
struct SdfSampleSet {
    std::string id;
    std::vector<SdfSample> samples;
    std::vector<std::uint8_t> provenance;

    double interior_fraction() const;
};

// Everything stored per shape: the sample set (SDFD file) plus the stage
// rasters and a surface point cloud (SDFV sidecar) that training needs for
// voxel-mode grids and on-demand near-surface ground truth.
struct ShapeRecord {
    SdfSampleSet samples;
    std::vector<VoxelGrid> rasters;  // resolutions 8,16,32,64
    std::vector<Vec3> cloud;

    const VoxelGrid& raster(int resolution) const;
};

// Ground-truth SDF queries against a stored shape: magnitude from the
// nearest cloud point, sign from the finest raster (trilinear).
class ShapeOracle {
public:
    explicit ShapeOracle(const ShapeRecord& record);
    double signed_distance(const Vec3& p) const;
    Vec3 nearest_surface_point(const Vec3& p) const;

private:
    const ShapeRecord* record_;
    KdTree3 tree_;
};

// --- file formats -----------------------------------------------------------
// SDFD: magic "SDFD", version u32, shape count u32; per shape: id length u16 +
// UTF-8 id, sample count u32, samples as 4 x f32 little-endian (x,y,z,s),
// then provenance as a parallel u8 array.
// SDFV sidecar: magic "SDFV", version u32, shape count u32; per shape: id
// length u16 + id, raster count u8, per raster resolution u32 + R^3 f32
// values, then cloud count u32 + 3 x f32 points.

void write_sdfd(const std::string& path, const std::vector<ShapeRecord>& shapes);
void write_sdfv(const std::string& path, const std::vector<ShapeRecord>& shapes);
std::vector<SdfSampleSet> read_sdfd(const std::string& path);
// Loads both files and zips them by shape id.
std::vector<ShapeRecord> read_dataset(const std::string& sdfd_path);
// Path of the sidecar belonging to an SDFD file (.sdfd -> .sdfv).
std::string sidecar_path(const std::string& sdfd_path);

// --- procedural shapes -------------------------------------------------------

enum class ProceduralKind { Spheres, Boxes, Mixed };
ProceduralKind procedural_kind_from_string(const std::string& s);

struct ProceduralConfig {
    ProceduralKind kind = ProceduralKind::Spheres;
    int count = 64;
    int n_uniform = 32768;
    int cloud_points = 16384;
    double radius_min = 0.3;  // spheres
    double radius_max = 0.7;
    std::uint64_t seed = 1;
};

// Builds a full record (samples, rasters, cloud) from an analytic field.
ShapeRecord record_from_field(const SdfField& field, const std::string& id, int n_uniform,
                              int cloud_points, Rng& rng);
std::vector<ShapeRecord> make_procedural_dataset(const ProceduralConfig& cfg);

// --- training view -----------------------------------------------------------

struct SplitIndices {
    std::vector<int> train, val, test;
};

// Deterministic 85/5/10 split; rejects splits that would leave a part empty.
SplitIndices split_dataset(int shape_count, std::uint64_t seed);

class TrainingSet {
public:
    TrainingSet(std::vector<ShapeRecord> shapes, std::uint64_t split_seed);

    int count() const { return static_cast<int>(shapes_.size()); }
    const ShapeRecord& shape(int idx) const { return shapes_[idx]; }
    const SplitIndices& split() const { return split_; }
    const ShapeOracle& oracle(int idx) const;

private:
    std::vector<ShapeRecord> shapes_;
    SplitIndices split_;
    mutable std::vector<std::unique_ptr<ShapeOracle>> oracles_;
};

}  // namespace sdfgan
