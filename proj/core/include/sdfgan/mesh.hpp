#pragma once

#include <array>
#include <string>
#include <vector>

#include "sdfgan/sdf_primitives.hpp"

namespace sdfgan {

// Indexed triangle list. Polygons from OBJ input are fan-triangulated on
// load; degenerate (zero-area) triangles are dropped by cleanup().
struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;

    bool empty() const { return triangles.empty(); }

    Vec3 bbox_min() const;
    Vec3 bbox_max() const;

    // Divergence-theorem signed volume; positive for outward orientation.
    double signed_volume() const;
    double surface_area() const;

    void cleanup(double min_area = 1e-14);
};

TriangleMesh read_obj(const std::string& path);
void write_obj(const TriangleMesh& mesh, const std::string& path);
// ASCII PLY.
void write_ply(const TriangleMesh& mesh, const std::string& path);
TriangleMesh read_ply(const std::string& path);

// Centers the mesh at its bounding-box center and scales uniformly so the
// bounding sphere has radius 0.9. Idempotent up to roundoff.
TriangleMesh normalize_mesh(const TriangleMesh& mesh);
// Scale factor that normalize_mesh would apply.
double normalize_scale(const TriangleMesh& mesh);

// --- procedural fixtures --------------------------------------------------

// Subdivided icosahedron projected onto a sphere; outward orientation.
TriangleMesh make_icosphere(double radius, int subdivisions, Vec3 center = {0.0, 0.0, 0.0});
// Axis-aligned closed box; outward orientation.
TriangleMesh make_box(Vec3 center, Vec3 half);
// Upper hemisphere shell (open at the equator): non-watertight by design.
TriangleMesh make_open_hemisphere(double radius, int subdivisions);
// Thin closed plate spanning [-1,1]^2 in XY with the given full thickness.
TriangleMesh make_slab(double thickness);
// Closed box with a hollow interior cavity (nested inverted box).
TriangleMesh make_hollow_box(Vec3 half_outer, Vec3 half_inner);

}  // namespace sdfgan
