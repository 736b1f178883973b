#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>

#include "oracles.hpp"
#include "sdfgan/errors.hpp"
#include "sdfgan/surfacing.hpp"

using namespace sdfgan;

namespace {

// Edge -> incident triangle count; watertight means every edge borders two.
std::map<std::pair<int, int>, int> edge_counts(const TriangleMesh& mesh) {
    std::map<std::pair<int, int>, int> counts;
    for (const auto& t : mesh.triangles)
        for (int e = 0; e < 3; ++e) {
            const int a = t[e], b = t[(e + 1) % 3];
            ++counts[std::minmax(a, b)];
        }
    return counts;
}

}  // namespace

TEST_CASE("a field without sign change yields an empty mesh") {
    const SdfSource one = make_field_source({[](const Vec3&) { return 1.0; }, nullptr});
    const TriangleMesh mesh = marching_cubes(one, 8);
    CHECK(mesh.empty());
}

TEST_CASE("sphere extraction: vertex band, watertightness, orientation, volume") {
    const SdfField sphere = sphere_field({0.0, 0.0, 0.0}, 0.4);
    const TriangleMesh mesh = marching_cubes(make_field_source(sphere), 32);
    REQUIRE_FALSE(mesh.empty());

    const double cell_diag = 2.0 * std::sqrt(3.0) / 32.0;
    for (const Vec3& v : mesh.vertices) CHECK(std::fabs(norm(v) - 0.4) < cell_diag);

    for (const auto& [edge, count] : edge_counts(mesh)) CHECK(count == 2);

    const double volume = mesh.signed_volume();
    const double want = 4.0 / 3.0 * 3.14159265358979 * 0.4 * 0.4 * 0.4;
    CHECK(volume > 0.0);  // outward orientation along the gradient
    CHECK(std::fabs(volume - want) / want < 0.10);
}

TEST_CASE("marching cubes vertices sit near the zero level of the source") {
    const SdfField box = box_field({0.1, 0.0, -0.1}, {0.35, 0.25, 0.3});
    const SdfSource src = make_field_source(box);
    const TriangleMesh mesh = marching_cubes(src, 24);
    REQUIRE_FALSE(mesh.empty());
    const double bound = 2.0 / 24.0;  // Lipschitz constant 1 x cell size
    for (const Vec3& v : mesh.vertices) CHECK(std::fabs(src(v)) < bound);
}

TEST_CASE("grid upsampling reproduces knots and direct evaluation beats trilinear") {
    const SdfField sphere = sphere_field({0.0, 0.0, 0.0}, 0.5);
    const SdfSource src = make_field_source(sphere);

    // R' == R: all three grids agree exactly.
    const UpscaleComparison same = grid_upscale_eval(src, 8, 8);
    CHECK(same.low.values == same.upsampled.values);
    CHECK(same.low.values == same.direct.values);

    // The interpolant reproduces its own knots exactly.
    const VoxelGrid low = grid_from_source(src, 8);
    for (int z = 0; z < 8; ++z)
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x)
                CHECK(low.trilerp(low.position(x, y, z)) ==
                      doctest::Approx(low.at(x, y, z)).epsilon(1e-12));

    // Direct evaluation at 128^3 is closer to the truth than upscaling 8^3.
    const UpscaleComparison cmp = grid_upscale_eval(src, 8, 128);
    double err_up = 0.0, err_direct = 0.0;
    for (int z = 0; z < 128; ++z)
        for (int y = 0; y < 128; ++y)
            for (int x = 0; x < 128; ++x) {
                const Vec3 p = cmp.direct.position(x, y, z);
                err_up = std::max(err_up, std::fabs(cmp.upsampled.at(x, y, z) - sphere.value(p)));
                err_direct = std::max(err_direct, std::fabs(cmp.direct.at(x, y, z) - sphere.value(p)));
            }
    CHECK(err_direct < err_up);
}

TEST_CASE("sphere tracing hits an analytic sphere where expected") {
    const SdfSource src = make_field_source(sphere_field({0.0, 0.0, 0.0}, 0.5));
    const RayHit hit = trace_ray(src, {0.0, 0.0, 2.0}, {0.0, 0.0, -1.0});
    REQUIRE(hit.hit);
    CHECK(std::fabs(hit.position[2] - 0.5) < 1e-3);
    CHECK(std::fabs(hit.position[0]) < 1e-12);

    // A ray aimed past the silhouette reports background.
    const RayHit miss = trace_ray(src, {0.0, 0.0, 2.0}, {0.6, 0.0, -1.0});
    CHECK_FALSE(miss.hit);
}

TEST_CASE("tracing an exact SDF never overshoots before the hit") {
    const SdfSource src = make_field_source(sphere_field({0.1, -0.2, 0.0}, 0.45));
    std::vector<double> log;
    const RayHit hit = trace_ray(src, {0.0, 0.0, 2.0}, {0.05, -0.1, -1.0}, {}, &log);
    REQUIRE(hit.hit);
    for (double s : log) CHECK(s >= -1e-12);  // roundoff only, never a real crossing
}

TEST_CASE("tracing a non-metric field with damping terminates within the step budget") {
    // A field that overstates distance by 1.6x would overshoot at full steps;
    // damping 0.8 still converges and every ray terminates.
    const SdfField sphere = sphere_field({0.0, 0.0, 0.0}, 0.5);
    const SdfField lying{[&sphere](const Vec3& p) { return 1.3 * sphere.value(p); }, nullptr};
    TraceOptions opts;
    opts.damping = 0.8;
    opts.max_steps = 200;
    const RayImage img = sphere_trace(make_field_source(lying), TraceCamera{}, 48, 48, opts);
    int hits = 0;
    for (auto h : img.hit) hits += h;
    CHECK(hits > 0);  // the lockstep march leaves no ray unaccounted
}

TEST_CASE("rendered image has the sphere silhouette and writes a valid PPM") {
    const SdfSource src = make_field_source(sphere_field({0.0, 0.0, 0.0}, 0.5));
    const RayImage img = sphere_trace(src, TraceCamera{}, 64, 64);
    CHECK(img.pixel_hit(32, 32));
    CHECK_FALSE(img.pixel_hit(1, 1));

    const std::string path = "/tmp/sdfgan_trace_test.ppm";
    write_ppm(img, path);
    std::ifstream is(path, std::ios::binary);
    std::string header;
    is >> header;
    CHECK(header == "P6");
    int w, h, maxv;
    is >> w >> h >> maxv;
    CHECK(w == 64);
    CHECK(h == 64);
    CHECK(maxv == 255);
}

TEST_CASE("latent interpolation endpoints and midpoint behave linearly") {
    const LatentCode z0 = {1.0, 2.0, 3.0};
    const LatentCode z1 = {-1.0, 0.0, 5.0};
    const auto codes = interpolate_latents(z0, z1, 5);
    REQUIRE(codes.size() == 5);
    CHECK(codes.front() == z0);
    CHECK(codes.back() == z1);
    for (int c = 0; c < 3; ++c) CHECK(codes[2][c] == doctest::Approx(0.5 * (z0[c] + z1[c])));

    const auto self = interpolate_latents(z0, z0, 3);
    CHECK(self[1] == z0);

    CHECK_THROWS_AS(interpolate_latents(z0, z1, 1), DataError);
}

TEST_CASE("mesh round trip through PLY and OBJ") {
    const TriangleMesh mesh = marching_cubes(make_field_source(sphere_field({0, 0, 0}, 0.4)), 12);
    write_ply(mesh, "/tmp/sdfgan_mesh_test.ply");
    write_obj(mesh, "/tmp/sdfgan_mesh_test.obj");
    const TriangleMesh ply = read_ply("/tmp/sdfgan_mesh_test.ply");
    const TriangleMesh obj = read_obj("/tmp/sdfgan_mesh_test.obj");
    CHECK(ply.vertices.size() == mesh.vertices.size());
    CHECK(obj.triangles.size() == mesh.triangles.size());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
        for (int c = 0; c < 3; ++c)
            CHECK(ply.vertices[i][c] == doctest::Approx(mesh.vertices[i][c]).epsilon(1e-12));
}
