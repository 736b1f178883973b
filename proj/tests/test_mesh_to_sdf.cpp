#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sdfgan/errors.hpp"
#include "sdfgan/mesh.hpp"
#include "sdfgan/mesh_to_sdf.hpp"

using namespace sdfgan;

TEST_CASE("camera rig directions are well spread") {
    const CameraRig rig = CameraRig::make(50, 64);
    CHECK(rig.directions.size() == 50);
    CHECK(rig.min_pairwise_angle_deg() > 15.0);
    for (const Vec3& d : rig.directions) CHECK(norm(d) == doctest::Approx(1.0));
}

TEST_CASE("normalize centers the bounding box and scales the bounding sphere to 0.9") {
    TriangleMesh cube = make_box({0.5, 0.5, 0.5}, {0.5, 0.5, 0.5});  // unit cube at [0,1]^3
    TriangleMesh normalized = normalize_mesh(cube);
    double max_r = 0.0;
    Vec3 lo = normalized.bbox_min(), hi = normalized.bbox_max();
    for (int c = 0; c < 3; ++c) CHECK(lo[c] == doctest::Approx(-hi[c]).epsilon(1e-12));
    for (const Vec3& v : normalized.vertices) max_r = std::max(max_r, norm(v));
    CHECK(max_r == doctest::Approx(0.9));

    // Translation invariance of the output.
    TriangleMesh moved = cube;
    for (Vec3& v : moved.vertices) v = v + Vec3{5.0, -3.0, 2.0};
    TriangleMesh normalized2 = normalize_mesh(moved);
    for (std::size_t i = 0; i < normalized.vertices.size(); ++i)
        for (int c = 0; c < 3; ++c)
            CHECK(normalized.vertices[i][c] == doctest::Approx(normalized2.vertices[i][c]).epsilon(1e-12));

    // Idempotence.
    TriangleMesh twice = normalize_mesh(normalized);
    for (std::size_t i = 0; i < normalized.vertices.size(); ++i)
        for (int c = 0; c < 3; ++c)
            CHECK(std::fabs(twice.vertices[i][c] - normalized.vertices[i][c]) < 1e-12);

    TriangleMesh empty;
    CHECK_THROWS_AS(normalize_mesh(empty), DataError);
}

TEST_CASE("back-projected points of a single triangle lie on its plane") {
    TriangleMesh tri;
    tri.vertices = {{-0.5, -0.5, 0.2}, {0.6, -0.4, 0.2}, {0.0, 0.7, 0.2}};
    tri.triangles = {{0, 1, 2}};
    CameraRig rig = CameraRig::make(1, 128);
    rig.directions[0] = {0.0, 0.0, 1.0};  // camera above, looking down
    const DepthRender render = render_depth(tri, rig, 1e-6);
    const std::vector<Vec3> pts = back_project(render.buffers[0], render.frames[0], rig);
    REQUIRE(pts.size() > 100);
    for (const Vec3& p : pts) CHECK(std::fabs(p[2] - 0.2) < 1e-9);
}

TEST_CASE("icosphere back-projections sit within a pixel footprint of the sphere") {
    const TriangleMesh sphere = make_icosphere(0.7, 3);
    const CameraRig rig = CameraRig::make(50, 256);
    const DepthRender render = render_depth(sphere, rig, 0.004);
    REQUIRE(render.cloud.size() > 10000);
    const double pixel = 2.0 * rig.lateral_halfwidth / rig.buffer_size;
    for (const Vec3& p : render.cloud) {
        // Conservative silhouette coverage may push points up to ~a pixel out.
        CHECK(norm(p) <= 0.7 + 1.25 * pixel + 1e-9);
        CHECK(norm(p) >= 0.7 - 3.0 * pixel - 0.7 * 0.006);  // facet sagitta at subdivision 3
    }
}

TEST_CASE("surface hidden inside a cavity never reaches the cloud") {
    const TriangleMesh hollow = make_hollow_box({0.8, 0.8, 0.8}, {0.4, 0.4, 0.4});
    const CameraRig rig = CameraRig::make(26, 128);
    const DepthRender render = render_depth(hollow, rig, 0.004);
    for (const Vec3& p : render.cloud) {
        const double linf = std::max({std::fabs(p[0]), std::fabs(p[1]), std::fabs(p[2])});
        CHECK(linf > 0.5);  // nothing from the inner shell at 0.4
    }
}

TEST_CASE("every triangle of a convex mesh contributes back-projected points") {
    const TriangleMesh sphere = make_icosphere(0.8, 2);
    const CameraRig rig = CameraRig::make(50, 512);
    MeshSdf sdf(sphere, rig, 0.002);
    const KdTree3 tree(sdf.cloud());
    double max_gap = 0.0;
    for (const auto& t : sphere.triangles) {
        const Vec3 centroid =
            (sphere.vertices[t[0]] + sphere.vertices[t[1]] + sphere.vertices[t[2]]) * (1.0 / 3.0);
        double d = 0.0;
        tree.nearest(centroid, &d);
        max_gap = std::max(max_gap, d);
    }
    const double edge = norm(sphere.vertices[sphere.triangles[0][0]] - sphere.vertices[sphere.triangles[0][1]]);
    CHECK(max_gap < edge);
}

TEST_CASE("signed distances: cube center is interior at half its scaled side") {
    TriangleMesh cube = make_box({0.5, 0.5, 0.5}, {0.5, 0.5, 0.5});
    const double scale = normalize_scale(cube);
    const TriangleMesh normalized = normalize_mesh(cube);
    MeshSdf sdf(normalized, CameraRig::make(50, 256));
    const double center = sdf.signed_distance({0.0, 0.0, 0.0});
    CHECK(center < 0.0);
    CHECK(std::fabs(std::fabs(center) - 0.5 * scale) < 0.02);

    // Queries outside the bounding sphere are always visible.
    for (const Vec3 q : {Vec3{0.95, 0.2, 0.1}, Vec3{-0.8, 0.8, 0.6}, Vec3{0.0, 0.0, 0.99}})
        CHECK(sdf.signed_distance(q) > 0.0);
}

TEST_CASE("icosphere signed distances track the analytic sphere") {
    const TriangleMesh mesh = normalize_mesh(make_icosphere(1.0, 3));
    MeshSdf sdf(mesh, CameraRig::make(50, 512), 0.004);
    Rng rng(5);
    int good = 0;
    const int n = 1000;
    for (int i = 0; i < n; ++i) {
        const Vec3 p{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        const double want = norm(p) - 0.9;
        if (std::fabs(sdf.signed_distance(p) - want) < 0.01) ++good;
    }
    CHECK(good >= static_cast<int>(0.95 * n));
}

TEST_CASE("sign consistency: queries outside the convex hull of closed fixtures are positive") {
    for (const TriangleMesh& mesh :
         {normalize_mesh(make_icosphere(1.0, 2)), normalize_mesh(make_box({0, 0, 0}, {0.7, 0.5, 0.3}))}) {
        MeshSdf sdf(mesh, CameraRig::make(50, 256));
        Rng rng(7);
        for (int i = 0; i < 200; ++i) {
            Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
            dir = normalized(dir);
            const Vec3 p = dir * rng.uniform(0.92, 1.05);  // outside the 0.9 bounding sphere
            CHECK(sdf.signed_distance(p) > 0.0);
        }
    }
}

TEST_CASE("accepted fixtures satisfy the Lipschitz bound of a valid SDF") {
    const TriangleMesh mesh = normalize_mesh(make_icosphere(1.0, 3));
    const double cloud_cell = 0.004;
    MeshSdf sdf(mesh, CameraRig::make(50, 512), cloud_cell);
    Rng rng(11);
    for (int i = 0; i < 2000; ++i) {
        const Vec3 p{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        Vec3 d{rng.normal(), rng.normal(), rng.normal()};
        d = normalized(d) * rng.uniform(0.0, 0.2);
        Vec3 q = p + d;
        for (int c = 0; c < 3; ++c) q[c] = std::clamp(q[c], -1.0, 1.0);
        CHECK(std::fabs(sdf.signed_distance(p) - sdf.signed_distance(q)) <=
              norm(q - p) + 2.0 * cloud_cell + 1e-9);
    }
}

TEST_CASE("sample sets stay in the cube, bounded by the diameter, and reproduce under a seed") {
    const TriangleMesh mesh = normalize_mesh(make_icosphere(1.0, 2));
    MeshSdf sdf(mesh, CameraRig::make(26, 256));
    Rng rng_a(21), rng_b(21);
    const SdfSampleSet a = build_sample_set(sdf, "s", 4096, rng_a);
    const SdfSampleSet b = build_sample_set(sdf, "s", 4096, rng_b);
    CHECK(a.samples.size() == 4096);
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        for (int c = 0; c < 3; ++c) {
            CHECK(a.samples[i].p[c] >= -1.0);
            CHECK(a.samples[i].p[c] <= 1.0);
        }
        CHECK(std::fabs(a.samples[i].s) <= 2.0 * std::sqrt(3.0));
        CHECK(a.samples[i].p == b.samples[i].p);
        CHECK(a.samples[i].s == b.samples[i].s);
    }
}

TEST_CASE("filter: solid sphere accepted with the expected interior fraction") {
    const TriangleMesh mesh = normalize_mesh(make_icosphere(1.0, 3));
    MeshSdf sdf(mesh, CameraRig::make(50, 256));
    Rng rng(31);
    const SdfSampleSet set = build_sample_set(sdf, "sphere", 20000, rng);
    const FilterResult res = filter_shape(set, sdf, rng);
    CHECK(res.accepted);
    // Volume ratio (4/3) pi 0.9^3 / 8 ~ 0.38.
    CHECK(res.interior_fraction == doctest::Approx(0.38).epsilon(0.08));
}

TEST_CASE("filter: an open hemisphere shell is rejected as discontinuous") {
    const TriangleMesh shell = normalize_mesh(make_open_hemisphere(1.0, 3));
    MeshSdf sdf(shell, CameraRig::make(50, 256));
    Rng rng(33);
    const SdfSampleSet set = build_sample_set(sdf, "hemi", 20000, rng);
    const FilterResult res = filter_shape(set, sdf, rng);
    CHECK_FALSE(res.accepted);
    CHECK(res.reason == "discontinuous");
}

TEST_CASE("filter: a 0.002-thick slab is rejected under the 1% interior rule") {
    const TriangleMesh slab = normalize_mesh(make_slab(0.002));
    MeshSdf sdf(slab, CameraRig::make(50, 512));
    Rng rng(35);
    const SdfSampleSet set = build_sample_set(sdf, "slab", 20000, rng);
    const FilterResult res = filter_shape(set, sdf, rng);
    CHECK_FALSE(res.accepted);
    CHECK(res.reason == "interior");
    CHECK(res.interior_fraction < 0.01);
}

TEST_CASE("interior fraction counts uniform samples only") {
    SdfSampleSet set;
    set.id = "x";
    set.samples = {{{0, 0, 0}, -1.0}, {{0, 0, 0}, 1.0}, {{0, 0, 0}, -1.0}};
    set.provenance = {0, 0, 1};  // the near-surface sample does not count
    CHECK(set.interior_fraction() == doctest::Approx(0.5));
}
