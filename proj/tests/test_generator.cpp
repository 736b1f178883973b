#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "finite_diff.hpp"
#include "oracles.hpp"
#include "sdfgan/generator.hpp"
#include "sdfgan/sdf_primitives.hpp"

using namespace sdfgan;
using testsupport::fd_gradients;
using testsupport::max_rel_error;

namespace {

GeneratorConfig toy_config() {
    GeneratorConfig cfg;
    cfg.latent_dim = 6;
    cfg.hidden_dim = 16;
    cfg.layers = 4;
    cfg.reinjection_layer = 2;
    return cfg;
}

PointBatch random_points(int n, Rng& rng) {
    PointBatch batch;
    batch.points.resize(n);
    for (auto& p : batch.points)
        p = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    return batch;
}

}  // namespace

TEST_CASE("all-zero parameters evaluate to zero everywhere") {
    SdfGenerator gen(toy_config());
    Rng rng(1);
    gen.init_params(rng);
    gen.params().fill(0.0);
    Rng prng(2);
    const PointBatch pts = random_points(32, prng);
    LatentCode z = sample_latent(prng, 6);
    for (double v : gen.forward_batch(z, pts)) CHECK(v == 0.0);
}

TEST_CASE("latent length mismatch and empty batches are rejected") {
    SdfGenerator gen(toy_config());
    Rng rng(1);
    gen.init_params(rng);
    LatentCode bad(5, 0.0);
    CHECK_THROWS_AS(gen.forward(bad, {0.0, 0.0, 0.0}), std::invalid_argument);
    LatentCode ok(6, 0.0);
    PointBatch empty;
    CHECK_THROWS_AS(gen.forward_batch(ok, empty), std::invalid_argument);
}

TEST_CASE("network output matches an independent plain-loop re-implementation") {
    // Full-size architecture.
    SdfGenerator gen{GeneratorConfig{}};
    Rng rng(42);
    gen.init_params(rng);
    Rng prng(7);
    const LatentCode z = sample_latent(prng, 128);
    for (int i = 0; i < 10; ++i) {
        const Vec3 p{prng.uniform(-1.0, 1.0), prng.uniform(-1.0, 1.0), prng.uniform(-1.0, 1.0)};
        const double got = gen.forward(z, p);
        const double want = testsupport::naive_generator_forward(gen, z, p);
        CHECK(std::fabs(got - want) <= 1e-12 * std::max(1.0, std::fabs(want)));
    }
}

TEST_CASE("batch evaluation equals the scalar operation bit for bit") {
    SdfGenerator gen(toy_config());
    Rng rng(5);
    gen.init_params(rng);
    Rng prng(6);
    const LatentCode z = sample_latent(prng, 6);
    const PointBatch pts = random_points(17, prng);
    const std::vector<double> batch = gen.forward_batch(z, pts);
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK(batch[i] == gen.forward(z, pts.points[i]));

    // Permuting the batch permutes the output identically.
    PointBatch rev = pts;
    std::reverse(rev.points.begin(), rev.points.end());
    const std::vector<double> batch_rev = gen.forward_batch(z, rev);
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK(batch_rev[pts.size() - 1 - i] == batch[i]);
}

TEST_CASE("a full 64^3 raster batch yields 262144 values") {
    SdfGenerator gen(toy_config());
    Rng rng(3);
    gen.init_params(rng);
    PointBatch pts;
    pts.points.reserve(64 * 64 * 64);
    for (int z = 0; z < 64; ++z)
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x)
                pts.points.push_back({-1.0 + (x + 0.5) / 32.0, -1.0 + (y + 0.5) / 32.0,
                                      -1.0 + (z + 0.5) / 32.0});
    Rng prng(4);
    const LatentCode z = sample_latent(prng, 6);
    CHECK(gen.forward_batch(z, pts).size() == 262144);
}

TEST_CASE("point gradients match central finite differences") {
    SdfGenerator gen(toy_config());
    Rng rng(11);
    gen.init_params(rng);
    Rng prng(12);
    const LatentCode z = sample_latent(prng, 6);
    const PointBatch pts = random_points(5, prng);
    const std::vector<Vec3> grads = gen.point_gradients(z, pts);
    const double h = 1e-5;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        for (int c = 0; c < 3; ++c) {
            Vec3 hi = pts.points[i], lo = pts.points[i];
            hi[c] += h;
            lo[c] -= h;
            const double fd = (gen.forward(z, hi) - gen.forward(z, lo)) / (2.0 * h);
            CHECK(testsupport::rel_error(grads[i][c], fd, 1e-6) < 1e-4);
        }
    }
}

TEST_CASE("projection follows p - s * grad with a degenerate-gradient flag") {
    Vec3 out;
    // Analytic sphere r=0.5 from outside.
    CHECK(project_to_surface(0.5, {1.0, 0.0, 0.0}, {1.0, 0.0, 0.0}, out));
    CHECK(out[0] == doctest::Approx(0.5));
    // Interior point.
    CHECK(project_to_surface(-0.3, {1.0, 0.0, 0.0}, {0.2, 0.0, 0.0}, out));
    CHECK(out[0] == doctest::Approx(0.5));
    // Plane z=0.
    CHECK(project_to_surface(1.7, {0.0, 0.0, 1.0}, {0.3, -0.2, 1.7}, out));
    CHECK(out[0] == doctest::Approx(0.3));
    CHECK(out[1] == doctest::Approx(-0.2));
    CHECK(out[2] == doctest::Approx(0.0).epsilon(1e-12));
    // Degenerate gradient is flagged.
    CHECK_FALSE(project_to_surface(0.1, {0.0, 0.0, 0.0}, {0.1, 0.1, 0.1}, out));
}

TEST_CASE("refinement does nothing when no point is near the surface") {
    const SdfField sphere = sphere_field({0.0, 0.0, 0.0}, 0.5);
    PointBatch pts;
    pts.points = {{0.9, 0.9, 0.9}, {-0.9, 0.9, 0.8}};  // far outside
    RefinementConfig cfg;
    cfg.delta = 0.05;
    Rng rng(1);
    const RefinedPointSet refined = build_refined_point_set(sphere, pts, cfg, rng);
    CHECK(refined.points.size() == pts.size());
    CHECK(refined.source_rows.empty());
}

TEST_CASE("refinement with sigma 0 lands exactly on an analytic sphere") {
    const SdfField sphere = sphere_field({0.0, 0.0, 0.0}, 0.5);
    Rng prng(8);
    PointBatch pts = random_points(2000, prng);
    RefinementConfig cfg;
    cfg.delta = 0.1;
    cfg.sigma = 0.0;
    Rng rng(2);
    const RefinedPointSet refined = build_refined_point_set(sphere, pts, cfg, rng);
    REQUIRE(refined.points.size() > pts.size());
    for (std::size_t i = pts.size(); i < refined.points.size(); ++i)
        CHECK(std::fabs(norm(refined.points.points[i]) - 0.5) < 1e-9);
}

TEST_CASE("jittered refinement stays within five sigma of the surface") {
    const SdfField sphere = sphere_field({0.0, 0.0, 0.0}, 0.5);
    Rng prng(9);
    PointBatch pts = random_points(1000, prng);
    RefinementConfig cfg;
    cfg.delta = 0.1;
    cfg.sigma = 0.05;
    Rng rng(3);
    const RefinedPointSet refined = build_refined_point_set(sphere, pts, cfg, rng);
    REQUIRE(refined.points.size() > pts.size());
    for (std::size_t i = pts.size(); i < refined.points.size(); ++i)
        CHECK(std::fabs(sphere.value(refined.points.points[i])) < 0.25);
}

TEST_CASE("refined point set bounds |P| <= |P~| <= 2|P| hold on random generators") {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        SdfGenerator gen(toy_config());
        gen.init_params(rng);
        const LatentCode z = sample_latent(rng, 6);
        PointBatch pts = random_points(64, rng);
        RefinementConfig cfg;
        cfg.delta = 0.1;
        cfg.sigma = 0.01;
        const RefinedPointSet refined = build_refined_point_set(gen, z, pts, cfg, rng);
        CHECK(refined.points.size() >= pts.size());
        CHECK(refined.points.size() <= 2 * pts.size());
        // Base points are preserved as a prefix.
        for (std::size_t i = 0; i < pts.size(); ++i)
            CHECK(refined.points.points[i] == pts.points[i]);
        const std::vector<double> values = refine_generated_samples(gen, z, refined);
        CHECK(values.size() == refined.points.size());
    }
}

TEST_CASE("end-to-end parameter gradients through refinement match finite differences") {
    GeneratorConfig cfg;
    cfg.latent_dim = 4;
    cfg.hidden_dim = 8;
    cfg.layers = 2;
    cfg.reinjection_layer = 1;
    SdfGenerator gen(cfg);
    Rng rng(31);
    gen.init_params(rng);
    Rng prng(32);
    const LatentCode z = sample_latent(prng, 4);
    PointBatch pts = random_points(24, prng);
    RefinementConfig rcfg;
    rcfg.delta = 0.3;
    rcfg.sigma = 0.0;

    // Loss: sum of refined SDF values (covers gradients through both the
    // re-evaluated values and the projected positions).
    auto loss_for_params = [&](const ParameterStore& params) {
        SdfGenerator g2(cfg);
        g2.set_params(params);
        Tape t;
        auto nodes = g2.params().leaves_into(t);
        Rng jitter(5);
        const RefinedTapeResult res = refine_on_tape(t, g2, nodes, z, pts, rcfg, jitter);
        return t.val(t.sum(res.values)).data[0];
    };

    Tape t;
    auto nodes = gen.params().leaves_into(t);
    Rng jitter(5);
    const RefinedTapeResult res = refine_on_tape(t, gen, nodes, z, pts, rcfg, jitter);
    REQUIRE(res.added_count > 0);
    const auto adj = t.backward(t.sum(res.values));

    const double h = 1e-5;
    int checked = 0;
    for (const std::string& name : gen.param_names()) {
        const Tensor& base = gen.params().get(name);
        REQUIRE(adj[nodes.at(name)] >= 0);
        const Tensor& got = t.val(adj[nodes.at(name)]);
        // Spot-check a few coordinates per tensor.
        for (std::size_t k = 0; k < base.size(); k += std::max<std::size_t>(1, base.size() / 3)) {
            ParameterStore perturbed_hi, perturbed_lo;
            for (const std::string& n2 : gen.param_names()) {
                Tensor v = gen.params().get(n2);
                if (n2 == name) v.data[k] += h;
                perturbed_hi.create(n2, v);
                v = gen.params().get(n2);
                if (n2 == name) v.data[k] -= h;
                perturbed_lo.create(n2, v);
            }
            const double fd = (loss_for_params(perturbed_hi) - loss_for_params(perturbed_lo)) / (2.0 * h);
            CHECK(testsupport::rel_error(got.data[k], fd, 1e-5) < 1e-3);
            ++checked;
        }
    }
    CHECK(checked > 10);
}

TEST_CASE("fit_latent recovers a self-generated target") {
    GeneratorConfig cfg;
    cfg.latent_dim = 4;
    cfg.hidden_dim = 12;
    cfg.layers = 3;
    cfg.reinjection_layer = 1;
    SdfGenerator gen(cfg);
    Rng rng(77);
    gen.init_params(rng);

    Rng prng(78);
    const LatentCode z_star = sample_latent(prng, 4);
    std::vector<Vec3> pts(256);
    for (auto& p : pts) p = {prng.uniform(-1.0, 1.0), prng.uniform(-1.0, 1.0), prng.uniform(-1.0, 1.0)};
    PointBatch batch;
    batch.points = pts;
    const std::vector<double> targets = gen.forward_batch(z_star, batch);

    // Initialized at the true latent, the loss starts at zero and gradient
    // descent leaves z unchanged.
    FitResult at_star = fit_latent(gen, pts, targets, 5, 0.1, &z_star);
    CHECK(at_star.initial_loss == doctest::Approx(0.0).epsilon(1e-12));
    for (int i = 0; i < 4; ++i) CHECK(at_star.z[i] == doctest::Approx(z_star[i]).epsilon(1e-9));

    // From zero init the loss decreases and reaches the self-consistency bar.
    FitResult fit = fit_latent(gen, pts, targets, 600, 0.08);
    CHECK(fit.final_loss < fit.initial_loss);
    CHECK(fit.final_loss < 1e-3);
}

TEST_CASE("fit_latent aborts with the last finite latent when the loss diverges") {
    GeneratorConfig cfg;
    cfg.latent_dim = 4;
    cfg.hidden_dim = 8;
    cfg.layers = 2;
    cfg.reinjection_layer = 1;
    SdfGenerator gen(cfg);
    Rng rng(70);
    gen.init_params(rng);
    // Poison the final bias so every evaluation is non-finite.
    gen.params().mutable_value("fc2.bias").data[0] = std::numeric_limits<double>::quiet_NaN();
    std::vector<Vec3> pts = {{0.1, 0.2, 0.3}};
    std::vector<double> targets = {0.0};
    FitResult fit = fit_latent(gen, pts, targets, 10, 0.1);
    CHECK(fit.aborted_non_finite);
    for (double v : fit.z) CHECK(std::isfinite(v));
}
