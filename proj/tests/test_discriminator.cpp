#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "finite_diff.hpp"
#include "sdfgan/discriminator.hpp"

using namespace sdfgan;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

double point_score(const PointCritic& critic, const Tensor& input) {
    Tape t;
    auto nodes = critic.params().constants_into(t);
    return t.val(critic.score_on_tape(t, nodes, t.constant(input))).data[0];
}

double voxel_score(const VoxelCritic& critic, const Tensor& grid, const GrowthStage& stage) {
    Tape t;
    auto nodes = critic.params().constants_into(t);
    return t.val(critic.score_on_tape(t, nodes, t.constant(grid), stage)).data[0];
}

}  // namespace

TEST_CASE("point critic is permutation invariant bit for bit") {
    PointCritic critic;
    Rng rng(3);
    critic.init_params(rng);
    Rng prng(4);
    Tensor input = random_tensor({64, 4}, prng);
    const double base = point_score(critic, input);

    for (int trial = 0; trial < 20; ++trial) {
        Tensor shuffled = input;
        for (int i = 63; i > 0; --i) {
            const int j = prng.uniform_int(0, i);
            for (int c = 0; c < 4; ++c)
                std::swap(shuffled.data[static_cast<std::size_t>(i) * 4 + c],
                          shuffled.data[static_cast<std::size_t>(j) * 4 + c]);
        }
        CHECK(point_score(critic, shuffled) == base);
    }
}

TEST_CASE("a singleton set scores the dense head applied to its own features") {
    PointCritic critic;
    Rng rng(5);
    critic.init_params(rng);
    Rng prng(6);
    Tensor one = random_tensor({1, 4}, prng);
    // Max over a singleton is the identity, so duplicating the point changes nothing.
    Tensor two = Tensor::zeros({2, 4});
    for (int c = 0; c < 4; ++c) two.data[c] = two.data[4 + c] = one.data[c];
    CHECK(point_score(critic, one) == point_score(critic, two));
}

TEST_CASE("duplicating every point leaves the score unchanged") {
    PointCritic critic;
    Rng rng(7);
    critic.init_params(rng);
    Rng prng(8);
    Tensor input = random_tensor({32, 4}, prng);
    Tensor doubled = Tensor::zeros({64, 4});
    std::copy(input.data.begin(), input.data.end(), doubled.data.begin());
    std::copy(input.data.begin(), input.data.end(), doubled.data.begin() + input.data.size());
    CHECK(point_score(critic, input) == point_score(critic, doubled));
}

TEST_CASE("empty point sets are rejected") {
    PointCritic critic;
    Rng rng(9);
    critic.init_params(rng);
    Tape t;
    auto nodes = critic.params().constants_into(t);
    CHECK_THROWS_AS(critic.score_on_tape(t, nodes, t.constant(Tensor::zeros({0, 4}))),
                    std::invalid_argument);
}

TEST_CASE("voxel critic enforces the stage resolution") {
    VoxelCritic critic;
    Rng rng(11);
    critic.init_params(rng);
    Tape t;
    auto nodes = critic.params().constants_into(t);
    GrowthStage stage0{0, 1.0};
    CHECK_THROWS_AS(critic.score_on_tape(t, nodes, t.constant(Tensor::zeros({1, 16, 16, 16})), stage0),
                    std::invalid_argument);
    // 8^3 input is accepted at stage 0.
    CHECK_NOTHROW(critic.score_on_tape(t, nodes, t.constant(Tensor::zeros({1, 8, 8, 8})), stage0));
}

TEST_CASE("zero weights score the final bias; doubling the head doubles score minus bias") {
    VoxelCritic critic;
    Rng rng(13);
    critic.init_params(rng);
    critic.params().fill(0.0);
    critic.params().mutable_value("dense2.bias").data[0] = 0.37;
    const GrowthStage stage{0, 1.0};
    CHECK(voxel_score(critic, Tensor::zeros({1, 8, 8, 8}), stage) == doctest::Approx(0.37));

    // Random weights: score = w.features + b is linear in the final layer.
    VoxelCritic c2;
    Rng rng2(14);
    c2.init_params(rng2);
    Rng prng(15);
    const Tensor grid = random_tensor({1, 8, 8, 8}, prng);
    const double bias = c2.params().get("dense2.bias").data[0];
    const double before = voxel_score(c2, grid, stage);
    for (double& v : c2.params().mutable_value("dense2.weight").data) v *= 2.0;
    const double after = voxel_score(c2, grid, stage);
    CHECK(after - bias == doctest::Approx(2.0 * (before - bias)).epsilon(1e-9));
}

TEST_CASE("every stage consumes exactly its (8 * 2^k)^3 grid") {
    VoxelCritic critic;
    Rng rng(17);
    critic.init_params(rng);
    Rng prng(18);
    for (int stage_idx = 0; stage_idx < 4; ++stage_idx) {
        const int r = 8 << stage_idx;
        const GrowthStage stage{stage_idx, 0.5};
        const Tensor grid = random_tensor({1, r, r, r}, prng, -0.5, 0.5);
        CHECK(std::isfinite(voxel_score(critic, grid, stage)));
    }
}

TEST_CASE("fade-in blends the new block continuously") {
    VoxelCritic critic;
    Rng rng(19);
    critic.init_params(rng);
    Rng prng(20);
    const Tensor grid = random_tensor({1, 16, 16, 16}, prng, -0.5, 0.5);
    const double s0 = voxel_score(critic, grid, GrowthStage{1, 0.0});
    const double s1 = voxel_score(critic, grid, GrowthStage{1, 1.0});
    const double mid = voxel_score(critic, grid, GrowthStage{1, 0.5});
    // Blending is affine in alpha up to the shared tail nonlinearities; at
    // least assert continuity ordering rather than exact linearity.
    CHECK(std::isfinite(s0));
    CHECK(std::isfinite(s1));
    CHECK(std::isfinite(mid));
    const double da = voxel_score(critic, grid, GrowthStage{1, 0.1}) - s0;
    CHECK(std::fabs(da) < std::fabs(s1 - s0) + 1e-6);
}

TEST_CASE("growth schedule: boundaries reset alpha, resolution doubles, final stage saturates") {
    GrowthSchedule sched;
    sched.total_steps = 1000;
    CHECK(sched.at(0).index == 0);
    CHECK(sched.at(0).alpha == 1.0);  // nothing to fade from at stage 0
    CHECK(sched.at(249).voxel_resolution() == 8);

    const GrowthStage at_boundary = sched.at(250);
    CHECK(at_boundary.index == 1);
    CHECK(at_boundary.alpha == doctest::Approx(0.0));
    CHECK(at_boundary.voxel_resolution() == 16);

    CHECK(sched.at(375).alpha == doctest::Approx(1.0));  // end of the 50% fade window
    CHECK(sched.at(500).index == 2);
    CHECK(sched.at(750).index == 3);
    CHECK(sched.at(999).index == 3);
    CHECK(sched.at(5000).index == 3);
    CHECK(sched.at(5000).alpha == 1.0);

    // Four stages, resolutions 8..64.
    CHECK(sched.at(999).voxel_resolution() == 64);
    // Point counts double per stage.
    CHECK(sched.point_count(sched.at(0)) == 512);
    CHECK(sched.point_count(sched.at(999)) == 4096);
}

TEST_CASE("alpha is monotonically non-decreasing within every stage") {
    GrowthSchedule sched;
    sched.total_steps = 400;
    double prev_alpha = 0.0;
    int prev_stage = -1;
    for (int step = 0; step < 400; ++step) {
        const GrowthStage s = sched.at(step);
        if (s.index != prev_stage) {
            prev_stage = s.index;
            prev_alpha = s.alpha;
        } else {
            CHECK(s.alpha >= prev_alpha);
            prev_alpha = s.alpha;
        }
    }
}

TEST_CASE("max_stage clamps the schedule") {
    GrowthSchedule sched;
    sched.total_steps = 100;
    sched.max_stage = 0;
    for (int step : {0, 30, 60, 99}) {
        CHECK(sched.at(step).index == 0);
        CHECK(sched.at(step).alpha == 1.0);
    }
}

TEST_CASE("critic input gradients exist and match finite differences away from switches") {
    PointCritic critic;
    Rng rng(23);
    critic.init_params(rng);
    Rng prng(24);
    Tensor input = random_tensor({8, 4}, prng);

    Tape t;
    auto nodes = critic.params().constants_into(t);
    const int leaf = t.leaf(input);
    const int score = critic.score_on_tape(t, nodes, leaf);
    std::vector<int> targets{leaf};
    const auto adj = t.backward(score, std::nullopt, &targets);
    REQUIRE(adj[leaf] >= 0);
    const Tensor& g = t.val(adj[leaf]);

    const double h = 1e-5;
    int checked = 0;
    for (std::size_t k = 0; k < input.size(); k += 5) {
        Tensor hi = input, lo = input;
        hi.data[k] += h;
        lo.data[k] -= h;
        const double fd = (point_score(critic, hi) - point_score(critic, lo)) / (2.0 * h);
        if (std::fabs(fd - g.data[k]) / std::max(std::fabs(fd), 1e-6) < 1e-3) ++checked;
    }
    // The max-pool argmax can switch within the finite-difference step for a
    // few coordinates; the overwhelming majority must agree.
    CHECK(checked >= static_cast<int>(input.size() / 5) - 2);
}
