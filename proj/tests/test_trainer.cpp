#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "sdfgan/errors.hpp"
#include "sdfgan/trainer.hpp"

using namespace sdfgan;
namespace fs = std::filesystem;

namespace {

TrainingSet sphere_set(int count, std::uint64_t seed, double r_min = 0.3, double r_max = 0.7) {
    ProceduralConfig cfg;
    cfg.kind = ProceduralKind::Spheres;
    cfg.count = count;
    cfg.n_uniform = 4096;
    cfg.cloud_points = 2048;
    cfg.radius_min = r_min;
    cfg.radius_max = r_max;
    cfg.seed = seed;
    return TrainingSet(make_procedural_dataset(cfg), seed);
}

TrainConfig small_config(DiscriminatorKind kind, std::uint64_t seed = 7) {
    TrainConfig cfg;
    cfg.kind = kind;
    cfg.seed = seed;
    cfg.batch_size = 2;
    cfg.critic_steps = 1;
    cfg.max_steps = 8;
    cfg.epochs_max = 2000;
    cfg.max_stage = 0;
    cfg.base_points = 128;
    cfg.checkpoint_interval = 0;
    cfg.generator.latent_dim = 8;
    cfg.generator.hidden_dim = 16;
    cfg.generator.layers = 3;
    cfg.generator.reinjection_layer = 1;
    return cfg;
}

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("latent draws are standard normal and reproducible") {
    Rng rng(123);
    const int n = 100000;
    std::vector<double> mean(16, 0.0), var(16, 0.0);
    std::vector<LatentCode> draws;
    for (int i = 0; i < n; ++i) {
        const LatentCode z = sample_latent(rng, 16);
        for (int c = 0; c < 16; ++c) mean[c] += z[c];
        if (i < 3) draws.push_back(z);
    }
    for (double& m : mean) m /= n;
    Rng rng2(123);
    for (int i = 0; i < n; ++i) {
        const LatentCode z = sample_latent(rng2, 16);
        for (int c = 0; c < 16; ++c) var[c] += (z[c] - mean[c]) * (z[c] - mean[c]);
        if (i < 3) CHECK(z == draws[i]);  // fixed seed reproduces the stream
    }
    for (int c = 0; c < 16; ++c) {
        CHECK(std::fabs(mean[c]) < 0.02);
        CHECK(var[c] / n > 0.97);
        CHECK(var[c] / n < 1.03);
    }
}

TEST_CASE("config files round-trip and reject malformed input") {
    TrainConfig cfg;
    cfg.kind = DiscriminatorKind::PointRefined;
    cfg.learning_rate = 3e-4;
    cfg.max_steps = 123;
    cfg.generator.hidden_dim = 64;
    const std::string path = (fs::temp_directory_path() / "sdfgan_cfg_test.cfg").string();
    cfg.save(path);
    const TrainConfig loaded = TrainConfig::load(path);
    CHECK(loaded.kind == DiscriminatorKind::PointRefined);
    CHECK(loaded.learning_rate == doctest::Approx(3e-4));
    CHECK(loaded.max_steps == 123);
    CHECK(loaded.generator.hidden_dim == 64);

    std::ofstream bad(path);
    bad << "not a config line\n";
    bad.close();
    CHECK_THROWS_AS(TrainConfig::load(path), DataError);
    fs::remove(path);
}

TEST_CASE("splits follow 85/5/10 and reject empty parts") {
    const SplitIndices split = split_dataset(64, 1);
    CHECK(split.train.size() == 54);
    CHECK(split.val.size() == 3);
    CHECK(split.test.size() == 7);
    CHECK_THROWS_AS(split_dataset(5, 1), DataError);
}

TEST_CASE("a constant critic makes the critic loss exactly the penalty weight") {
    // With D == const, E[D(fake)] - E[D(real)] cancels and the input gradient
    // is zero, so the loss is lambda * (0 - 1)^2 = lambda.
    const TrainingSet data = sphere_set(24, 3);
    TrainConfig cfg = small_config(DiscriminatorKind::Point);
    cfg.gp_lambda = 10.0;
    Trainer trainer(cfg, data);
    trainer.critic_params().fill(0.0);
    trainer.critic_params().mutable_value("d3.bias").data[0] = 0.75;
    double gp = 0.0;
    const double loss = trainer.critic_update(trainer.next_batch(), &gp);
    CHECK(loss == doctest::Approx(10.0).epsilon(1e-9));
    CHECK(gp == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("critic loss assembles as E[D_fake] - E[D_real] + lambda*gp") {
    // The stated example: D(real)=1, D(fake)=0, zero penalty -> loss -1.
    Tape t;
    const int d_fake = t.constant(Tensor::scalar(0.0));
    const int d_real = t.constant(Tensor::scalar(1.0));
    const int gp = t.constant(Tensor::scalar(0.0));
    const int loss = t.add(t.sub(d_fake, d_real), t.scale(gp, 10.0));
    CHECK(t.val(loss).data[0] == doctest::Approx(-1.0));
}

TEST_CASE("updates touch only their own parameter store") {
    const TrainingSet data = sphere_set(24, 5);
    for (auto kind : {DiscriminatorKind::Voxel, DiscriminatorKind::Point,
                      DiscriminatorKind::PointRefined}) {
        Trainer trainer(small_config(kind), data);
        const std::uint64_t gen_before = trainer.generator().params().value_hash();
        double gp = 0.0;
        trainer.critic_update(trainer.next_batch(), &gp);
        CHECK(trainer.generator().params().value_hash() == gen_before);

        const std::uint64_t critic_before = trainer.critic_params().value_hash();
        StepLog log;
        trainer.generator_update(log);
        CHECK(trainer.critic_params().value_hash() == critic_before);
        CHECK(trainer.generator().params().value_hash() != gen_before);
    }
}

TEST_CASE("a zero critic leaves the generator unchanged") {
    const TrainingSet data = sphere_set(24, 6);
    Trainer trainer(small_config(DiscriminatorKind::Point), data);
    trainer.critic_params().fill(0.0);
    const std::uint64_t before = trainer.generator().params().value_hash();
    StepLog log;
    const double loss = trainer.generator_update(log);
    CHECK(loss == 0.0);
    CHECK(trainer.generator().params().value_hash() == before);
}

TEST_CASE("one descent step on a frozen critic reduces the generator objective") {
    // Fixed z and P; loss(theta) = -D(g(z,P), P); a single small RMSprop step
    // must descend.
    Rng rng(17);
    GeneratorConfig gcfg;
    gcfg.latent_dim = 8;
    gcfg.hidden_dim = 16;
    gcfg.layers = 3;
    gcfg.reinjection_layer = 1;
    SdfGenerator gen(gcfg);
    gen.init_params(rng);
    PointCritic critic;
    critic.init_params(rng);

    const LatentCode z = sample_latent(rng, 8);
    PointBatch pts;
    pts.points.resize(64);
    for (auto& p : pts.points)
        p = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};

    auto loss_of = [&]() {
        Tape t;
        auto gn = gen.params().constants_into(t);
        auto dn = critic.params().constants_into(t);
        const int p_node = t.constant(pts.to_tensor());
        const int vals = gen.forward_on_tape(t, gn, p_node, z);
        const int score = critic.score_on_tape(t, dn, t.concat_cols(p_node, vals));
        return -t.val(score).data[0];
    };

    const double before = loss_of();
    Tape t;
    auto gn = gen.params().leaves_into(t);
    auto dn = critic.params().constants_into(t);
    const int p_node = t.constant(pts.to_tensor());
    const int vals = gen.forward_on_tape(t, gn, p_node, z);
    const int score = critic.score_on_tape(t, dn, t.concat_cols(p_node, vals));
    const int loss = t.neg(t.reshape(score, {1}));
    const auto adj = t.backward(loss);
    std::map<std::string, Tensor> grads;
    for (const auto& [name, id] : gn)
        if (adj[id] >= 0) grads.emplace(name, t.val(adj[id]));
    gen.params().rmsprop_update(grads, 1e-4);
    CHECK(loss_of() < before);
}

TEST_CASE("refined mode presents at least as many points as the base set") {
    const TrainingSet data = sphere_set(24, 8);
    TrainConfig cfg = small_config(DiscriminatorKind::PointRefined);
    cfg.refinement.delta = 0.2;
    Trainer trainer(cfg, data);
    StepLog log = trainer.run_step();
    CHECK(log.refined_total >= log.refined_base);
    CHECK(log.refined_total <= 2 * log.refined_base);
}

TEST_CASE("training runs are deterministic for a fixed seed") {
    const TrainingSet data = sphere_set(24, 9);
    TrainConfig cfg = small_config(DiscriminatorKind::Point, 42);
    cfg.max_steps = 6;

    const std::string dir_a = (fs::temp_directory_path() / "sdfgan_train_a").string();
    const std::string dir_b = (fs::temp_directory_path() / "sdfgan_train_b").string();
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    Trainer a(cfg, data), b(cfg, data);
    a.train(dir_a);
    b.train(dir_b);
    const std::string csv_a = read_file(dir_a + "/metrics.csv");
    CHECK_FALSE(csv_a.empty());
    CHECK(csv_a == read_file(dir_b + "/metrics.csv"));
    CHECK(read_file(dir_a + "/checkpoints/final/generator.sgpc") ==
          read_file(dir_b + "/checkpoints/final/generator.sgpc"));
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

TEST_CASE("metrics csv carries the documented header and one row per step") {
    const TrainingSet data = sphere_set(24, 10);
    TrainConfig cfg = small_config(DiscriminatorKind::Voxel);
    cfg.max_steps = 4;
    const std::string dir = (fs::temp_directory_path() / "sdfgan_train_csv").string();
    fs::remove_all(dir);
    Trainer trainer(cfg, data);
    const TrainSummary summary = trainer.train(dir);
    CHECK(summary.steps_run == 4);
    std::ifstream is(summary.csv_path);
    std::string line;
    std::getline(is, line);
    CHECK(line == "step,stage,alpha,critic_loss,gen_loss,gp,wasserstein_val");
    int rows = 0;
    while (std::getline(is, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 4);
    fs::remove_all(dir);
}

TEST_CASE("checkpoints restore identical continuation losses") {
    const TrainingSet data = sphere_set(24, 11);
    TrainConfig cfg = small_config(DiscriminatorKind::Point, 4);
    cfg.max_steps = 10;
    Trainer a(cfg, data);
    for (int i = 0; i < 4; ++i) a.run_step();
    const std::string dir = (fs::temp_directory_path() / "sdfgan_ckpt_test").string();
    fs::remove_all(dir);
    a.save_checkpoint(dir);

    Trainer b(cfg, data);
    b.load_checkpoint(dir);
    CHECK(b.step() == a.step());
    for (int i = 0; i < 3; ++i) {
        const StepLog la = a.run_step();
        const StepLog lb = b.run_step();
        CHECK(la.critic_loss == lb.critic_loss);
        CHECK(la.gen_loss == lb.gen_loss);
        CHECK(la.step == lb.step);
    }
    fs::remove_all(dir);
}

TEST_CASE("growth stages advance on schedule across four stages") {
    const TrainingSet data = sphere_set(24, 12);
    TrainConfig cfg = small_config(DiscriminatorKind::Voxel);
    cfg.max_steps = 40;
    cfg.max_stage = 3;
    Trainer trainer(cfg, data);
    CHECK(trainer.planned_total_steps() == 40);
    CHECK(trainer.stage_at(0).index == 0);
    CHECK(trainer.stage_at(10).index == 1);
    CHECK(trainer.stage_at(10).alpha == doctest::Approx(0.0));
    CHECK(trainer.stage_at(20).index == 2);
    CHECK(trainer.stage_at(30).index == 3);
    CHECK(trainer.stage_at(39).index == 3);
}

TEST_CASE("non-finite parameters abort with a diagnostic") {
    const TrainingSet data = sphere_set(24, 13);
    TrainConfig cfg = small_config(DiscriminatorKind::Point);
    Trainer trainer(cfg, data);
    trainer.generator().params().mutable_value("fc1.weight").data[0] =
        std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(trainer.run_step(), NumericError);
}

TEST_CASE("wasserstein estimate stays small on an identical-shape dataset") {
    // 20 identical spheres; after a short training run on a converged-trivial
    // task the validation estimate must sit near zero.
    const TrainingSet data = sphere_set(20, 14, 0.5, 0.5);
    TrainConfig cfg = small_config(DiscriminatorKind::Point, 15);
    cfg.max_steps = 120;
    cfg.base_points = 128;
    cfg.batch_size = 2;
    Trainer trainer(cfg, data);
    for (int i = 0; i < 120; ++i) trainer.run_step();
    const double w = trainer.validation_wasserstein();
    CHECK(std::isfinite(w));
    CHECK(std::fabs(w) < 0.5);
}
