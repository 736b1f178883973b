#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "sdfgan/dataset.hpp"
#include "sdfgan/discriminator.hpp"
#include "sdfgan/generator.hpp"
#include "sdfgan/rng.hpp"

namespace sdfgan {

enum class DiscriminatorKind { Voxel, Point, PointRefined };
DiscriminatorKind discriminator_kind_from_string(const std::string& s);
std::string to_string(DiscriminatorKind kind);

struct TrainConfig {
    double learning_rate = 1e-4;
    int epochs_max = 2000;
    int max_steps = 0;  // 0: bounded by epochs_max only
    int critic_steps = 5;
    int batch_size = 16;
    double gp_lambda = 10.0;
    DiscriminatorKind kind = DiscriminatorKind::Voxel;
    std::uint64_t seed = 1;

    GeneratorConfig generator;
    RefinementConfig refinement;

    int max_stage = 3;
    double fade_fraction = 0.5;
    int base_points = 512;  // point-critic samples at stage 0, doubled per stage

    int checkpoint_interval = 500;
    double rmsprop_alpha = 0.99;
    double rmsprop_eps = 1e-8;

    void validate() const;
    // Flat key=value text file.
    static TrainConfig load(const std::string& path);
    void save(const std::string& path) const;
};

struct StepLog {
    int step = 0;
    int stage = 0;
    double alpha = 1.0;
    double critic_loss = 0.0;
    double gen_loss = 0.0;
    double gp = 0.0;
    double wasserstein_val = 0.0;
    std::size_t refined_total = 0;  // points presented to the critic in refined mode
    std::size_t refined_base = 0;
};

struct TrainSummary {
    int steps_run = 0;
    int epochs_run = 0;
    double best_val = std::numeric_limits<double>::infinity();  // |wasserstein| at best epoch
    int best_step = -1;
    std::string csv_path;
    std::string final_checkpoint;
    std::string best_checkpoint;
};

// WGAN-GP loop: per step, `critic_steps` critic updates on real batches
// followed by one generator update. Critic updates touch only the critic
// store (fakes are produced without a tape); generator updates see the
// critic as constants. All randomness derives from per-shape forked streams
// drawn in batch order, so results do not depend on thread scheduling.
class Trainer {
public:
    Trainer(TrainConfig cfg, const TrainingSet& data);

    StepLog run_step();

    // Individual phases, also driven directly by tests: a critic update on
    // given real shapes (returns the critic loss, penalty via gp_out) and a
    // generator update (returns the generator loss).
    double critic_update(const std::vector<int>& shape_indices, double* gp_out);
    double generator_update(StepLog& log);
    std::vector<int> next_batch();

    using StepCallback = std::function<void(const Trainer&, const StepLog&)>;
    TrainSummary train(const std::string& out_dir, const StepCallback& callback = {});

    double validation_wasserstein();

    int planned_total_steps() const;
    int steps_per_epoch() const;
    GrowthStage stage_at(int step) const { return schedule_.at(step); }

    const TrainConfig& config() const { return cfg_; }
    int step() const { return step_; }
    SdfGenerator& generator() { return gen_; }
    const SdfGenerator& generator() const { return gen_; }
    ParameterStore& critic_params();
    const ParameterStore& critic_params() const;

    void save_checkpoint(const std::string& dir) const;
    void load_checkpoint(const std::string& dir);

private:
    TrainConfig cfg_;
    const TrainingSet* data_;
    SdfGenerator gen_;
    VoxelCritic voxel_;
    PointCritic point_;
    GrowthSchedule schedule_;
    Rng rng_;

    int step_ = 0;
    int epochs_done_ = 0;
    bool epoch_wrapped_ = false;
    double wasserstein_val_ = 0.0;
    std::vector<int> epoch_queue_;
    std::size_t epoch_pos_ = 0;

    // Per-shape work units (values precomputed without a tape).
    struct CriticShapeInput {
        Tensor positions;      // [N,3] (point modes)
        Tensor real_input;     // critic-ready real input
        Tensor fake_input;     // critic-ready fake input
        Tensor interp_values;  // gradient-penalty variable
        int base_points = 0;
    };
    CriticShapeInput prepare_critic_input(int shape_idx, const GrowthStage& stage, Rng& stream);

    int score_real_fake(Tape& t, const std::map<std::string, int>& nodes, const Tensor& input,
                        const GrowthStage& stage) const;
};

}  // namespace sdfgan
