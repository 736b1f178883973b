#include "sdfgan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sdfgan/errors.hpp"

namespace sdfgan {

namespace fs = std::filesystem;

DiscriminatorKind discriminator_kind_from_string(const std::string& s) {
    if (s == "voxel") return DiscriminatorKind::Voxel;
    if (s == "point") return DiscriminatorKind::Point;
    if (s == "point-refined") return DiscriminatorKind::PointRefined;
    throw DataError("unknown discriminator '" + s + "' (expected voxel|point|point-refined)");
}

std::string to_string(DiscriminatorKind kind) {
    switch (kind) {
        case DiscriminatorKind::Voxel: return "voxel";
        case DiscriminatorKind::Point: return "point";
        case DiscriminatorKind::PointRefined: return "point-refined";
    }
    return "?";
}

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw DataError("config: learning_rate must be > 0");
    if (epochs_max < 1) throw DataError("config: epochs_max must be >= 1");
    if (critic_steps < 1 || batch_size < 1) throw DataError("config: steps/batch must be >= 1");
    if (gp_lambda < 0.0) throw DataError("config: gp_lambda must be >= 0");
    if (max_stage < 0 || max_stage > 3) throw DataError("config: max_stage must be in [0,3]");
    generator.validate();
}

TrainConfig TrainConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open config '" + path + "'");
    TrainConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                throw DataError("config '" + path + "' line " + std::to_string(lineno) +
                                ": expected key=value");
            continue;
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "learning_rate") cfg.learning_rate = std::stod(value);
            else if (key == "epochs_max") cfg.epochs_max = std::stoi(value);
            else if (key == "max_steps") cfg.max_steps = std::stoi(value);
            else if (key == "critic_steps") cfg.critic_steps = std::stoi(value);
            else if (key == "batch_size") cfg.batch_size = std::stoi(value);
            else if (key == "gp_lambda") cfg.gp_lambda = std::stod(value);
            else if (key == "discriminator") cfg.kind = discriminator_kind_from_string(value);
            else if (key == "seed") cfg.seed = std::stoull(value);
            else if (key == "latent_dim") cfg.generator.latent_dim = std::stoi(value);
            else if (key == "hidden_dim") cfg.generator.hidden_dim = std::stoi(value);
            else if (key == "layers") cfg.generator.layers = std::stoi(value);
            else if (key == "reinjection_layer") cfg.generator.reinjection_layer = std::stoi(value);
            else if (key == "delta") cfg.refinement.delta = std::stod(value);
            else if (key == "sigma") cfg.refinement.sigma = std::stod(value);
            else if (key == "max_stage") cfg.max_stage = std::stoi(value);
            else if (key == "fade_fraction") cfg.fade_fraction = std::stod(value);
            else if (key == "base_points") cfg.base_points = std::stoi(value);
            else if (key == "checkpoint_interval") cfg.checkpoint_interval = std::stoi(value);
            else if (key == "rmsprop_alpha") cfg.rmsprop_alpha = std::stod(value);
            else if (key == "rmsprop_eps") cfg.rmsprop_eps = std::stod(value);
            else throw DataError("unknown key '" + key + "'");
        } catch (const DataError&) {
            throw;
        } catch (const std::exception&) {
            throw DataError("config '" + path + "' line " + std::to_string(lineno) +
                            ": bad value for '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

void TrainConfig::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    os.precision(17);
    os << "discriminator=" << to_string(kind) << "\n";
    os << "learning_rate=" << learning_rate << "\n";
    os << "epochs_max=" << epochs_max << "\n";
    os << "max_steps=" << max_steps << "\n";
    os << "critic_steps=" << critic_steps << "\n";
    os << "batch_size=" << batch_size << "\n";
    os << "gp_lambda=" << gp_lambda << "\n";
    os << "seed=" << seed << "\n";
    os << "latent_dim=" << generator.latent_dim << "\n";
    os << "hidden_dim=" << generator.hidden_dim << "\n";
    os << "layers=" << generator.layers << "\n";
    os << "reinjection_layer=" << generator.reinjection_layer << "\n";
    os << "delta=" << refinement.delta << "\n";
    os << "sigma=" << refinement.sigma << "\n";
    os << "max_stage=" << max_stage << "\n";
    os << "fade_fraction=" << fade_fraction << "\n";
    os << "base_points=" << base_points << "\n";
    os << "checkpoint_interval=" << checkpoint_interval << "\n";
    os << "rmsprop_alpha=" << rmsprop_alpha << "\n";
    os << "rmsprop_eps=" << rmsprop_eps << "\n";
}

Trainer::Trainer(TrainConfig cfg, const TrainingSet& data)
    : cfg_(std::move(cfg)), data_(&data), gen_(cfg_.generator), rng_(cfg_.seed) {
    cfg_.validate();
    if (data_->count() < 1) throw DataError("trainer: empty dataset");
    gen_.init_params(rng_);
    Rng critic_rng = rng_.fork();
    if (cfg_.kind == DiscriminatorKind::Voxel)
        voxel_.init_params(critic_rng);
    else
        point_.init_params(critic_rng);

    schedule_.total_steps = planned_total_steps();
    schedule_.max_stage = cfg_.max_stage;
    schedule_.fade_fraction = cfg_.fade_fraction;
    schedule_.base_points = cfg_.base_points;
}

ParameterStore& Trainer::critic_params() {
    return cfg_.kind == DiscriminatorKind::Voxel ? voxel_.params() : point_.params();
}
const ParameterStore& Trainer::critic_params() const {
    return cfg_.kind == DiscriminatorKind::Voxel ? voxel_.params() : point_.params();
}

int Trainer::steps_per_epoch() const {
    const int train_count = static_cast<int>(data_->split().train.size());
    const int consumed = cfg_.critic_steps * cfg_.batch_size;
    return std::max(1, (train_count + consumed - 1) / consumed);
}

int Trainer::planned_total_steps() const {
    const int by_epochs = cfg_.epochs_max * steps_per_epoch();
    return cfg_.max_steps > 0 ? std::min(cfg_.max_steps, by_epochs) : by_epochs;
}

std::vector<int> Trainer::next_batch() {
    std::vector<int> batch;
    batch.reserve(cfg_.batch_size);
    for (int i = 0; i < cfg_.batch_size; ++i) {
        if (epoch_pos_ >= epoch_queue_.size()) {
            if (!epoch_queue_.empty()) {
                ++epochs_done_;
                epoch_wrapped_ = true;
            }
            epoch_queue_ = data_->split().train;
            for (int k = static_cast<int>(epoch_queue_.size()) - 1; k > 0; --k)
                std::swap(epoch_queue_[k], epoch_queue_[rng_.uniform_int(0, k)]);
            epoch_pos_ = 0;
        }
        batch.push_back(epoch_queue_[epoch_pos_++]);
    }
    return batch;
}

namespace {

PointBatch raster_points(int resolution) {
    PointBatch batch;
    VoxelGrid g(resolution);
    batch.points.reserve(g.values.size());
    for (int z = 0; z < resolution; ++z)
        for (int y = 0; y < resolution; ++y)
            for (int x = 0; x < resolution; ++x) batch.points.push_back(g.position(x, y, z));
    return batch;
}

Tensor point_input_tensor(const std::vector<Vec3>& pts, const std::vector<double>& values) {
    Tensor t = Tensor::zeros({static_cast<int>(pts.size()), 4});
    for (std::size_t i = 0; i < pts.size(); ++i) {
        t.data[i * 4 + 0] = pts[i][0];
        t.data[i * 4 + 1] = pts[i][1];
        t.data[i * 4 + 2] = pts[i][2];
        t.data[i * 4 + 3] = values[i];
    }
    return t;
}

void accumulate_grads(std::map<std::string, Tensor>& total, const std::map<std::string, int>& nodes,
                      const Tape& t, const std::vector<int>& adj) {
    for (const auto& [name, id] : nodes) {
        if (adj[id] < 0) continue;
        const Tensor& g = t.val(adj[id]);
        auto it = total.find(name);
        if (it == total.end()) {
            total.emplace(name, g);
        } else {
            for (std::size_t k = 0; k < g.size(); ++k) it->second.data[k] += g.data[k];
        }
    }
}

}  // namespace

Trainer::CriticShapeInput Trainer::prepare_critic_input(int shape_idx, const GrowthStage& stage,
                                                        Rng& stream) {
    const ShapeRecord& rec = data_->shape(shape_idx);
    CriticShapeInput out;
    const LatentCode z = sample_latent(stream, cfg_.generator.latent_dim);
    const double u = stream.uniform();

    if (cfg_.kind == DiscriminatorKind::Voxel) {
        const int R = stage.voxel_resolution();
        const VoxelGrid& real = rec.raster(R);
        PointBatch raster = raster_points(R);
        const std::vector<double> fake = gen_.forward_batch(z, raster);
        out.real_input = real.to_tensor();
        out.fake_input = Tensor({1, R, R, R}, fake);
        out.interp_values = Tensor::zeros({1, R, R, R});
        for (std::size_t i = 0; i < fake.size(); ++i)
            out.interp_values.data[i] = u * real.values[i] + (1.0 - u) * fake[i];
        out.base_points = R * R * R;
        return out;
    }

    // Point modes: draw a subset of the stored uniform samples.
    const int n = schedule_.point_count(stage);
    const auto& samples = rec.samples.samples;
    if (samples.empty()) throw DataError("shape '" + rec.samples.id + "' has no samples");
    std::vector<Vec3> pts(n);
    std::vector<double> real_s(n);
    for (int i = 0; i < n; ++i) {
        const auto& s = samples[stream.uniform_int(0, static_cast<int>(samples.size()) - 1)];
        pts[i] = s.p;
        real_s[i] = s.s;
    }
    PointBatch base;
    base.points = pts;
    const std::vector<double> fake_s = gen_.forward_batch(z, base);

    out.positions = base.to_tensor();
    out.base_points = n;
    out.interp_values = Tensor::zeros({n, 1});
    for (int i = 0; i < n; ++i) out.interp_values.data[i] = u * real_s[i] + (1.0 - u) * fake_s[i];

    if (cfg_.kind == DiscriminatorKind::Point) {
        out.real_input = point_input_tensor(pts, real_s);
        out.fake_input = point_input_tensor(base.points, fake_s);
        return out;
    }

    // Refined mode: fake side gets Eq.-style projected points from the
    // generator's own field; the real side gains matching near-surface
    // ground truth from the stored surface cloud.
    RefinedPointSet refined = build_refined_point_set(gen_, z, base, cfg_.refinement, stream);
    const std::vector<double> fake_ref = refine_generated_samples(gen_, z, refined);
    out.fake_input = point_input_tensor(refined.points.points, fake_ref);

    const ShapeOracle& oracle = data_->oracle(shape_idx);
    std::vector<Vec3> real_pts = pts;
    std::vector<double> real_vals = real_s;
    for (int i = 0; i < n; ++i) {
        if (std::fabs(real_s[i]) >= cfg_.refinement.delta) continue;
        Vec3 q = oracle.nearest_surface_point(pts[i]);
        for (int c = 0; c < 3; ++c)
            q[c] = std::clamp(q[c] + cfg_.refinement.sigma * stream.normal(), -1.0, 1.0);
        real_pts.push_back(q);
        real_vals.push_back(oracle.signed_distance(q));
    }
    out.real_input = point_input_tensor(real_pts, real_vals);
    return out;
}

int Trainer::score_real_fake(Tape& t, const std::map<std::string, int>& nodes, const Tensor& input,
                             const GrowthStage& stage) const {
    const int node = t.constant(input);
    if (cfg_.kind == DiscriminatorKind::Voxel) return voxel_.score_on_tape(t, nodes, node, stage);
    return point_.score_on_tape(t, nodes, node);
}

double Trainer::critic_update(const std::vector<int>& shape_indices, double* gp_out) {
    const GrowthStage stage = schedule_.at(step_);
    const int B = static_cast<int>(shape_indices.size());
    std::vector<Rng> streams;
    streams.reserve(B);
    for (int i = 0; i < B; ++i) streams.push_back(rng_.fork());
    for (int idx : shape_indices) data_->oracle(idx);  // warm caches before the parallel region

    std::vector<std::map<std::string, Tensor>> grads(B);
    std::vector<double> losses(B, 0.0), gps(B, 0.0);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1)
#endif
    for (int b = 0; b < B; ++b) {
        CriticShapeInput in = prepare_critic_input(shape_indices[b], stage, streams[b]);
        Tape t;
        auto nodes = critic_params().leaves_into(t);
        const int d_real = score_real_fake(t, nodes, in.real_input, stage);
        const int d_fake = score_real_fake(t, nodes, in.fake_input, stage);

        const int hat_leaf = t.leaf(in.interp_values);
        int hat_score;
        if (cfg_.kind == DiscriminatorKind::Voxel) {
            hat_score = voxel_.score_on_tape(t, nodes, hat_leaf, stage);
        } else {
            const int hat_input = t.concat_cols(t.constant(in.positions), hat_leaf);
            hat_score = point_.score_on_tape(t, nodes, hat_input);
        }
        std::vector<int> targets{hat_leaf};
        auto hat_adj = t.backward(hat_score, std::nullopt, &targets);
        if (hat_adj[hat_leaf] < 0)
            throw NumericError("gradient penalty: critic does not depend on its input");
        const int gp_node = t.square(t.add_scalar(t.norm(hat_adj[hat_leaf]), -1.0));
        const int loss =
            t.add(t.sub(t.reshape(d_fake, {1}), t.reshape(d_real, {1})),
                  t.scale(t.reshape(gp_node, {1}), cfg_.gp_lambda));

        losses[b] = t.val(loss).data[0];
        gps[b] = t.val(gp_node).data[0];
        auto adj = t.backward(loss);
        accumulate_grads(grads[b], nodes, t, adj);
    }

    std::map<std::string, Tensor> total;
    for (int b = 0; b < B; ++b)
        for (auto& [name, g] : grads[b]) {
            auto it = total.find(name);
            if (it == total.end())
                total.emplace(name, std::move(g));
            else
                for (std::size_t k = 0; k < g.size(); ++k) it->second.data[k] += g.data[k];
        }
    for (auto& [name, g] : total)
        for (double& v : g.data) v /= B;
    critic_params().rmsprop_update(total, cfg_.learning_rate, cfg_.rmsprop_alpha, cfg_.rmsprop_eps);

    double loss = 0.0, gp = 0.0;
    for (int b = 0; b < B; ++b) {
        loss += losses[b];
        gp += gps[b];
    }
    if (gp_out) *gp_out = gp / B;
    return loss / B;
}

double Trainer::generator_update(StepLog& log) {
    const GrowthStage stage = schedule_.at(step_);
    const int B = cfg_.batch_size;
    std::vector<Rng> streams;
    streams.reserve(B);
    for (int i = 0; i < B; ++i) streams.push_back(rng_.fork());

    std::vector<std::map<std::string, Tensor>> grads(B);
    std::vector<double> losses(B, 0.0);
    std::vector<std::size_t> tilde_counts(B, 0), base_counts(B, 0);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1)
#endif
    for (int b = 0; b < B; ++b) {
        Rng& stream = streams[b];
        const LatentCode z = sample_latent(stream, cfg_.generator.latent_dim);
        Tape t;
        auto gnodes = gen_.params().leaves_into(t);
        auto dnodes = critic_params().constants_into(t);
        int score;
        if (cfg_.kind == DiscriminatorKind::Voxel) {
            const int R = stage.voxel_resolution();
            PointBatch raster = raster_points(R);
            const int values = gen_.forward_on_tape(t, gnodes, t.constant(raster.to_tensor()), z);
            const int grid = t.reshape(values, {1, R, R, R});
            score = voxel_.score_on_tape(t, dnodes, grid, stage);
            base_counts[b] = tilde_counts[b] = raster.size();
        } else {
            const int n = schedule_.point_count(stage);
            PointBatch pts;
            pts.points.resize(n);
            for (auto& p : pts.points)
                p = {stream.uniform(-1.0, 1.0), stream.uniform(-1.0, 1.0), stream.uniform(-1.0, 1.0)};
            if (cfg_.kind == DiscriminatorKind::Point) {
                const int p_node = t.constant(pts.to_tensor());
                const int values = gen_.forward_on_tape(t, gnodes, p_node, z);
                const int input = t.concat_cols(p_node, values);
                score = point_.score_on_tape(t, dnodes, input);
                base_counts[b] = tilde_counts[b] = pts.size();
            } else {
                RefinedTapeResult ref = refine_on_tape(t, gen_, gnodes, z, pts, cfg_.refinement, stream);
                const int input = t.concat_cols(ref.positions, ref.values);
                score = point_.score_on_tape(t, dnodes, input);
                base_counts[b] = ref.base_count;
                tilde_counts[b] = ref.base_count + ref.added_count;
            }
        }
        const int loss = t.neg(t.reshape(score, {1}));
        losses[b] = t.val(loss).data[0];
        auto adj = t.backward(loss);
        accumulate_grads(grads[b], gnodes, t, adj);
    }

    std::map<std::string, Tensor> total;
    for (int b = 0; b < B; ++b)
        for (auto& [name, g] : grads[b]) {
            auto it = total.find(name);
            if (it == total.end())
                total.emplace(name, std::move(g));
            else
                for (std::size_t k = 0; k < g.size(); ++k) it->second.data[k] += g.data[k];
        }
    for (auto& [name, g] : total)
        for (double& v : g.data) v /= B;
    gen_.params().rmsprop_update(total, cfg_.learning_rate, cfg_.rmsprop_alpha, cfg_.rmsprop_eps);

    double loss = 0.0;
    for (int b = 0; b < B; ++b) loss += losses[b];
    for (int b = 0; b < B; ++b) {
        log.refined_total += tilde_counts[b];
        log.refined_base += base_counts[b];
    }
    return loss / B;
}

double Trainer::validation_wasserstein() {
    const GrowthStage stage = schedule_.at(step_);
    Rng val_rng = rng_.fork();
    const auto& val = data_->split().val;
    if (val.empty()) return 0.0;
    double d_real_sum = 0.0, d_fake_sum = 0.0;
    for (int idx : val) {
        Rng stream = val_rng.fork();
        CriticShapeInput in = prepare_critic_input(idx, stage, stream);
        Tape t;
        auto nodes = critic_params().constants_into(t);
        const int d_real = score_real_fake(t, nodes, in.real_input, stage);
        const int d_fake = score_real_fake(t, nodes, in.fake_input, stage);
        d_real_sum += t.val(d_real).data[0];
        d_fake_sum += t.val(d_fake).data[0];
    }
    return (d_real_sum - d_fake_sum) / static_cast<double>(val.size());
}

StepLog Trainer::run_step() {
    StepLog log;
    double gp = 0.0;
    double closs = 0.0;
    for (int c = 0; c < cfg_.critic_steps; ++c) closs = critic_update(next_batch(), &gp);
    log.gen_loss = generator_update(log);
    log.critic_loss = closs;
    log.gp = gp;
    ++step_;

    if (!std::isfinite(log.critic_loss) || !std::isfinite(log.gen_loss))
        throw NumericError("non-finite loss at step " + std::to_string(step_));
    if (!gen_.params().all_finite() || !critic_params().all_finite())
        throw NumericError("non-finite parameter after step " + std::to_string(step_));

    if (epoch_wrapped_) {
        epoch_wrapped_ = false;
        wasserstein_val_ = validation_wasserstein();
    }
    const GrowthStage stage = schedule_.at(step_ - 1);
    log.step = step_;
    log.stage = stage.index;
    log.alpha = stage.alpha;
    log.wasserstein_val = wasserstein_val_;
    return log;
}

TrainSummary Trainer::train(const std::string& out_dir, const StepCallback& callback) {
    fs::create_directories(out_dir);
    fs::create_directories(out_dir + "/checkpoints");
    cfg_.save(out_dir + "/config.cfg");

    TrainSummary summary;
    summary.csv_path = out_dir + "/metrics.csv";
    std::ofstream csv(summary.csv_path);
    if (!csv) throw DataError("cannot open '" + summary.csv_path + "' for writing");
    csv << "step,stage,alpha,critic_loss,gen_loss,gp,wasserstein_val\n";

    wasserstein_val_ = validation_wasserstein();
    const int total = planned_total_steps();
    double last_val = wasserstein_val_;
    auto consider_best = [&](double val, int at_step) {
        const double mag = std::fabs(val);
        if (mag < summary.best_val) {
            summary.best_val = mag;
            summary.best_step = at_step;
            summary.best_checkpoint = out_dir + "/checkpoints/best";
            save_checkpoint(summary.best_checkpoint);
        }
    };
    consider_best(wasserstein_val_, 0);

    try {
        for (int s = 0; s < total; ++s) {
            const StepLog log = run_step();
            char row[256];
            std::snprintf(row, sizeof(row), "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", log.step,
                          log.stage, log.alpha, log.critic_loss, log.gen_loss, log.gp,
                          log.wasserstein_val);
            csv << row;
            if (callback) callback(*this, log);
            if (log.wasserstein_val != last_val) {
                last_val = log.wasserstein_val;
                consider_best(last_val, log.step);
            }
            if (cfg_.checkpoint_interval > 0 && log.step % cfg_.checkpoint_interval == 0) {
                char name[64];
                std::snprintf(name, sizeof(name), "/checkpoints/step_%06d", log.step);
                save_checkpoint(out_dir + name);
            }
        }
    } catch (const NumericError&) {
        csv.flush();
        save_checkpoint(out_dir + "/checkpoints/diagnostic");
        throw;
    }
    summary.steps_run = step_;
    summary.epochs_run = epochs_done_;
    summary.final_checkpoint = out_dir + "/checkpoints/final";
    save_checkpoint(summary.final_checkpoint);
    return summary;
}

void Trainer::save_checkpoint(const std::string& dir) const {
    fs::create_directories(dir);
    cfg_.save(dir + "/config.cfg");
    gen_.params().save(dir + "/generator.sgpc");
    critic_params().save(dir + "/critic.sgpc");
    gen_.params().optimizer_state().save(dir + "/generator_opt.sgpc");
    critic_params().optimizer_state().save(dir + "/critic_opt.sgpc");
    std::ofstream os(dir + "/state.txt");
    if (!os) throw DataError("cannot write checkpoint state in '" + dir + "'");
    os.precision(17);
    os << "step=" << step_ << "\n";
    os << "epochs_done=" << epochs_done_ << "\n";
    os << "wasserstein_val=" << wasserstein_val_ << "\n";
    os << "epoch_pos=" << epoch_pos_ << "\n";
    os << "epoch_queue=";
    for (std::size_t i = 0; i < epoch_queue_.size(); ++i)
        os << (i ? "," : "") << epoch_queue_[i];
    os << "\n";
    os << "rng=" << rng_ << "\n";
}

void Trainer::load_checkpoint(const std::string& dir) {
    gen_.set_params(ParameterStore::load(dir + "/generator.sgpc"));
    ParameterStore critic = ParameterStore::load(dir + "/critic.sgpc");
    if (cfg_.kind == DiscriminatorKind::Voxel)
        voxel_.set_params(std::move(critic));
    else
        point_.set_params(std::move(critic));
    gen_.params().load_optimizer_state(ParameterStore::load(dir + "/generator_opt.sgpc"));
    critic_params().load_optimizer_state(ParameterStore::load(dir + "/critic_opt.sgpc"));

    std::ifstream is(dir + "/state.txt");
    if (!is) throw DataError("missing state.txt in checkpoint '" + dir + "'");
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "step") step_ = std::stoi(value);
        else if (key == "epochs_done") epochs_done_ = std::stoi(value);
        else if (key == "wasserstein_val") wasserstein_val_ = std::stod(value);
        else if (key == "epoch_pos") epoch_pos_ = std::stoul(value);
        else if (key == "epoch_queue") {
            epoch_queue_.clear();
            std::istringstream qs(value);
            std::string tok;
            while (std::getline(qs, tok, ','))
                if (!tok.empty()) epoch_queue_.push_back(std::stoi(tok));
        } else if (key == "rng") {
            std::istringstream rs(value);
            rs >> rng_;
        }
    }
}

}  // namespace sdfgan
