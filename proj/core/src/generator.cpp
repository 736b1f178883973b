#include "sdfgan/generator.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sdfgan/errors.hpp"

namespace sdfgan {

namespace {
constexpr double kLayerNormEps = 1e-5;
constexpr double kDegenerateGradNorm = 1e-12;
}  // namespace

LatentCode sample_latent(Rng& rng, int dim) {
    LatentCode z(dim);
    for (double& v : z) v = rng.normal();
    return z;
}

void GeneratorConfig::validate() const {
    if (latent_dim < 1 || hidden_dim < 1) throw DataError("generator: dimensions must be positive");
    if (layers < 2) throw DataError("generator: needs at least 2 layers");
    if (reinjection_layer < 1 || reinjection_layer >= layers)
        throw DataError("generator: reinjection layer must satisfy 1 <= r < layers");
}

Tensor PointBatch::to_tensor() const {
    Tensor t = Tensor::zeros({static_cast<int>(points.size()), 3});
    for (std::size_t i = 0; i < points.size(); ++i)
        for (int j = 0; j < 3; ++j) t.data[i * 3 + j] = points[i][j];
    return t;
}

int SdfGenerator::layer_in_dim(int layer) const {
    if (layer == 1) return cfg_.input_dim();
    if (layer == cfg_.reinjection_layer + 1) return cfg_.hidden_dim + cfg_.input_dim();
    return cfg_.hidden_dim;
}

void SdfGenerator::init_params(Rng& rng) {
    params_ = ParameterStore();
    for (int l = 1; l <= cfg_.layers; ++l) {
        const int in = layer_in_dim(l);
        const int out = l == cfg_.layers ? 1 : cfg_.hidden_dim;
        const std::string base = "fc" + std::to_string(l);
        params_.create_uniform(base + ".weight", {in, out}, in, rng);
        params_.create(base + ".bias", Tensor::zeros({out}));
        if (l < cfg_.layers) {
            const std::string ln = "ln" + std::to_string(l);
            params_.create(ln + ".gain", Tensor::full({out}, 1.0));
            params_.create(ln + ".bias", Tensor::zeros({out}));
        }
    }
}

std::vector<std::string> SdfGenerator::param_names() const { return params_.names(); }

std::vector<double> SdfGenerator::forward_batch(const LatentCode& z, const PointBatch& points) const {
    if (static_cast<int>(z.size()) != cfg_.latent_dim)
        throw std::invalid_argument("generator: latent length " + std::to_string(z.size()) +
                                    " does not match configured " + std::to_string(cfg_.latent_dim));
    if (points.size() == 0) throw std::invalid_argument("generator: empty point batch");

    // Runs the same tape pipeline as training, chunked to bound memory. Rows
    // are computed independently inside every op, so results are
    // bit-identical for any batch or chunk size.
    const int n = static_cast<int>(points.size());
    const int chunk = 16384;
    std::vector<double> out(n);
    for (int start = 0; start < n; start += chunk) {
        const int len = std::min(chunk, n - start);
        Tensor pts = Tensor::zeros({len, 3});
        for (int i = 0; i < len; ++i)
            for (int c = 0; c < 3; ++c) pts.data[static_cast<std::size_t>(i) * 3 + c] =
                points.points[start + i][c];
        Tape t;
        auto nodes = params_.constants_into(t);
        const int values = forward_on_tape(t, nodes, t.constant(std::move(pts)), z);
        const Tensor& v = t.val(values);
        std::copy(v.data.begin(), v.data.end(), out.begin() + start);
    }
    return out;
}

double SdfGenerator::forward(const LatentCode& z, const Vec3& p) const {
    PointBatch batch;
    batch.points.push_back(p);
    return forward_batch(z, batch)[0];
}

int SdfGenerator::forward_on_tape(Tape& t, const std::map<std::string, int>& param_nodes,
                                  int points_node, const LatentCode& z) const {
    if (static_cast<int>(z.size()) != cfg_.latent_dim)
        throw std::invalid_argument("generator: latent length mismatch");
    int z_node = t.constant(Tensor({cfg_.latent_dim}, std::vector<double>(z.begin(), z.end())));
    return forward_on_tape(t, param_nodes, points_node, z_node);
}

int SdfGenerator::forward_on_tape(Tape& t, const std::map<std::string, int>& param_nodes,
                                  int points_node, int z_node) const {
    const Tensor& zv = t.val(z_node);
    if (zv.rank() != 1 || zv.shape[0] != cfg_.latent_dim)
        throw std::invalid_argument("generator: latent node must be [" +
                                    std::to_string(cfg_.latent_dim) + "], got " + zv.shape_str());
    const Tensor& pts = t.val(points_node);
    if (pts.rank() != 2 || pts.cols() != 3)
        throw std::invalid_argument("generator: points node must be [N,3], got " + pts.shape_str());
    const int n = pts.rows();
    if (n == 0) throw std::invalid_argument("generator: empty point batch");

    auto node = [&](const std::string& name) {
        auto it = param_nodes.find(name);
        if (it == param_nodes.end()) throw DataError("generator: missing parameter node '" + name + "'");
        return it->second;
    };

    int inject = t.concat_cols(t.broadcast_rows(z_node, n), points_node);
    int h = inject;
    for (int l = 1; l <= cfg_.layers; ++l) {
        const std::string base = "fc" + std::to_string(l);
        h = t.linear(h, node(base + ".weight"), node(base + ".bias"));
        if (l == cfg_.layers) break;
        const std::string ln = "ln" + std::to_string(l);
        h = t.layer_norm(h, node(ln + ".gain"), node(ln + ".bias"), kLayerNormEps);
        h = t.relu(h);
        if (l == cfg_.reinjection_layer) h = t.concat_cols(h, inject);
    }
    return h;
}

std::vector<Vec3> SdfGenerator::point_gradients(const LatentCode& z, const PointBatch& points) const {
    Tape t;
    int p_leaf = t.leaf(points.to_tensor());
    auto param_nodes = params_.constants_into(t);
    int out = forward_on_tape(t, param_nodes, p_leaf, z);
    std::vector<int> targets{p_leaf};
    auto adj = t.backward(t.sum(out), std::nullopt, &targets);
    std::vector<Vec3> grads(points.size(), Vec3{0.0, 0.0, 0.0});
    if (adj[p_leaf] >= 0) {
        const Tensor& g = t.val(adj[p_leaf]);
        for (std::size_t i = 0; i < points.size(); ++i)
            grads[i] = {g.data[i * 3], g.data[i * 3 + 1], g.data[i * 3 + 2]};
    }
    return grads;
}

bool project_to_surface(double sdf_at_p, const Vec3& grad_at_p, const Vec3& p, Vec3& out) {
    if (norm(grad_at_p) < kDegenerateGradNorm) return false;
    out = p - grad_at_p * sdf_at_p;
    return true;
}

namespace {

RefinedPointSet refine_from_values(const PointBatch& points, const std::vector<double>& values,
                                   const std::vector<Vec3>& grads, const RefinementConfig& cfg,
                                   Rng& rng) {
    if (cfg.delta <= 0.0 || cfg.sigma < 0.0)
        throw std::invalid_argument("refinement: requires delta > 0 and sigma >= 0");
    RefinedPointSet result;
    result.points = points;
    result.base_count = points.size();
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (std::fabs(values[i]) >= cfg.delta) continue;
        Vec3 moved;
        if (!project_to_surface(values[i], grads[i], points.points[i], moved)) continue;
        for (int c = 0; c < 3; ++c) {
            moved[c] += cfg.sigma * rng.normal();
            moved[c] = std::clamp(moved[c], -1.0, 1.0);
        }
        result.points.points.push_back(moved);
        result.source_rows.push_back(static_cast<int>(i));
    }
    return result;
}

}  // namespace

RefinedPointSet build_refined_point_set(const SdfField& field, const PointBatch& points,
                                        const RefinementConfig& cfg, Rng& rng) {
    std::vector<double> values(points.size());
    std::vector<Vec3> grads(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        values[i] = field.value(points.points[i]);
        grads[i] = field.gradient(points.points[i]);
    }
    return refine_from_values(points, values, grads, cfg, rng);
}

RefinedPointSet build_refined_point_set(const SdfGenerator& gen, const LatentCode& z,
                                        const PointBatch& points, const RefinementConfig& cfg,
                                        Rng& rng) {
    std::vector<double> values = gen.forward_batch(z, points);
    std::vector<Vec3> grads = gen.point_gradients(z, points);
    return refine_from_values(points, values, grads, cfg, rng);
}

std::vector<double> refine_generated_samples(const SdfGenerator& gen, const LatentCode& z,
                                             const RefinedPointSet& refined) {
    return gen.forward_batch(z, refined.points);
}

RefinedTapeResult refine_on_tape(Tape& t, const SdfGenerator& gen,
                                 const std::map<std::string, int>& param_nodes, const LatentCode& z,
                                 const PointBatch& points, const RefinementConfig& cfg, Rng& rng) {
    if (cfg.delta <= 0.0 || cfg.sigma < 0.0)
        throw std::invalid_argument("refinement: requires delta > 0 and sigma >= 0");
    RefinedTapeResult res;
    res.base_count = points.size();

    int p_leaf = t.leaf(points.to_tensor());
    int s_all = gen.forward_on_tape(t, param_nodes, p_leaf, z);

    std::vector<int> targets{p_leaf};
    auto adj = t.backward(t.sum(s_all), std::nullopt, &targets);
    const int grad_node = adj[p_leaf];

    std::vector<int> sel;
    if (grad_node >= 0) {
        const Tensor& sv = t.val(s_all);
        const Tensor& gv = t.val(grad_node);
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (std::fabs(sv.data[i]) >= cfg.delta) continue;
            const Vec3 g{gv.data[i * 3], gv.data[i * 3 + 1], gv.data[i * 3 + 2]};
            if (norm(g) < kDegenerateGradNorm) continue;
            sel.push_back(static_cast<int>(i));
        }
    }
    if (sel.empty()) {
        res.positions = p_leaf;
        res.values = s_all;
        res.added_count = 0;
        return res;
    }

    const int k = static_cast<int>(sel.size());
    int p_sel = t.gather_rows(p_leaf, sel);
    int s_sel = t.gather_rows(s_all, sel);
    int g_sel = t.gather_rows(grad_node, sel);
    int s_cols = t.broadcast_cols(t.reshape(s_sel, {k}), 3);
    int moved = t.sub(p_sel, t.mul(s_cols, g_sel));

    Tensor eps = Tensor::zeros({k, 3});
    for (double& v : eps.data) v = cfg.sigma * rng.normal();
    int jittered = t.add(moved, t.constant(std::move(eps)));
    int p_tilde = t.clamp(jittered, -1.0, 1.0);

    int s_added = gen.forward_on_tape(t, param_nodes, p_tilde, z);
    res.positions = t.concat_rows(p_leaf, p_tilde);
    res.values = t.concat_rows(s_all, s_added);
    res.added_count = sel.size();
    return res;
}

namespace {

// One descent run from a fixed starting latent: RMSprop steps on z with the
// learning rate decayed geometrically to 1% over the run. At an exact
// optimum the MAE gradient is zero (|x|' = 0 at 0), so z stays put.
FitResult fit_latent_run(const SdfGenerator& gen, const Tensor& points, const Tensor& target,
                         LatentCode z, int steps, double lr) {
    const int dim = gen.config().latent_dim;
    FitResult res;
    res.z = std::move(z);
    LatentCode last_finite = res.z;
    std::vector<double> sq_avg(dim, 0.0);
    for (int step = 0; step < steps; ++step) {
        Tape t;
        int z_leaf = t.leaf(Tensor({dim}, std::vector<double>(res.z.begin(), res.z.end())));
        auto param_nodes = gen.params().constants_into(t);
        int h = gen.forward_on_tape(t, param_nodes, t.constant(points), z_leaf);
        int loss = t.mean(t.abs(t.sub(h, t.constant(target))));
        const double loss_val = t.val(loss).data[0];
        if (step == 0) res.initial_loss = loss_val;
        if (!std::isfinite(loss_val)) {
            res.z = last_finite;
            res.aborted_non_finite = true;
            res.steps_run = step;
            return res;
        }
        last_finite = res.z;
        res.final_loss = loss_val;
        res.steps_run = step + 1;

        std::vector<int> tg{z_leaf};
        auto adj = t.backward(loss, std::nullopt, &tg);
        if (adj[z_leaf] < 0) continue;
        const Tensor& g = t.val(adj[z_leaf]);
        const double step_lr = lr * std::pow(0.01, static_cast<double>(step) / steps);
        for (int i = 0; i < dim; ++i) {
            sq_avg[i] = 0.99 * sq_avg[i] + 0.01 * g.data[i] * g.data[i];
            res.z[i] -= step_lr * g.data[i] / (std::sqrt(sq_avg[i]) + 1e-8);
        }
    }
    return res;
}

}  // namespace

FitResult fit_latent(const SdfGenerator& gen, const std::vector<Vec3>& points,
                     const std::vector<double>& targets, int steps, double lr,
                     const LatentCode* init) {
    if (points.empty() || points.size() != targets.size())
        throw DataError("fit_latent: target sample set is empty or inconsistent");
    const int dim = gen.config().latent_dim;
    if (init && static_cast<int>(init->size()) != dim)
        throw DataError("fit_latent: init latent has wrong length");

    PointBatch batch;
    batch.points = points;
    const Tensor pts = batch.to_tensor();
    Tensor target = Tensor::zeros({static_cast<int>(targets.size()), 1});
    std::copy(targets.begin(), targets.end(), target.data.begin());

    if (init) return fit_latent_run(gen, pts, target, *init, steps, lr);

    // The loss surface over z is multi-modal; restart from zero plus a few
    // fixed random draws and keep the best run.
    Rng restart_rng(0x135df00dULL);
    FitResult best;
    bool have = false;
    for (int restart = 0; restart < 4; ++restart) {
        LatentCode z0(dim, 0.0);
        if (restart > 0)
            for (double& v : z0) v = restart_rng.normal();
        FitResult run = fit_latent_run(gen, pts, target, std::move(z0), steps, lr);
        if (restart == 0) best.initial_loss = run.initial_loss;
        if (!have || (!run.aborted_non_finite &&
                      (best.aborted_non_finite || run.final_loss < best.final_loss))) {
            const double initial = best.initial_loss;
            best = run;
            if (restart > 0) best.initial_loss = initial;
            have = true;
        }
    }
    return best;
}

}  // namespace sdfgan
