#pragma once

#include <map>
#include <string>
#include <vector>

#include "sdfgan/parameter_store.hpp"
#include "sdfgan/rng.hpp"
#include "sdfgan/sdf_primitives.hpp"
#include "sdfgan/tape.hpp"

namespace sdfgan {

// Shape encoding drawn from a standard normal.
using LatentCode = std::vector<double>;

LatentCode sample_latent(Rng& rng, int dim = 128);

struct GeneratorConfig {
    int latent_dim = 128;
    int hidden_dim = 256;
    int layers = 8;
    int reinjection_layer = 4;  // [z;p] is concatenated after this hidden layer

    void validate() const;
    int input_dim() const { return latent_dim + 3; }
};

// N x 3 object-space coordinates; training batches stay inside [-1,1]^3.
struct PointBatch {
    std::vector<Vec3> points;

    std::size_t size() const { return points.size(); }
    Tensor to_tensor() const;
};

struct RefinementConfig {
    double delta = 0.1;   // surface-proximity threshold on |g|
    double sigma = 0.01;  // stddev of the Gaussian jitter
};

// Conditional SDF network: fully connected layers with layer normalization
// and ReLU, the input reinjected by concatenation midway, and a linear scalar
// head. The output is not clamped.
class SdfGenerator {
public:
    SdfGenerator() = default;
    explicit SdfGenerator(GeneratorConfig cfg) : cfg_(cfg) { cfg_.validate(); }

    void init_params(Rng& rng);
    const GeneratorConfig& config() const { return cfg_; }
    ParameterStore& params() { return params_; }
    const ParameterStore& params() const { return params_; }
    void set_params(ParameterStore store) { params_ = std::move(store); }

    // Plain forward without a tape. Row i of the result is the signed
    // distance at points[i]; each row is computed independently, so results
    // are bit-identical across batch sizes.
    std::vector<double> forward_batch(const LatentCode& z, const PointBatch& points) const;
    double forward(const LatentCode& z, const Vec3& p) const;

    // Tape forward. `points_node` is an [N,3] node (leaf, constant, or a
    // computed node such as refined positions); returns an [N,1] node. The
    // z-node overload lets callers differentiate with respect to the latent.
    int forward_on_tape(Tape& t, const std::map<std::string, int>& param_nodes, int points_node,
                        const LatentCode& z) const;
    int forward_on_tape(Tape& t, const std::map<std::string, int>& param_nodes, int points_node,
                        int z_node) const;

    // dg/dp for every point, via one reverse sweep (rows are independent).
    std::vector<Vec3> point_gradients(const LatentCode& z, const PointBatch& points) const;

    std::vector<std::string> param_names() const;

private:
    GeneratorConfig cfg_;
    ParameterStore params_;

    int layer_in_dim(int layer) const;
};

// Eq.-style projection of a point onto the predicted surface:
// p - s * grad. Returns false (degenerate) when |grad| < 1e-12; such points
// are skipped by refinement.
bool project_to_surface(double sdf_at_p, const Vec3& grad_at_p, const Vec3& p, Vec3& out);

struct RefinedPointSet {
    PointBatch points;             // P followed by the added points
    std::size_t base_count = 0;    // |P|
    std::vector<int> source_rows;  // row in P that produced each added point
};

// P extended with projected-and-jittered points for every p with |g| < delta
// and a non-degenerate gradient. Added points are clamped to [-1,1]^3.
// The field is any differentiable SDF source; neural and analytic sources
// share this code path.
RefinedPointSet build_refined_point_set(const SdfField& field, const PointBatch& points,
                                        const RefinementConfig& cfg, Rng& rng);
RefinedPointSet build_refined_point_set(const SdfGenerator& gen, const LatentCode& z,
                                        const PointBatch& points, const RefinementConfig& cfg,
                                        Rng& rng);

// Generator re-evaluated over the refined set without a tape (values only).
std::vector<double> refine_generated_samples(const SdfGenerator& gen, const LatentCode& z,
                                             const RefinedPointSet& refined);

// Tape version used in training: builds P~ from the recorded forward pass so
// the projection itself stays differentiable with respect to the parameters.
// Outputs the [Ntilde,3] positions node and the [Ntilde,1] SDF node.
struct RefinedTapeResult {
    int positions = -1;
    int values = -1;
    std::size_t base_count = 0;
    std::size_t added_count = 0;
};
RefinedTapeResult refine_on_tape(Tape& t, const SdfGenerator& gen,
                                 const std::map<std::string, int>& param_nodes, const LatentCode& z,
                                 const PointBatch& points, const RefinementConfig& cfg, Rng& rng);

struct FitResult {
    LatentCode z;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    int steps_run = 0;
    bool aborted_non_finite = false;
};

// Gradient descent on z only (parameters fixed) minimizing mean absolute
// error against (point, sdf) samples. Aborts with the last finite z if the
// loss stops being finite.
FitResult fit_latent(const SdfGenerator& gen, const std::vector<Vec3>& points,
                     const std::vector<double>& targets, int steps, double lr,
                     const LatentCode* init = nullptr);

}  // namespace sdfgan
