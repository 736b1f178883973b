#pragma once

#include <map>
#include <string>
#include <vector>

#include "sdfgan/parameter_store.hpp"
#include "sdfgan/rng.hpp"
#include "sdfgan/tape.hpp"

namespace sdfgan {

// Progressive-growing position. Voxel critics read the resolution, the point
// critic reads the per-shape sample count; alpha blends the newest block in.
struct GrowthStage {
    int index = 0;       // 0..num_stages-1
    double alpha = 1.0;  // fade-in weight of the newest block

    int voxel_resolution() const { return 8 << index; }
};

struct GrowthSchedule {
    int total_steps = 0;       // steps covered by the growth plan; 0 disables growth
    int num_stages = 4;
    double fade_fraction = 0.5;  // leading part of each stage spent fading in
    int max_stage = 3;           // clamp (set 0 to train at stage 0 only)
    int base_points = 512;       // point-critic samples at stage 0, doubling per stage

    // Stage for a zero-based step counter. Alpha is 0 at a stage boundary,
    // ramps linearly over the fade window, then saturates at 1; stage 0 has
    // nothing to blend from and is always alpha = 1.
    GrowthStage at(int step) const;
    int point_count(const GrowthStage& s) const { return base_points << s.index; }
};

// Scored critics. Parameters for all stages exist from initialization so a
// checkpoint's layout does not depend on the current stage; stages only
// select which blocks participate. Neither critic uses batch or layer
// normalization, and no weight clipping exists anywhere: Lipschitz pressure
// comes from the gradient penalty alone.

// Strided 3D convolutions (kernel 4, stride 2) down to 1^3, then two dense
// layers (128, 1). Each resolution has a 1x1x1 adapter from the raw SDF grid;
// during fade-in the new block is blended with an average-pooled bypass.
class VoxelCritic {
public:
    void init_params(Rng& rng);
    ParameterStore& params() { return params_; }
    const ParameterStore& params() const { return params_; }
    void set_params(ParameterStore store) { params_ = std::move(store); }

    // grid_node: [1,R,R,R] with R matching the stage. Returns a [1,1] node.
    int score_on_tape(Tape& t, const std::map<std::string, int>& param_nodes, int grid_node,
                      const GrowthStage& stage) const;

    static int adapter_channels(int resolution);

private:
    ParameterStore params_;
};

// Shared per-point MLP (64,128,256,512) on raw (x,y,z,s) tuples, channel-wise
// max over points, then dense layers (256,128,1).
class PointCritic {
public:
    void init_params(Rng& rng);
    ParameterStore& params() { return params_; }
    const ParameterStore& params() const { return params_; }
    void set_params(ParameterStore store) { params_ = std::move(store); }

    // input_node: [N,4] rows of (x,y,z,s), N >= 1. Returns a [1,1] node.
    int score_on_tape(Tape& t, const std::map<std::string, int>& param_nodes, int input_node) const;

private:
    ParameterStore params_;
};

}  // namespace sdfgan
