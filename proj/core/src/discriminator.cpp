#include "sdfgan/discriminator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sdfgan/errors.hpp"

namespace sdfgan {

namespace {
constexpr double kLeakySlope = 0.2;

int require_node(const std::map<std::string, int>& nodes, const std::string& name) {
    auto it = nodes.find(name);
    if (it == nodes.end()) throw DataError("critic: missing parameter node '" + name + "'");
    return it->second;
}
}  // namespace

GrowthStage GrowthSchedule::at(int step) const {
    GrowthStage s;
    if (total_steps <= 0 || num_stages <= 1) {
        s.index = std::min(0, max_stage);
        s.alpha = 1.0;
        return s;
    }
    const double stage_len = static_cast<double>(total_steps) / num_stages;
    int raw = std::min(static_cast<int>(step / stage_len), num_stages - 1);
    if (step < 0) raw = 0;
    s.index = std::min(raw, max_stage);
    if (s.index == 0 || raw > s.index) {
        s.alpha = 1.0;
        return s;
    }
    const double pos = step - s.index * stage_len;
    const double fade_len = fade_fraction * stage_len;
    s.alpha = fade_len > 0.0 ? std::min(1.0, pos / fade_len) : 1.0;
    return s;
}

int VoxelCritic::adapter_channels(int resolution) {
    switch (resolution) {
        case 8: return 32;
        case 16: return 16;
        case 32: return 8;
        case 64: return 4;
    }
    throw DataError("voxel critic: unsupported resolution " + std::to_string(resolution));
}

void VoxelCritic::init_params(Rng& rng) {
    params_ = ParameterStore();
    auto conv = [&](const std::string& name, int co, int ci, int k) {
        params_.create_uniform(name + ".weight", {co, ci, k, k, k}, ci * k * k * k, rng);
        params_.create(name + ".bias", Tensor::zeros({co}));
    };
    // Per-resolution adapters from the raw 1-channel grid.
    for (int r : {8, 16, 32, 64}) conv("from" + std::to_string(r), adapter_channels(r), 1, 1);
    // Downsampling blocks at resolutions above the 8^3 core.
    conv("down16", adapter_channels(8), adapter_channels(16), 4);
    conv("down32", adapter_channels(16), adapter_channels(32), 4);
    conv("down64", adapter_channels(32), adapter_channels(64), 4);
    // Core chain 8 -> 4 -> 2 -> 1.
    conv("core8", 64, adapter_channels(8), 4);
    conv("core4", 64, 64, 4);
    conv("core2", 128, 64, 4);
    params_.create_uniform("dense1.weight", {128, 128}, 128, rng);
    params_.create("dense1.bias", Tensor::zeros({128}));
    params_.create_uniform("dense2.weight", {128, 1}, 128, rng);
    params_.create("dense2.bias", Tensor::zeros({1}));
}

int VoxelCritic::score_on_tape(Tape& t, const std::map<std::string, int>& param_nodes, int grid_node,
                               const GrowthStage& stage) const {
    if (stage.index < 0 || stage.index > 3)
        throw std::invalid_argument("voxel critic: stage index out of range");
    const int R = stage.voxel_resolution();
    const Tensor& grid = t.val(grid_node);
    if (grid.shape != std::vector<int>{1, R, R, R})
        throw std::invalid_argument("voxel critic: stage " + std::to_string(stage.index) +
                                    " expects a [1," + std::to_string(R) + "^3] grid, got " +
                                    grid.shape_str());

    auto conv_block = [&](int x, const std::string& name, int stride, int pad) {
        int y = t.conv3d(x, require_node(param_nodes, name + ".weight"), stride, pad);
        y = t.add_channel_bias(y, require_node(param_nodes, name + ".bias"));
        return t.leaky_relu(y, kLeakySlope);
    };

    int x;
    int res = R;
    if (stage.index == 0 || stage.alpha >= 1.0) {
        x = conv_block(grid_node, "from" + std::to_string(R), 1, 0);
    } else {
        // Fade-in: newest block blended against an average-pooled bypass.
        int hi = conv_block(grid_node, "from" + std::to_string(R), 1, 0);
        hi = conv_block(hi, "down" + std::to_string(R), 2, 1);
        int lo = conv_block(t.avg_pool2x(grid_node), "from" + std::to_string(R / 2), 1, 0);
        x = t.add(t.scale(hi, stage.alpha), t.scale(lo, 1.0 - stage.alpha));
        res /= 2;
    }
    while (res > 8) {
        x = conv_block(x, "down" + std::to_string(res), 2, 1);
        res /= 2;
    }
    x = conv_block(x, "core8", 2, 1);
    x = conv_block(x, "core4", 2, 1);
    x = conv_block(x, "core2", 2, 1);

    int flat = t.reshape(x, {1, 128});
    int d1 = t.leaky_relu(t.linear(flat, require_node(param_nodes, "dense1.weight"),
                                   require_node(param_nodes, "dense1.bias")),
                          kLeakySlope);
    return t.linear(d1, require_node(param_nodes, "dense2.weight"),
                    require_node(param_nodes, "dense2.bias"));
}

void PointCritic::init_params(Rng& rng) {
    params_ = ParameterStore();
    const int widths[] = {4, 64, 128, 256, 512};
    for (int l = 1; l <= 4; ++l) {
        const std::string base = "h" + std::to_string(l);
        params_.create_uniform(base + ".weight", {widths[l - 1], widths[l]}, widths[l - 1], rng);
        params_.create(base + ".bias", Tensor::zeros({widths[l]}));
    }
    const int dense[] = {512, 256, 128, 1};
    for (int l = 1; l <= 3; ++l) {
        const std::string base = "d" + std::to_string(l);
        params_.create_uniform(base + ".weight", {dense[l - 1], dense[l]}, dense[l - 1], rng);
        params_.create(base + ".bias", Tensor::zeros({dense[l]}));
    }
}

int PointCritic::score_on_tape(Tape& t, const std::map<std::string, int>& param_nodes,
                               int input_node) const {
    const Tensor& in = t.val(input_node);
    if (in.rank() != 2 || in.cols() != 4)
        throw std::invalid_argument("point critic: input must be [N,4], got " + in.shape_str());
    if (in.rows() < 1) throw std::invalid_argument("point critic: empty point set");

    int h = input_node;
    for (int l = 1; l <= 4; ++l) {
        const std::string base = "h" + std::to_string(l);
        h = t.leaky_relu(t.linear(h, require_node(param_nodes, base + ".weight"),
                                  require_node(param_nodes, base + ".bias")),
                         kLeakySlope);
    }
    int pooled = t.reshape(t.max_over_rows(h), {1, 512});
    int d = pooled;
    for (int l = 1; l <= 2; ++l) {
        const std::string base = "d" + std::to_string(l);
        d = t.leaky_relu(t.linear(d, require_node(param_nodes, base + ".weight"),
                                  require_node(param_nodes, base + ".bias")),
                         kLeakySlope);
    }
    return t.linear(d, require_node(param_nodes, "d3.weight"), require_node(param_nodes, "d3.bias"));
}

}  // namespace sdfgan
