#pragma once

#include <vector>

#include "sdfgan/sdf_primitives.hpp"
#include "sdfgan/tensor.hpp"

namespace sdfgan {

// Cubic raster of SDF values over [-1,1]^3 at cell centers, row-major with x
// fastest: index = (z*R + y)*R + x.
struct VoxelGrid {
    int resolution = 0;
    std::vector<double> values;

    VoxelGrid() = default;
    explicit VoxelGrid(int r) : resolution(r), values(static_cast<std::size_t>(r) * r * r, 0.0) {}

    static double coord(int i, int r) { return -1.0 + (i + 0.5) * (2.0 / r); }
    Vec3 position(int x, int y, int z) const {
        return {coord(x, resolution), coord(y, resolution), coord(z, resolution)};
    }
    double& at(int x, int y, int z) {
        return values[(static_cast<std::size_t>(z) * resolution + y) * resolution + x];
    }
    double at(int x, int y, int z) const {
        return values[(static_cast<std::size_t>(z) * resolution + y) * resolution + x];
    }

    // Clamp-to-edge trilinear interpolation on the cell-center lattice.
    double trilerp(const Vec3& p) const;

    // [1,R,R,R] channel-first tensor view for the voxel critic.
    Tensor to_tensor() const;

    // Resampled copy: trilinear interpolation evaluated at the target lattice.
    VoxelGrid upsample_trilinear(int target_resolution) const;
};

}  // namespace sdfgan
