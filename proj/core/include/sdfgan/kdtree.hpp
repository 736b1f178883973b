#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "sdfgan/sdf_primitives.hpp"

namespace sdfgan {

// Static 3-d tree over points, median split, nearest-neighbor query.
class KdTree3 {
public:
    KdTree3() = default;
    explicit KdTree3(std::vector<Vec3> points) : points_(std::move(points)) {
        order_.resize(points_.size());
        std::iota(order_.begin(), order_.end(), 0);
        if (!order_.empty()) build(0, static_cast<int>(order_.size()), 0);
    }

    bool empty() const { return points_.empty(); }
    std::size_t size() const { return points_.size(); }

    // Index of the nearest point and its distance.
    int nearest(const Vec3& q, double* out_dist = nullptr) const {
        if (points_.empty()) return -1;
        int best = -1;
        double best_d2 = std::numeric_limits<double>::infinity();
        search(q, 0, static_cast<int>(order_.size()), 0, best, best_d2);
        if (out_dist) *out_dist = std::sqrt(best_d2);
        return order_[best];
    }

    const Vec3& point(int idx) const { return points_[idx]; }

private:
    std::vector<Vec3> points_;
    std::vector<int> order_;  // implicit balanced tree in subarray layout

    static double sq(double v) { return v * v; }

    void build(int lo, int hi, int axis) {
        if (hi - lo <= 1) return;
        const int mid = (lo + hi) / 2;
        std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                         [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
        build(lo, mid, (axis + 1) % 3);
        build(mid + 1, hi, (axis + 1) % 3);
    }

    void search(const Vec3& q, int lo, int hi, int axis, int& best, double& best_d2) const {
        if (hi <= lo) return;
        const int mid = (lo + hi) / 2;
        const Vec3& p = points_[order_[mid]];
        const double d2 = sq(p[0] - q[0]) + sq(p[1] - q[1]) + sq(p[2] - q[2]);
        // Ties keep the lower subarray position for determinism.
        if (d2 < best_d2 || (d2 == best_d2 && (best < 0 || mid < best))) {
            best_d2 = d2;
            best = mid;
        }
        const double delta = q[axis] - p[axis];
        const int next = (axis + 1) % 3;
        if (delta < 0.0) {
            search(q, lo, mid, next, best, best_d2);
            if (sq(delta) < best_d2) search(q, mid + 1, hi, next, best, best_d2);
        } else {
            search(q, mid + 1, hi, next, best, best_d2);
            if (sq(delta) < best_d2) search(q, lo, mid, next, best, best_d2);
        }
    }
};

}  // namespace sdfgan
