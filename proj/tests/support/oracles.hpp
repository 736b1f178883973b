#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "sdfgan/generator.hpp"
#include "sdfgan/metrics.hpp"
#include "sdfgan/parameter_store.hpp"

namespace testsupport {

using sdfgan::operator+;
using sdfgan::operator-;
using sdfgan::operator*;

// Plain-loop re-implementation of the conditional SDF network, kept separate
// from the library's forward path on purpose: it reads the parameter store
// directly and computes everything with scalar loops.
inline double naive_generator_forward(const sdfgan::SdfGenerator& gen, const sdfgan::LatentCode& z,
                                      const sdfgan::Vec3& p) {
    const auto& cfg = gen.config();
    const auto& store = gen.params();
    std::vector<double> input(z.begin(), z.end());
    input.push_back(p[0]);
    input.push_back(p[1]);
    input.push_back(p[2]);

    std::vector<double> h = input;
    for (int l = 1; l <= cfg.layers; ++l) {
        const auto& w = store.get("fc" + std::to_string(l) + ".weight");
        const auto& b = store.get("fc" + std::to_string(l) + ".bias");
        const int in = w.shape[0], out = w.shape[1];
        if (static_cast<int>(h.size()) != in) throw std::runtime_error("oracle: width mismatch");
        std::vector<double> y(out);
        for (int j = 0; j < out; ++j) {
            double acc = b.data[j];
            for (int k = 0; k < in; ++k) acc += h[k] * w.data[static_cast<std::size_t>(k) * out + j];
            y[j] = acc;
        }
        if (l == cfg.layers) return y[0];
        const auto& gain = store.get("ln" + std::to_string(l) + ".gain");
        const auto& lbias = store.get("ln" + std::to_string(l) + ".bias");
        double mu = std::accumulate(y.begin(), y.end(), 0.0) / out;
        double var = 0.0;
        for (double v : y) var += (v - mu) * (v - mu);
        var /= out;
        const double inv = 1.0 / std::sqrt(var + 1e-5);
        for (int j = 0; j < out; ++j) {
            const double v = (y[j] - mu) * inv * gain.data[j] + lbias.data[j];
            y[j] = v > 0.0 ? v : 0.0;
        }
        h = y;
        if (l == cfg.reinjection_layer) h.insert(h.end(), input.begin(), input.end());
    }
    return 0.0;  // unreachable
}

// Exhaustive double-loop chamfer.
inline double brute_chamfer(const sdfgan::PointCloud& a, const sdfgan::PointCloud& b) {
    auto one_way = [](const sdfgan::PointCloud& from, const sdfgan::PointCloud& to) {
        double acc = 0.0;
        for (const auto& p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& q : to) {
                const double d2 = sdfgan::dot(p - q, p - q);
                best = std::min(best, d2);
            }
            acc += best;
        }
        return acc / static_cast<double>(from.size());
    };
    return one_way(a, b) + one_way(b, a);
}

// All-permutations assignment; factorial cost, for tiny sets only.
inline double brute_emd(const sdfgan::PointCloud& a, const sdfgan::PointCloud& b) {
    const int n = static_cast<int>(a.size());
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) acc += sdfgan::norm(a[i] - b[perm[i]]);
        best = std::min(best, acc);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best / n;
}

// Exhaustive MMD / COV per definitions.
inline sdfgan::MmdCov brute_mmd_cov(const std::vector<sdfgan::PointCloud>& gen,
                                    const std::vector<sdfgan::PointCloud>& ref,
                                    const sdfgan::CloudDistance& dist) {
    sdfgan::MmdCov out;
    for (const auto& r : ref) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& g : gen) best = std::min(best, dist(g, r));
        out.mmd += best;
    }
    out.mmd /= static_cast<double>(ref.size());
    std::vector<char> covered(ref.size(), 0);
    for (const auto& g : gen) {
        int arg = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < ref.size(); ++j) {
            const double d = dist(g, ref[j]);
            if (d < best) {
                best = d;
                arg = static_cast<int>(j);
            }
        }
        covered[arg] = 1;
    }
    int n = 0;
    for (char c : covered) n += c;
    out.cov_percent = 100.0 * n / static_cast<double>(ref.size());
    return out;
}

struct SphereFit {
    sdfgan::Vec3 center{0.0, 0.0, 0.0};
    double radius = 0.0;
    double rms = 0.0;
};

// Algebraic least-squares sphere: |v|^2 = 2 c.v + (r^2 - |c|^2), solved via
// normal equations, then RMS of radial deviations.
inline SphereFit fit_sphere(const std::vector<sdfgan::Vec3>& pts) {
    double A[4][5] = {};
    for (const auto& v : pts) {
        const double row[4] = {2.0 * v[0], 2.0 * v[1], 2.0 * v[2], 1.0};
        const double rhs = sdfgan::dot(v, v);
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) A[i][j] += row[i] * row[j];
            A[i][4] += row[i] * rhs;
        }
    }
    // Gaussian elimination with partial pivoting on the 4x4 system.
    for (int col = 0; col < 4; ++col) {
        int piv = col;
        for (int r = col + 1; r < 4; ++r)
            if (std::fabs(A[r][col]) > std::fabs(A[piv][col])) piv = r;
        std::swap(A[col], A[piv]);
        for (int r = 0; r < 4; ++r) {
            if (r == col || A[col][col] == 0.0) continue;
            const double f = A[r][col] / A[col][col];
            for (int j = col; j < 5; ++j) A[r][j] -= f * A[col][j];
        }
    }
    SphereFit fit;
    double x[4];
    for (int i = 0; i < 4; ++i) x[i] = A[i][i] != 0.0 ? A[i][4] / A[i][i] : 0.0;
    fit.center = {x[0], x[1], x[2]};
    fit.radius = std::sqrt(std::max(0.0, x[3] + sdfgan::dot(fit.center, fit.center)));
    double acc = 0.0;
    for (const auto& v : pts) {
        const double d = sdfgan::norm(v - fit.center) - fit.radius;
        acc += d * d;
    }
    fit.rms = std::sqrt(acc / static_cast<double>(pts.size()));
    return fit;
}

}  // namespace testsupport
