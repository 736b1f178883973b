#pragma once

#include <array>
#include <cmath>
#include <functional>

namespace sdfgan {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(const Vec3& a) {
    const double n = norm(a);
    return n > 0.0 ? a * (1.0 / n) : Vec3{0.0, 0.0, 0.0};
}

// A differentiable scalar field: value and analytic gradient at a point.
struct SdfField {
    std::function<double(const Vec3&)> value;
    std::function<Vec3(const Vec3&)> gradient;
};

inline SdfField sphere_field(Vec3 center, double radius) {
    return {
        [=](const Vec3& p) { return norm(p - center) - radius; },
        [=](const Vec3& p) { return normalized(p - center); },
    };
}

inline SdfField plane_field(Vec3 unit_normal, double offset) {
    // s(p) = n.p - offset
    return {
        [=](const Vec3& p) { return dot(unit_normal, p) - offset; },
        [=](const Vec3&) { return unit_normal; },
    };
}

// Axis-aligned box centered at `center` with half extents `half`.
inline SdfField box_field(Vec3 center, Vec3 half) {
    auto value = [=](const Vec3& p) {
        Vec3 q = {std::fabs(p[0] - center[0]) - half[0], std::fabs(p[1] - center[1]) - half[1],
                  std::fabs(p[2] - center[2]) - half[2]};
        Vec3 qp = {std::max(q[0], 0.0), std::max(q[1], 0.0), std::max(q[2], 0.0)};
        return norm(qp) + std::min(std::max(q[0], std::max(q[1], q[2])), 0.0);
    };
    auto gradient = [=](const Vec3& p) -> Vec3 {
        Vec3 d = p - center;
        Vec3 q = {std::fabs(d[0]) - half[0], std::fabs(d[1]) - half[1], std::fabs(d[2]) - half[2]};
        Vec3 qp = {std::max(q[0], 0.0), std::max(q[1], 0.0), std::max(q[2], 0.0)};
        const double out = norm(qp);
        Vec3 g{0.0, 0.0, 0.0};
        if (out > 0.0) {
            for (int i = 0; i < 3; ++i)
                g[i] = qp[i] > 0.0 ? (d[i] < 0.0 ? -qp[i] : qp[i]) / out : 0.0;
        } else {
            // Inside: gradient points through the nearest face.
            int axis = 0;
            for (int i = 1; i < 3; ++i)
                if (q[i] > q[axis]) axis = i;
            g[axis] = d[axis] < 0.0 ? -1.0 : 1.0;
        }
        return g;
    };
    return {value, gradient};
}

}  // namespace sdfgan
