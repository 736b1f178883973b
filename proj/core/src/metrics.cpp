#include "sdfgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sdfgan/errors.hpp"

namespace sdfgan {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double sq_dist(const Vec3& a, const Vec3& b) {
    const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}

// Dense assignment by shortest augmenting paths with potentials; exact for
// real-valued costs. Returns per-column assigned row.
std::vector<int> solve_assignment(const std::vector<double>& cost, int n) {
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), kInf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = kInf;
            int j1 = -1;
            const double* row = cost.data() + static_cast<std::size_t>(i0 - 1) * n;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = row[j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> row_of_col(n);
    for (int j = 1; j <= n; ++j) row_of_col[j - 1] = p[j] - 1;
    return row_of_col;
}

// Forward auction with epsilon scaling; suboptimality bounded by n*eps.
std::vector<int> auction_assignment(const std::vector<double>& cost, int n) {
    double max_cost = 0.0;
    for (double c : cost) max_cost = std::max(max_cost, c);
    if (max_cost <= 0.0) max_cost = 1.0;

    std::vector<int> owner(n, -1), assigned(n, -1);
    std::vector<double> price(n, 0.0);
    const double eps_final = max_cost / (4.0 * n);
    double eps = std::max(eps_final, max_cost / 8.0);
    while (true) {
        std::fill(owner.begin(), owner.end(), -1);
        std::fill(assigned.begin(), assigned.end(), -1);
        std::vector<int> queue(n);
        for (int i = 0; i < n; ++i) queue[i] = i;
        while (!queue.empty()) {
            const int i = queue.back();
            queue.pop_back();
            const double* row = cost.data() + static_cast<std::size_t>(i) * n;
            double best = kInf, second = kInf;
            int bj = 0;
            for (int j = 0; j < n; ++j) {
                const double val = row[j] + price[j];
                if (val < best) {
                    second = best;
                    best = val;
                    bj = j;
                } else if (val < second) {
                    second = val;
                }
            }
            price[bj] += (second == kInf ? eps : second - best) + eps;
            if (owner[bj] >= 0) {
                assigned[owner[bj]] = -1;
                queue.push_back(owner[bj]);
            }
            owner[bj] = i;
            assigned[i] = bj;
        }
        if (eps <= eps_final) break;
        eps = std::max(eps_final, eps / 4.0);
    }
    return assigned;  // per-row assigned column
}

}  // namespace

PointCloud sample_surface(const TriangleMesh& mesh, int n, Rng& rng) {
    if (mesh.empty()) throw DataError("sample_surface: empty mesh");
    std::vector<double> cumulative(mesh.triangles.size());
    double total = 0.0;
    for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
        const auto& t = mesh.triangles[i];
        total += 0.5 * norm(cross(mesh.vertices[t[1]] - mesh.vertices[t[0]],
                                  mesh.vertices[t[2]] - mesh.vertices[t[0]]));
        cumulative[i] = total;
    }
    if (total <= 0.0) throw DataError("sample_surface: mesh has zero area");
    PointCloud cloud;
    cloud.reserve(n);
    for (int i = 0; i < n; ++i) {
        const double pick = rng.uniform() * total;
        const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), pick);
        const auto& t = mesh.triangles[std::min<std::size_t>(it - cumulative.begin(),
                                                             mesh.triangles.size() - 1)];
        const double su = std::sqrt(rng.uniform());
        const double v = rng.uniform();
        const double wa = 1.0 - su, wb = su * (1.0 - v), wc = su * v;
        cloud.push_back(mesh.vertices[t[0]] * wa + mesh.vertices[t[1]] * wb + mesh.vertices[t[2]] * wc);
    }
    return cloud;
}

double chamfer(const PointCloud& a, const PointCloud& b) {
    if (a.empty() || b.empty()) throw DataError("chamfer: empty point cloud");
    double sum_a = 0.0, sum_b = 0.0;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) reduction(+ : sum_a) if (a.size() * b.size() > 1u << 18)
#endif
    for (std::size_t i = 0; i < a.size(); ++i) {
        double best = kInf;
        for (const Vec3& q : b) best = std::min(best, sq_dist(a[i], q));
        sum_a += best;
    }
#ifdef _OPENMP
#pragma omp parallel for schedule(static) reduction(+ : sum_b) if (a.size() * b.size() > 1u << 18)
#endif
    for (std::size_t i = 0; i < b.size(); ++i) {
        double best = kInf;
        for (const Vec3& q : a) best = std::min(best, sq_dist(b[i], q));
        sum_b += best;
    }
    return sum_a / static_cast<double>(a.size()) + sum_b / static_cast<double>(b.size());
}

double emd(const PointCloud& a, const PointCloud& b, EmdMode mode) {
    if (a.empty() || b.empty()) throw DataError("emd: empty point cloud");
    if (a.size() != b.size())
        throw DataError("emd: size mismatch (" + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()) + ")");
    const int n = static_cast<int>(a.size());
    std::vector<double> cost(static_cast<std::size_t>(n) * n);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (n > 256)
#endif
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            cost[static_cast<std::size_t>(i) * n + j] = std::sqrt(sq_dist(a[i], b[j]));

    double total = 0.0;
    if (mode == EmdMode::Exact) {
        const std::vector<int> row_of_col = solve_assignment(cost, n);
        for (int j = 0; j < n; ++j) total += cost[static_cast<std::size_t>(row_of_col[j]) * n + j];
    } else {
        const std::vector<int> col_of_row = auction_assignment(cost, n);
        for (int i = 0; i < n; ++i) total += cost[static_cast<std::size_t>(i) * n + col_of_row[i]];
    }
    return total / n;
}

double jsd(const std::vector<PointCloud>& generated, const std::vector<PointCloud>& reference,
           int grid_resolution) {
    if (generated.empty() || reference.empty()) throw DataError("jsd: empty cloud set");
    const int r = grid_resolution;
    const std::size_t bins = static_cast<std::size_t>(r) * r * r;
    auto histogram = [&](const std::vector<PointCloud>& clouds) {
        std::vector<double> h(bins, 0.0);
        double count = 0.0;
        for (const auto& cloud : clouds)
            for (const Vec3& p : cloud) {
                int ix[3];
                for (int c = 0; c < 3; ++c) {
                    int i = static_cast<int>((p[c] + 1.0) * 0.5 * r);
                    ix[c] = std::clamp(i, 0, r - 1);
                }
                h[(static_cast<std::size_t>(ix[2]) * r + ix[1]) * r + ix[0]] += 1.0;
                count += 1.0;
            }
        for (double& v : h) v /= count;
        return h;
    };
    const std::vector<double> p = histogram(generated);
    const std::vector<double> q = histogram(reference);
    double acc = 0.0;
    for (std::size_t i = 0; i < bins; ++i) {
        const double m = 0.5 * (p[i] + q[i]);
        if (p[i] > 0.0) acc += 0.5 * p[i] * std::log(p[i] / m);
        if (q[i] > 0.0) acc += 0.5 * q[i] * std::log(q[i] / m);
    }
    return acc;
}

MmdCov mmd_cov(const std::vector<PointCloud>& generated, const std::vector<PointCloud>& reference,
               const CloudDistance& distance) {
    if (generated.empty() || reference.empty()) throw DataError("mmd_cov: empty cloud set");
    const int ng = static_cast<int>(generated.size());
    const int nr = static_cast<int>(reference.size());
    std::vector<double> d(static_cast<std::size_t>(ng) * nr);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) collapse(2)
#endif
    for (int i = 0; i < ng; ++i)
        for (int j = 0; j < nr; ++j)
            d[static_cast<std::size_t>(i) * nr + j] = distance(generated[i], reference[j]);

    MmdCov out;
    for (int j = 0; j < nr; ++j) {
        double best = kInf;
        for (int i = 0; i < ng; ++i) best = std::min(best, d[static_cast<std::size_t>(i) * nr + j]);
        out.mmd += best;
    }
    out.mmd /= nr;

    std::vector<char> covered(nr, 0);
    for (int i = 0; i < ng; ++i) {
        int arg = 0;
        double best = kInf;
        for (int j = 0; j < nr; ++j) {
            const double v = d[static_cast<std::size_t>(i) * nr + j];
            if (v < best) {
                best = v;
                arg = j;
            }
        }
        covered[arg] = 1;
    }
    int n_covered = 0;
    for (char c : covered) n_covered += c;
    out.cov_percent = 100.0 * n_covered / nr;
    return out;
}

MetricReport evaluate_clouds(const std::vector<PointCloud>& generated,
                             const std::vector<PointCloud>& reference, int jsd_grid,
                             EmdMode emd_mode) {
    MetricReport report;
    report.jsd = jsd(generated, reference, jsd_grid);
    const MmdCov cd = mmd_cov(generated, reference,
                              [](const PointCloud& a, const PointCloud& b) { return chamfer(a, b); });
    const MmdCov em = mmd_cov(generated, reference, [emd_mode](const PointCloud& a, const PointCloud& b) {
        return emd(a, b, emd_mode);
    });
    report.mmd_cd = cd.mmd;
    report.cov_cd = cd.cov_percent;
    report.mmd_emd = em.mmd;
    report.cov_emd = em.cov_percent;
    return report;
}

void write_report_csv(const MetricReport& r, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    os.precision(10);
    os << "jsd,mmd_cd,mmd_emd,cov_cd,cov_emd\n";
    os << r.jsd << "," << r.mmd_cd << "," << r.mmd_emd << "," << r.cov_cd << "," << r.cov_emd << "\n";
    if (!os) throw DataError("write failed for '" + path + "'");
}

std::string format_report_table(const MetricReport& r) {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof(line), "%-10s %-10s %-10s %-8s %-8s\n", "JSD", "MMD-CD", "MMD-EMD",
                  "COV-CD", "COV-EMD");
    os << line;
    std::snprintf(line, sizeof(line), "%-10.4f %-10.4f %-10.4f %-8.1f %-8.1f\n", r.jsd, r.mmd_cd,
                  r.mmd_emd, r.cov_cd, r.cov_emd);
    os << line;
    return os.str();
}

}  // namespace sdfgan
