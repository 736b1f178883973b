#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sdfgan/mesh.hpp"
#include "sdfgan/rng.hpp"
#include "sdfgan/sdf_primitives.hpp"

namespace sdfgan {

using PointCloud = std::vector<Vec3>;

// Area-uniform surface samples.
PointCloud sample_surface(const TriangleMesh& mesh, int n, Rng& rng);

// CD = mean_a min_b |a-b|^2 + mean_b min_a |b-a|^2 (squared distances).
double chamfer(const PointCloud& a, const PointCloud& b);

enum class EmdMode { Exact, Approximate };

// (1/|A|) min over bijections of sum |a - pi(a)|, |A| == |B| required.
// Exact mode solves the assignment problem (shortest augmenting paths);
// approximate mode runs an auction with epsilon scaling whose result is
// within n*eps_final of optimal.
double emd(const PointCloud& a, const PointCloud& b, EmdMode mode = EmdMode::Exact);

// Jensen-Shannon divergence between pooled occupancy histograms over
// [-1,1]^3 at grid resolution R (natural log; 0*ln0 = 0).
double jsd(const std::vector<PointCloud>& generated, const std::vector<PointCloud>& reference,
           int grid_resolution = 28);

using CloudDistance = std::function<double(const PointCloud&, const PointCloud&)>;

struct MmdCov {
    double mmd = 0.0;
    double cov_percent = 0.0;
};

// MMD: mean over reference clouds of the distance to the nearest generated
// cloud. COV: percentage of reference clouds that are the nearest neighbor
// of at least one generated cloud.
MmdCov mmd_cov(const std::vector<PointCloud>& generated, const std::vector<PointCloud>& reference,
               const CloudDistance& distance);

struct MetricReport {
    double jsd = 0.0;
    double mmd_cd = 0.0;
    double mmd_emd = 0.0;
    double cov_cd = 0.0;   // percent
    double cov_emd = 0.0;  // percent
};

MetricReport evaluate_clouds(const std::vector<PointCloud>& generated,
                             const std::vector<PointCloud>& reference, int jsd_grid = 28,
                             EmdMode emd_mode = EmdMode::Exact);

void write_report_csv(const MetricReport& report, const std::string& path);
std::string format_report_table(const MetricReport& report);

}  // namespace sdfgan
