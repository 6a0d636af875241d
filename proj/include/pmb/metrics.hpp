#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "pmb/common.hpp"
#include "pmb/detection.hpp"
#include "pmb/linalg.hpp"

namespace pmb {

struct OspaParams {
    double order = 2.0;  // p
    double cutoff = 10.0; // c, in state-vector units
};

struct AssignmentResult {
    std::vector<int> column_of_row; // -1 when a row is unassigned (rows > cols)
    double cost = 0.0;
};

/// Minimum-cost one-to-one assignment of the smaller side of a cost matrix
/// (Jonker-Volgenant style shortest augmenting paths, O(n^2 m)).
inline AssignmentResult optimal_assignment(const Eigen::MatrixXd& cost) {
    const int rows = static_cast<int>(cost.rows());
    const int cols = static_cast<int>(cost.cols());
    require(cost.allFinite(), "optimal_assignment: costs must be finite");
    if (rows > cols) {
        AssignmentResult t = optimal_assignment(cost.transpose());
        AssignmentResult out;
        out.cost = t.cost;
        out.column_of_row.assign(rows, -1);
        for (int j = 0; j < cols; ++j)
            if (t.column_of_row[j] >= 0) out.column_of_row[t.column_of_row[j]] = j;
        return out;
    }

    const int n = rows, m = cols;
    std::vector<double> potential_row(n + 1, 0.0), potential_col(m + 1, 0.0);
    std::vector<int> matched_row(m + 1, 0); // row matched to column j (1-based; 0 = free)
    std::vector<int> path(m + 1, 0);

    for (int i = 1; i <= n; ++i) {
        matched_row[0] = i;
        int j0 = 0;
        std::vector<double> min_slack(m + 1, kInf);
        std::vector<bool> visited(m + 1, false);
        do {
            visited[j0] = true;
            const int i0 = matched_row[j0];
            double delta = kInf;
            int j1 = 0;
            for (int j = 1; j <= m; ++j) {
                if (visited[j]) continue;
                const double reduced =
                    cost(i0 - 1, j - 1) - potential_row[i0] - potential_col[j];
                if (reduced < min_slack[j]) {
                    min_slack[j] = reduced;
                    path[j] = j0;
                }
                if (min_slack[j] < delta) {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (visited[j]) {
                    potential_row[matched_row[j]] += delta;
                    potential_col[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
        } while (matched_row[j0] != 0);
        do {
            const int j1 = path[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    AssignmentResult out;
    out.column_of_row.assign(n, -1);
    for (int j = 1; j <= m; ++j) {
        if (matched_row[j] == 0) continue;
        out.column_of_row[matched_row[j] - 1] = j - 1;
        out.cost += cost(matched_row[j] - 1, j - 1);
    }
    return out;
}

/// Optimal sub-pattern assignment distance between two finite state sets:
/// cutoff-clipped Euclidean distances on the full state vector, optimally
/// assigned, with the cardinality gap charged at the cutoff.
inline double ospa(std::span<const Vec4> a, std::span<const Vec4> b, const OspaParams& params) {
    require(params.order >= 1.0 && params.cutoff > 0.0, "ospa: invalid parameters");
    const std::span<const Vec4>& small = a.size() <= b.size() ? a : b;
    const std::span<const Vec4>& large = a.size() <= b.size() ? b : a;
    const std::size_t m = small.size(), n = large.size();
    if (n == 0) return 0.0;
    if (m == 0) return params.cutoff;

    Eigen::MatrixXd cost(m, n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            cost(i, j) = std::pow(std::min((small[i] - large[j]).norm(), params.cutoff),
                                  params.order);
    const double assigned = optimal_assignment(cost).cost;
    const double penalty = std::pow(params.cutoff, params.order) * static_cast<double>(n - m);
    return std::pow((assigned + penalty) / static_cast<double>(n), 1.0 / params.order);
}

struct CurveStats {
    std::vector<double> mean;
    std::vector<double> stderr_; // standard error of the mean; 0 for a single run
};

/// Per-time mean and standard error over Monte Carlo runs.
inline CurveStats mospa_curve(const std::vector<std::vector<double>>& run_by_time) {
    require(!run_by_time.empty(), "mospa_curve: no runs");
    const std::size_t steps = run_by_time.front().size();
    for (const auto& run : run_by_time)
        require(run.size() == steps, "mospa_curve: ragged run array");
    const double runs = static_cast<double>(run_by_time.size());

    CurveStats out;
    out.mean.assign(steps, 0.0);
    out.stderr_.assign(steps, 0.0);
    for (std::size_t t = 0; t < steps; ++t) {
        double s = 0.0;
        for (const auto& run : run_by_time) s += run[t];
        out.mean[t] = s / runs;
        if (run_by_time.size() > 1) {
            double ss = 0.0;
            for (const auto& run : run_by_time) ss += sqr(run[t] - out.mean[t]);
            out.stderr_[t] = std::sqrt(ss / (runs - 1.0) / runs);
        }
    }
    return out;
}

/// Truth targets visible to the sensor (detection probability > 0).
template <typename Target>
std::vector<Target> coverage_filtered_truth(std::span<const Target> truth,
                                            const DetectionField& field) {
    std::vector<Target> out;
    for (const auto& t : truth)
        if (detection_prob(field, Vec2(t.state[0], t.state[2])) > 0.0) out.push_back(t);
    return out;
}

} // namespace pmb
