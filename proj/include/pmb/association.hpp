#pragma once

#include <Eigen/Dense>
#include <vector>

#include "pmb/common.hpp"

namespace pmb {

/// One scan's track-to-measurement association weights. A joint hypothesis
/// assigns each track to at most one measurement and vice versa; its weight
/// is the product of miss_weight over unassigned tracks, pair_weight over
/// assigned pairs, and unclaimed_weight over measurements left to false
/// alarms or new targets.
struct AssociationProblem {
    std::vector<double> miss_weight;      // per track
    Eigen::MatrixXd pair_weight;          // tracks x measurements; 0 = gated out
    std::vector<double> unclaimed_weight; // per measurement, > 0

    [[nodiscard]] int tracks() const { return static_cast<int>(miss_weight.size()); }
    [[nodiscard]] int measurements() const { return static_cast<int>(unclaimed_weight.size()); }

    static AssociationProblem sized(int n, int m) {
        AssociationProblem p;
        p.miss_weight.assign(n, 1.0);
        p.pair_weight = Eigen::MatrixXd::Zero(n, m);
        p.unclaimed_weight.assign(m, 1.0);
        return p;
    }
};

struct AssociationMarginals {
    Eigen::MatrixXd pair; // tracks x measurements
    std::vector<double> miss;
    std::vector<double> unclaimed; // measurement not claimed by any track
};

/// Marginals by exhaustive enumeration of all one-to-one partial matchings.
/// Factorial cost; restricted to tracks + measurements <= 10.
inline AssociationMarginals exact_marginals(const AssociationProblem& p) {
    const int n = p.tracks();
    const int m = p.measurements();
    require(n + m <= 10, "exact_marginals: problem too large to enumerate");
    for (double k : p.unclaimed_weight)
        require(k > 0.0, "exact_marginals: unclaimed weights must be positive");

    AssociationMarginals out;
    out.pair = Eigen::MatrixXd::Zero(n, m);
    out.miss.assign(n, 0.0);
    out.unclaimed.assign(m, 0.0);
    double total = 0.0;

    std::vector<int> choice(n, -1);
    std::vector<bool> used(m, false);

    auto accumulate = [&]() {
        double w = 1.0;
        for (int i = 0; i < n; ++i)
            w *= choice[i] < 0 ? p.miss_weight[i] : p.pair_weight(i, choice[i]);
        for (int j = 0; j < m; ++j)
            if (!used[j]) w *= p.unclaimed_weight[j];
        total += w;
        for (int i = 0; i < n; ++i) {
            if (choice[i] < 0)
                out.miss[i] += w;
            else
                out.pair(i, choice[i]) += w;
        }
        for (int j = 0; j < m; ++j)
            if (!used[j]) out.unclaimed[j] += w;
    };

    auto dfs = [&](auto&& self, int i) -> void {
        if (i == n) {
            accumulate();
            return;
        }
        choice[i] = -1;
        self(self, i + 1);
        for (int j = 0; j < m; ++j) {
            if (used[j] || p.pair_weight(i, j) == 0.0) continue;
            choice[i] = j;
            used[j] = true;
            self(self, i + 1);
            used[j] = false;
        }
        choice[i] = -1;
    };
    dfs(dfs, 0);

    ensure(total > 0.0, "exact_marginals: all hypotheses have zero weight");
    out.pair /= total;
    for (double& v : out.miss) v /= total;
    for (double& v : out.unclaimed) v /= total;
    return out;
}

struct LbpResult {
    AssociationMarginals marginals;
    bool converged = true;
    int iterations = 0;
};

/// Loopy belief propagation on the bipartite association graph. Messages
/// live on pair indices after normalizing per-track weights by miss_weight
/// and per-measurement weights by unclaimed_weight. Exact on trees; on
/// loopy instances the result is certified against exact_marginals by the
/// test suite, not by derivation.
///
/// On non-convergence the best iterate is returned with converged=false;
/// callers proceed and log the event.
inline LbpResult lbp_marginals(const AssociationProblem& p, double tol = 1e-6,
                               int max_iter = 200, double damping = 0.0) {
    const int n = p.tracks();
    const int m = p.measurements();
    for (double k : p.unclaimed_weight)
        require(k > 0.0, "lbp_marginals: unclaimed weights must be positive");

    LbpResult out;
    out.marginals.pair = Eigen::MatrixXd::Zero(n, m);
    out.marginals.miss.assign(n, 1.0);
    out.marginals.unclaimed.assign(m, 1.0);
    if (n == 0 || m == 0) {
        for (int i = 0; i < n; ++i) out.marginals.miss[i] = 1.0;
        return out;
    }

    Eigen::MatrixXd w(n, m); // pair weight / (miss weight * unclaimed weight)
    for (int i = 0; i < n; ++i) {
        const double miss = std::max(p.miss_weight[i], 1e-300);
        for (int j = 0; j < m; ++j)
            w(i, j) = p.pair_weight(i, j) / (miss * p.unclaimed_weight[j]);
    }

    Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(n, m);      // track -> measurement
    Eigen::MatrixXd nu = Eigen::MatrixXd::Ones(n, m);      // measurement -> track
    bool converged = false;
    int iter = 0;
    while (iter < max_iter && !converged) {
        ++iter;
        double delta = 0.0;
        for (int i = 0; i < n; ++i) {
            double row = 1.0;
            for (int j = 0; j < m; ++j) row += w(i, j) * nu(i, j);
            for (int j = 0; j < m; ++j) {
                const double denom = row - w(i, j) * nu(i, j);
                double next = w(i, j) / denom;
                if (damping > 0.0) next = damping * mu(i, j) + (1.0 - damping) * next;
                delta = std::max(delta, std::abs(next - mu(i, j)));
                mu(i, j) = next;
            }
        }
        for (int j = 0; j < m; ++j) {
            double col = 1.0;
            for (int i = 0; i < n; ++i) col += mu(i, j);
            for (int i = 0; i < n; ++i) {
                const double next = 1.0 / (col - mu(i, j));
                delta = std::max(delta, std::abs(next - nu(i, j)));
                nu(i, j) = next;
            }
        }
        converged = delta < tol;
    }
    out.converged = converged;
    out.iterations = iter;

    // Track-side beliefs are exactly row-normalized; the unclaimed
    // probability closes each measurement's column exactly.
    for (int i = 0; i < n; ++i) {
        double row = 1.0;
        for (int j = 0; j < m; ++j) row += w(i, j) * nu(i, j);
        out.marginals.miss[i] = 1.0 / row;
        for (int j = 0; j < m; ++j) out.marginals.pair(i, j) = w(i, j) * nu(i, j) / row;
    }
    for (int j = 0; j < m; ++j) {
        double claimed = 0.0;
        for (int i = 0; i < n; ++i) claimed += out.marginals.pair(i, j);
        out.marginals.unclaimed[j] = clamp01(1.0 - claimed);
    }
    return out;
}

} // namespace pmb
