#pragma once

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "pmb/common.hpp"
#include "pmb/linalg.hpp"

namespace pmb {

/// KL divergence from a Bernoulli set distribution with existence q to its
/// best-fit Poisson (mass q, same shape): q + (1-q)log(1-q).
/// q = 1 is outside the supported domain and maps to +infinity.
inline double bernoulli_poisson_kl(double q) {
    require(q >= 0.0 && q <= 1.0, "bernoulli_poisson_kl: q outside [0,1]");
    if (q == 1.0) return kInf;
    return q + (1.0 - q) * std::log1p(-q);
}

/// Same divergence for an arbitrary Poisson mass (shape kept equal);
/// minimized at mass = q.
inline double bernoulli_poisson_kl_at(double q, double mass) {
    require(q >= 0.0 && q < 1.0, "bernoulli_poisson_kl_at: q outside [0,1)");
    require(mass > 0.0, "bernoulli_poisson_kl_at: mass must be positive");
    const double miss = (1.0 - q) * (std::log1p(-q) + mass);
    const double hit = q == 0.0 ? 0.0 : q * (std::log(q) + mass - std::log(mass));
    return miss + hit;
}

struct PoissonProjection {
    double mass = 0.0;
    Gaussian shape;
};

/// KL-optimal Poisson approximation of a Bernoulli track: keep the shape,
/// set the mass to the existence probability.
inline PoissonProjection project_bernoulli_to_poisson(double q, const Gaussian& shape) {
    require(q >= 0.0 && q <= 1.0, "project_bernoulli_to_poisson: q outside [0,1]");
    return {q, shape};
}

/// Distribution over finite multisets drawn from a ground space of up to
/// three points, truncated at max_size elements. Densities are stored once
/// per multiset; the set integral weights each by 1/prod(count!), which
/// equals the tuple multiplicity divided by n!.
class DiscreteSetDistribution {
public:
    static constexpr int kMaxGround = 3;
    static constexpr int kMaxSize = 6;

    DiscreteSetDistribution(int ground_points, int max_size = kMaxSize)
        : ground_(ground_points), max_size_(max_size) {
        require(ground_ >= 1 && ground_ <= kMaxGround, "ground space must have 1..3 points");
        require(max_size_ >= 0 && max_size_ <= kMaxSize, "max_size must be 0..6");
        rank_.fill(-1);
        std::array<int, kMaxGround> counts{};
        enumerate(counts, 0, 0);
        value_.assign(support_.size(), 0.0);
    }

    [[nodiscard]] int ground_points() const { return ground_; }
    [[nodiscard]] int max_size() const { return max_size_; }
    [[nodiscard]] std::size_t support_size() const { return support_.size(); }
    [[nodiscard]] const std::array<int, kMaxGround>& counts_at(std::size_t r) const {
        return support_[r];
    }

    [[nodiscard]] double& operator[](std::size_t r) { return value_[r]; }
    [[nodiscard]] double operator[](std::size_t r) const { return value_[r]; }

    [[nodiscard]] double& at(const std::array<int, kMaxGround>& counts) {
        return value_[rank(counts)];
    }
    [[nodiscard]] double at(const std::array<int, kMaxGround>& counts) const {
        return value_[rank(counts)];
    }

    /// 1 / prod(count_i!) for the multiset at rank r.
    [[nodiscard]] double integral_coeff(std::size_t r) const {
        double c = 1.0;
        for (int i = 0; i < ground_; ++i) c /= factorial(support_[r][i]);
        return c;
    }

    [[nodiscard]] double set_integral() const {
        double s = 0.0;
        for (std::size_t r = 0; r < support_.size(); ++r) s += value_[r] * integral_coeff(r);
        return s;
    }

    void normalize() {
        const double s = set_integral();
        require(s > 0.0, "normalize: zero set integral");
        for (double& v : value_) v /= s;
    }

    [[nodiscard]] bool compatible(const DiscreteSetDistribution& o) const {
        return ground_ == o.ground_ && max_size_ == o.max_size_;
    }

    /// Point mass on the empty set (the identity of superposition).
    static DiscreteSetDistribution empty_set(int ground_points, int max_size = kMaxSize) {
        DiscreteSetDistribution d(ground_points, max_size);
        d.at({0, 0, 0}) = 1.0;
        return d;
    }

    /// Bernoulli: empty with probability 1-q, a single point x with
    /// probability q * pmf[x].
    static DiscreteSetDistribution bernoulli(int ground_points, double q,
                                             std::span<const double> pmf,
                                             int max_size = kMaxSize) {
        require(q >= 0.0 && q <= 1.0, "bernoulli: q outside [0,1]");
        DiscreteSetDistribution d(ground_points, max_size);
        d.at({0, 0, 0}) = 1.0 - q;
        for (int i = 0; i < ground_points; ++i) {
            std::array<int, kMaxGround> c{};
            c[i] = 1;
            d.at(c) = q * pmf[i];
        }
        return d;
    }

    /// Poisson with the given per-point intensity. Values are the exact
    /// densities exp(-mass) * prod(intensity^count); the stored table is
    /// truncated but not renormalized, so the represented distribution is a
    /// genuine Poisson up to the truncated tail.
    static DiscreteSetDistribution poisson(int ground_points, std::span<const double> intensity,
                                           int max_size = kMaxSize) {
        DiscreteSetDistribution d(ground_points, max_size);
        double mass = 0.0;
        for (int i = 0; i < ground_points; ++i) {
            require(intensity[i] >= 0.0, "poisson: negative intensity");
            mass += intensity[i];
        }
        const double base = std::exp(-mass);
        for (std::size_t r = 0; r < d.support_size(); ++r) {
            double v = base;
            for (int i = 0; i < ground_points; ++i)
                v *= std::pow(intensity[i], d.support_[r][i]);
            d.value_[r] = v;
        }
        return d;
    }

    static double factorial(int n) {
        static constexpr std::array<double, 7> table{1, 1, 2, 6, 24, 120, 720};
        return table[static_cast<std::size_t>(n)];
    }

private:
    [[nodiscard]] std::size_t rank(const std::array<int, kMaxGround>& counts) const {
        const int packed = (counts[0] * 7 + counts[1]) * 7 + counts[2];
        const int r = rank_[static_cast<std::size_t>(packed)];
        require(r >= 0, "multiset outside the truncated support");
        return static_cast<std::size_t>(r);
    }

    void enumerate(std::array<int, kMaxGround>& counts, int slot, int used) {
        if (slot == ground_) {
            const int packed = (counts[0] * 7 + counts[1]) * 7 + counts[2];
            rank_[static_cast<std::size_t>(packed)] = static_cast<int>(support_.size());
            support_.push_back(counts);
            return;
        }
        for (int c = 0; c + used <= max_size_; ++c) {
            counts[slot] = c;
            enumerate(counts, slot + 1, used + c);
        }
        counts[slot] = 0;
    }

    int ground_;
    int max_size_;
    std::vector<std::array<int, kMaxGround>> support_;
    std::vector<double> value_;
    std::array<int, 343> rank_{};
};

/// Multi-target KL divergence between set distributions on the same
/// truncated space. Infinite when f has mass where g has none.
inline double set_kl(const DiscreteSetDistribution& f, const DiscreteSetDistribution& g) {
    require(f.compatible(g), "set_kl: incompatible spaces");
    double s = 0.0;
    for (std::size_t r = 0; r < f.support_size(); ++r) {
        const double pf = f[r];
        if (pf == 0.0) continue;
        const double pg = g[r];
        if (pg <= 0.0) return kInf;
        s += f.integral_coeff(r) * pf * std::log(pf / pg);
    }
    return s;
}

/// Superposition of two independent set distributions: the density of X is
/// the sum over splits of X into an ordered pair of sub-multisets, with the
/// binomial factors counting the ways each split arises from labeled
/// tuples. Output truncated at the shared max_size.
inline DiscreteSetDistribution convolve(const DiscreteSetDistribution& g,
                                        const DiscreteSetDistribution& h) {
    require(g.compatible(h), "convolve: incompatible spaces");
    static constexpr std::array<std::array<double, 7>, 7> kBinom = [] {
        std::array<std::array<double, 7>, 7> b{};
        for (int n = 0; n <= 6; ++n) {
            b[n][0] = 1.0;
            for (int k = 1; k <= n; ++k)
                b[n][k] = b[n - 1][k - 1] + (k <= n - 1 ? b[n - 1][k] : 0.0);
        }
        return b;
    }();

    DiscreteSetDistribution out(g.ground_points(), g.max_size());
    for (std::size_t rg = 0; rg < g.support_size(); ++rg) {
        if (g[rg] == 0.0) continue;
        const auto& a = g.counts_at(rg);
        for (std::size_t rh = 0; rh < h.support_size(); ++rh) {
            if (h[rh] == 0.0) continue;
            const auto& b = h.counts_at(rh);
            std::array<int, DiscreteSetDistribution::kMaxGround> total{};
            int size = 0;
            for (int i = 0; i < g.ground_points(); ++i) {
                total[i] = a[i] + b[i];
                size += total[i];
            }
            if (size > g.max_size()) continue;
            double ways = 1.0;
            for (int i = 0; i < g.ground_points(); ++i) ways *= kBinom[total[i]][a[i]];
            out.at(total) += ways * g[rg] * h[rh];
        }
    }
    return out;
}

struct SubadditivityCheck {
    double lhs = 0.0; // D(convolve(g,h) || convolve(gt,ht))
    double rhs = 0.0; // D(g||gt) + D(h||ht)
    [[nodiscard]] bool holds(double tol = 1e-9) const { return lhs <= rhs + tol; }
};

/// Verifies that approximating components independently bounds the
/// divergence of their superposition by the component divergences.
inline SubadditivityCheck theorem1_check(const DiscreteSetDistribution& g,
                                         const DiscreteSetDistribution& gt,
                                         const DiscreteSetDistribution& h,
                                         const DiscreteSetDistribution& ht) {
    SubadditivityCheck out;
    out.lhs = set_kl(convolve(g, h), convolve(gt, ht));
    out.rhs = set_kl(g, gt) + set_kl(h, ht);
    return out;
}

} // namespace pmb
