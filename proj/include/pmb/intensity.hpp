#pragma once

#include <variant>
#include <vector>

#include "pmb/detection.hpp"
#include "pmb/grid.hpp"
#include "pmb/kernel.hpp"
#include "pmb/linalg.hpp"

namespace pmb {

/// Spatially constant intensity over a rectangular state region, stored as
/// density (targets per unit state hypervolume).
struct UniformIntensity {
    double density = 0.0;
    double pos_area = 0.0;
    double vel_area = 0.0;

    [[nodiscard]] double volume() const { return pos_area * vel_area; }
    [[nodiscard]] double mass() const { return density * volume(); }

    static UniformIntensity with_mass(double mass, const StateRegion& region) {
        return {mass / region.volume(), region.pos_area(), region.vel_area()};
    }
};

/// Per-cell intensity density on a 4-D grid.
struct GridIntensity {
    GridSpec spec;
    std::vector<double> value;

    static GridIntensity zero(const GridSpec& spec) {
        return {spec, std::vector<double>(spec.num_cells(), 0.0)};
    }
};

using IntensityModel = std::variant<UniformIntensity, GridIntensity>;

// ---------------------------------------------------------------------------
// Construction

/// Limit of repeated prediction with no detections: mass birth/(1-survival).
inline UniformIntensity steady_state_uniform(double birth_total, double survival,
                                             const StateRegion& region) {
    require(survival >= 0.0 && survival < 1.0, "steady_state_uniform: survival must be < 1");
    require(birth_total >= 0.0, "steady_state_uniform: negative birth rate");
    return UniformIntensity::with_mass(birth_total / (1.0 - survival), region);
}

/// Uniform density over the region, clipped at cells straddling the region
/// boundary so the grid total equals `total_mass` exactly.
inline GridIntensity fill_region_uniform(const GridSpec& spec, double total_mass,
                                         const StateRegion& region) {
    GridIntensity g = GridIntensity::zero(spec);
    const double density = total_mass / region.volume();
    for (std::uint32_t c = 0; c < spec.num_cells(); ++c)
        g.value[c] = density * spec.overlap_fraction(c, region);
    return g;
}

// ---------------------------------------------------------------------------
// Mass

inline double total_mass(const UniformIntensity& u) { return u.mass(); }

inline double total_mass(const GridIntensity& g) {
    double s = 0.0;
    for (double v : g.value) s += v;
    return s * g.spec.cell_volume();
}

inline double total_mass(const IntensityModel& m) {
    return std::visit([](const auto& v) { return total_mass(v); }, m);
}

// ---------------------------------------------------------------------------
// Prediction

inline UniformIntensity predict(const UniformIntensity& u, double survival, double birth_total) {
    UniformIntensity out = u;
    out.density = birth_total / u.volume() + survival * u.density;
    return out;
}

inline GridIntensity predict(const GridIntensity& g, const TransitionKernel& kernel,
                             const GridIntensity& birth) {
    require(birth.spec == g.spec && kernel.cells == g.spec.num_cells(),
            "predict: grid mismatch");
    GridIntensity out{g.spec, apply_kernel(kernel, g.value)};
    for (std::uint32_t c = 0; c < kernel.cells; ++c) out.value[c] += birth.value[c];
    return out;
}

/// Birth density that makes `target` an exact fixed point of predict with
/// this kernel: b = target - K(target), clamped at zero. The clamp only
/// engages where inflow exceeds the target profile, which does not occur
/// for the near-uniform profiles used here.
inline GridIntensity birth_for_fixed_point(const TransitionKernel& kernel,
                                           const GridIntensity& target) {
    GridIntensity b{target.spec, apply_kernel(kernel, target.value)};
    for (std::uint32_t c = 0; c < kernel.cells; ++c)
        b.value[c] = std::max(0.0, target.value[c] - b.value[c]);
    return b;
}

// ---------------------------------------------------------------------------
// Detection update

inline UniformIntensity miss_update(const UniformIntensity& u, const DetectionField& field) {
    const auto* constant = std::get_if<ConstantDetection>(&field);
    require(constant != nullptr,
            "miss_update: uniform intensity requires a constant detection field");
    UniformIntensity out = u;
    out.density *= 1.0 - constant->pd;
    return out;
}

inline GridIntensity miss_update(const GridIntensity& g, const DetectionField& field) {
    GridIntensity out = g;
    const int block = g.spec.velocity_block();
    std::uint32_t c = 0;
    for (int ix = 0; ix < g.spec.pos.count; ++ix) {
        for (int iy = 0; iy < g.spec.pos.count; ++iy) {
            const double keep =
                1.0 - detection_prob(field, Vec2(g.spec.pos.center(ix), g.spec.pos.center(iy)));
            for (int v = 0; v < block; ++v, ++c) out.value[c] *= keep;
        }
    }
    return out;
}

inline IntensityModel miss_update(const IntensityModel& m, const DetectionField& field) {
    return std::visit([&](const auto& v) -> IntensityModel { return miss_update(v, field); }, m);
}

// ---------------------------------------------------------------------------
// Measurement-driven terms

/// Everything a new-track hypothesis needs for one measurement: the
/// intensity of undetected-target measurements at z, the moment-matched
/// birth density, and (grid case) the exact per-cell shape it came from.
struct BirthTerm {
    double intensity = 0.0;
    Gaussian kin;
    std::vector<std::pair<std::uint32_t, double>> cells; // weights sum to 1
};

/// Gate: position cells whose center is within 6 sigma of the measurement
/// noise plus half a cell diagonal capture all but ~1e-8 of the likelihood.
inline double grid_gate_radius(const GridSpec& spec, const LinearMeasModel& meas) {
    Eigen::SelfAdjointEigenSolver<Mat2> eig(meas.noise, Eigen::EigenvaluesOnly);
    return 6.0 * std::sqrt(eig.eigenvalues().maxCoeff()) +
           0.5 * spec.pos.spacing * std::sqrt(2.0);
}

namespace detail {

template <typename CellVisitor>
void for_each_gated_cell(const GridIntensity& g, const DetectionField& field,
                         const LinearMeasModel& meas, const Vec2& z, CellVisitor&& visit) {
    const GridSpec& spec = g.spec;
    const double radius = grid_gate_radius(spec, meas);
    const int ix_lo = std::max(0, spec.pos.clamped_index(z.x() - radius));
    const int ix_hi = std::min(spec.pos.count - 1, spec.pos.clamped_index(z.x() + radius));
    const int iy_lo = std::max(0, spec.pos.clamped_index(z.y() - radius));
    const int iy_hi = std::min(spec.pos.count - 1, spec.pos.clamped_index(z.y() + radius));
    const Mat2 noise_inv = meas.noise.inverse();
    const double norm = 1.0 / (2.0 * M_PI * std::sqrt(meas.noise.determinant()));
    const int block = spec.velocity_block();

    for (int ix = ix_lo; ix <= ix_hi; ++ix) {
        for (int iy = iy_lo; iy <= iy_hi; ++iy) {
            const Vec2 center(spec.pos.center(ix), spec.pos.center(iy));
            const Vec2 d = z - center;
            if (d.norm() > radius) continue;
            const double pd = detection_prob(field, center);
            if (pd == 0.0) continue;
            const double likelihood = norm * std::exp(-0.5 * d.dot(noise_inv * d));
            const std::uint32_t base = spec.index(ix, iy, 0, 0);
            for (int v = 0; v < block; ++v) {
                const std::uint32_t c = base + v;
                if (g.value[c] == 0.0) continue;
                visit(c, likelihood * pd * g.value[c]);
            }
        }
    }
}

} // namespace detail

inline BirthTerm birth_term(const GridIntensity& g, const DetectionField& field,
                            const LinearMeasModel& meas, const Vec2& z) {
    BirthTerm out;
    const double volume = g.spec.cell_volume();
    detail::for_each_gated_cell(g, field, meas, z, [&](std::uint32_t c, double density) {
        out.cells.emplace_back(c, density * volume);
        out.intensity += density * volume;
    });
    if (out.intensity <= 0.0) {
        out.intensity = 0.0;
        out.cells.clear();
        return out;
    }
    // Moment-match the piecewise-constant density: point mass at each cell
    // center plus the cell-extent covariance.
    Vec4 mean = Vec4::Zero();
    for (auto& [c, w] : out.cells) {
        w /= out.intensity;
        mean += w * g.spec.center(c);
    }
    Mat4 cov = g.spec.cell_extent_cov();
    for (const auto& [c, w] : out.cells) {
        const Vec4 d = g.spec.center(c) - mean;
        cov += w * (d * d.transpose());
    }
    out.kin = {mean, symmetrized(cov)};
    return out;
}

inline BirthTerm birth_term(const UniformIntensity& u, const DetectionField& field,
                            const LinearMeasModel& meas, const Vec2& z) {
    BirthTerm out;
    // The position marginal of the measurement likelihood integrates to one
    // against the constant density, leaving pd * density * |velocity region|.
    out.intensity = detection_prob(field, z) * u.density * u.vel_area;
    if (out.intensity <= 0.0) return out;

    // Gaussian approximation of the uniform prior: position variance
    // matches U[-hw, hw]; velocity variance 1/12 per axis.
    const double pos_halfwidth = 0.5 * std::sqrt(u.pos_area);
    Gaussian prior;
    prior.cov(0, 0) = prior.cov(2, 2) = sqr(pos_halfwidth) / 3.0;
    prior.cov(1, 1) = prior.cov(3, 3) = 1.0 / 12.0;
    out.kin = kf_update(prior, meas, z).posterior;
    return out;
}

inline BirthTerm birth_term(const IntensityModel& m, const DetectionField& field,
                            const LinearMeasModel& meas, const Vec2& z) {
    return std::visit([&](const auto& v) { return birth_term(v, field, meas, z); }, m);
}

/// Intensity of measurements arriving from undetected targets at z.
inline double measurement_intensity(const IntensityModel& m, const DetectionField& field,
                                    const LinearMeasModel& meas, const Vec2& z) {
    return birth_term(m, field, meas, z).intensity;
}

/// Existence-conditioned density of a track started on measurement z.
inline Gaussian birth_density_from_measurement(const IntensityModel& m,
                                               const DetectionField& field,
                                               const LinearMeasModel& meas, const Vec2& z) {
    BirthTerm term = birth_term(m, field, meas, z);
    require(term.intensity > 0.0,
            "birth_density_from_measurement: zero undetected intensity at measurement");
    return term.kin;
}

// ---------------------------------------------------------------------------
// Deposits (recycling)

/// Adds `mass` with an explicit per-cell shape (weights summing to 1).
inline void deposit_cells(GridIntensity& g, double mass,
                          std::span<const std::pair<std::uint32_t, double>> cells) {
    require(mass >= 0.0, "deposit: negative mass");
    const double inv_volume = 1.0 / g.spec.cell_volume();
    for (const auto& [c, w] : cells) g.value[c] += mass * w * inv_volume;
}

/// Projects a Gaussian onto the grid: evaluated at cell centers within a
/// 4-sigma box per axis, renormalized so exactly `mass` is added. A shape
/// whose box misses the grid entirely deposits nothing.
inline void deposit(GridIntensity& g, double mass, const Gaussian& shape) {
    require(mass >= 0.0, "deposit: negative mass");
    if (mass == 0.0) return;
    const GridSpec& spec = g.spec;

    Mat4 cov = shape.cov;
    Eigen::LLT<Mat4> llt(cov);
    if (llt.info() != Eigen::Success) {
        cov += 1e-12 * Mat4::Identity();
        llt.compute(cov);
        require(llt.info() == Eigen::Success, "deposit: covariance not positive definite");
    }
    const Mat4 cov_inv = llt.solve(Mat4::Identity());
    const double sqrt_det = llt.matrixL().determinant(); // = sqrt(det cov)
    const double norm = 1.0 / (sqr(2.0 * M_PI) * sqrt_det);

    auto axis_range = [](const AxisSpec& axis, double mean, double sigma) {
        return std::pair<int, int>{axis.clamped_index(mean - 4.0 * sigma),
                                   axis.clamped_index(mean + 4.0 * sigma)};
    };
    const auto [ix_lo, ix_hi] = axis_range(spec.pos, shape.mean[0], std::sqrt(cov(0, 0)));
    const auto [ivx_lo, ivx_hi] = axis_range(spec.vel, shape.mean[1], std::sqrt(cov(1, 1)));
    const auto [iy_lo, iy_hi] = axis_range(spec.pos, shape.mean[2], std::sqrt(cov(2, 2)));
    const auto [ivy_lo, ivy_hi] = axis_range(spec.vel, shape.mean[3], std::sqrt(cov(3, 3)));

    std::vector<std::pair<std::uint32_t, double>> weights;
    double sum = 0.0;
    for (int ix = ix_lo; ix <= ix_hi; ++ix) {
        for (int iy = iy_lo; iy <= iy_hi; ++iy) {
            for (int ivx = ivx_lo; ivx <= ivx_hi; ++ivx) {
                for (int ivy = ivy_lo; ivy <= ivy_hi; ++ivy) {
                    const std::uint32_t c = spec.index(ix, iy, ivx, ivy);
                    const Vec4 d = spec.center(c) - shape.mean;
                    const double w = norm * std::exp(-0.5 * d.dot(cov_inv * d));
                    if (w <= 0.0) continue;
                    weights.emplace_back(c, w);
                    sum += w;
                }
            }
        }
    }
    if (sum <= 0.0) return;
    for (auto& [c, w] : weights) w /= sum;
    deposit_cells(g, mass, weights);
}

} // namespace pmb
