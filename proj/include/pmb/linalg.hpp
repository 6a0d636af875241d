#pragma once

#include <Eigen/Dense>
#include <span>
#include <utility>

#include "pmb/common.hpp"

namespace pmb {

// State order is x = [p_x, v_x, p_y, v_y]: positions in length units,
// velocities in length per step.
using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat4 = Eigen::Matrix4d;
using Mat24 = Eigen::Matrix<double, 2, 4>;

inline Mat4 symmetrized(const Mat4& m) { return 0.5 * (m + m.transpose()); }
inline Mat2 symmetrized(const Mat2& m) { return 0.5 * (m + m.transpose()); }

/// Symmetry within 1e-10 and smallest eigenvalue >= -1e-9.
template <typename Mat>
bool is_valid_covariance(const Mat& m, double eig_tol = 1e-9) {
    if (((m - m.transpose()).cwiseAbs().maxCoeff()) >= 1e-10) return false;
    Eigen::SelfAdjointEigenSolver<Mat> eig(m, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff() >= -eig_tol;
}

struct Gaussian {
    Vec4 mean = Vec4::Zero();
    Mat4 cov = Mat4::Zero();
};

/// Nearly-constant-velocity motion: per axis the transition is [[1,T],[0,1]]
/// and the process noise is the discretized white-noise-acceleration block
/// q*[[T^3/3, T^2/2],[T^2/2, T]].
struct CvDynamics {
    double timestep = 1.0;
    double diffusion = 0.01;

    [[nodiscard]] Mat4 transition() const {
        Mat4 f = Mat4::Identity();
        f(0, 1) = timestep;
        f(2, 3) = timestep;
        return f;
    }

    [[nodiscard]] Mat4 process_noise() const {
        const double t = timestep;
        const double q = diffusion;
        Mat4 w = Mat4::Zero();
        for (int axis : {0, 2}) {
            w(axis, axis) = q * t * t * t / 3.0;
            w(axis, axis + 1) = q * t * t / 2.0;
            w(axis + 1, axis) = q * t * t / 2.0;
            w(axis + 1, axis + 1) = q * t;
        }
        return w;
    }
};

/// Linear position measurement z = Hx + w, w ~ N(0, R).
struct LinearMeasModel {
    Mat24 obs = position_selector();
    Mat2 noise = Mat2::Identity();

    static Mat24 position_selector() {
        Mat24 h = Mat24::Zero();
        h(0, 0) = 1.0;
        h(1, 2) = 1.0;
        return h;
    }
};

/// Density of N(z; mean, cov) in measurement space.
inline double gaussian_eval2(const Vec2& mean, const Mat2& cov, const Vec2& z) {
    const double det = cov.determinant();
    require(std::isfinite(det) && det > 0.0, "gaussian_eval: singular innovation covariance");
    const Vec2 d = z - mean;
    const double quad = d.dot(cov.inverse() * d);
    return std::exp(-0.5 * quad) / (2.0 * M_PI * std::sqrt(det));
}

/// Predictive measurement density N(z; H*mean, H*cov*H' + R).
inline double gaussian_eval(const Gaussian& g, const LinearMeasModel& model, const Vec2& z) {
    const Mat2 s = symmetrized(model.obs * g.cov * model.obs.transpose() + model.noise);
    return gaussian_eval2(model.obs * g.mean, s, z);
}

inline Gaussian kf_predict(const Gaussian& g, const CvDynamics& dyn) {
    const Mat4 f = dyn.transition();
    Gaussian out;
    out.mean = f * g.mean;
    out.cov = symmetrized(f * g.cov * f.transpose() + dyn.process_noise());
    return out;
}

struct KfUpdateResult {
    Gaussian posterior;
    double likelihood = 0.0;
};

inline KfUpdateResult kf_update(const Gaussian& g, const LinearMeasModel& model, const Vec2& z) {
    const Mat24& h = model.obs;
    const Mat2 s = symmetrized(h * g.cov * h.transpose() + model.noise);
    const double det = s.determinant();
    require(std::isfinite(det) && det > 0.0, "kf_update: singular innovation covariance");
    const Mat2 s_inv = s.inverse();
    const Eigen::Matrix<double, 4, 2> gain = g.cov * h.transpose() * s_inv;
    const Vec2 innovation = z - h * g.mean;

    KfUpdateResult out;
    out.posterior.mean = g.mean + gain * innovation;
    // Joseph form keeps the covariance PSD under roundoff.
    const Mat4 ikh = Mat4::Identity() - gain * h;
    out.posterior.cov =
        symmetrized(ikh * g.cov * ikh.transpose() + gain * model.noise * gain.transpose());
    out.likelihood = std::exp(-0.5 * innovation.dot(s_inv * innovation)) /
                     (2.0 * M_PI * std::sqrt(det));
    return out;
}

/// Matches mean and covariance of a Gaussian mixture (weighted mean plus
/// spread-of-means term). Weights need not be normalized.
inline Gaussian moment_match(std::span<const std::pair<double, Gaussian>> components) {
    double total = 0.0;
    for (const auto& [w, g] : components) {
        require(w >= 0.0, "moment_match: negative weight");
        total += w;
    }
    require(total > 0.0, "moment_match: all weights zero");

    Gaussian out;
    for (const auto& [w, g] : components) out.mean += (w / total) * g.mean;
    for (const auto& [w, g] : components) {
        const Vec4 d = g.mean - out.mean;
        out.cov += (w / total) * (g.cov + d * d.transpose());
    }
    out.cov = symmetrized(out.cov);
    return out;
}

} // namespace pmb
