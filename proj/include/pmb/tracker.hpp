#pragma once

#include <algorithm>
#include <memory>
#include <numeric>
#include <vector>

#include "pmb/association.hpp"
#include "pmb/detection.hpp"
#include "pmb/divergence.hpp"
#include "pmb/intensity.hpp"
#include "pmb/linalg.hpp"

namespace pmb {

/// A track: existence probability plus existence-conditioned Gaussian.
/// Tracks born on a grid intensity keep the exact per-cell birth shape
/// until their first prediction, so recycling a track in its birth scan
/// returns precisely the intensity it took out.
struct BernoulliTrack {
    std::int64_t id = 0;
    double existence = 0.0;
    Gaussian kin;
    int birth_time = 0;
    std::vector<std::pair<std::uint32_t, double>> birth_cells;
};

struct FilterParams {
    enum class Prune { Recycle, Delete, DistortionBudget };

    double clutter_intensity = 10.0 / (200.0 * 200.0); // per unit measurement area
    double survival = 0.999;
    double gate_threshold = 25.0; // squared Mahalanobis, 2-D innovation
    double confirm_existence = 0.8;
    double confirm_cov_trace = 10.0;

    Prune prune = Prune::Delete;
    double recycle_threshold = 0.1;
    double delete_threshold = 1e-3;
    double distortion_budget = 0.05;

    /// Fixed-intensity baselines: skip intensity predict and miss update.
    bool intensity_frozen = false;

    double lbp_tol = 1e-6;
    int lbp_max_iter = 200;
    double lbp_damping = 0.0;
};

/// Scenario-fixed models the filter runs against. `kernel` is required when
/// the intensity is grid-based and prediction is not frozen.
struct TrackerModel {
    CvDynamics dynamics;
    LinearMeasModel meas;
    StateRegion region;
    IntensityModel birth = UniformIntensity{};
    std::shared_ptr<const TransitionKernel> kernel;
};

struct Scan {
    int time = 0;
    std::vector<Vec2> points;
    DetectionField detection = ConstantDetection{0.3};
};

struct StepDiagnostics {
    double predicted_mass = 0.0;
    bool lbp_converged = true;
    int lbp_iterations = 0;
    std::vector<std::int64_t> recycled_ids;
    std::vector<std::int64_t> deleted_ids;
};

struct FilterState {
    std::vector<BernoulliTrack> tracks;
    IntensityModel intensity = UniformIntensity{};
    int time = 0;
    std::int64_t next_id = 1;
    StepDiagnostics last;
};

namespace detail {

inline void check_existence(double q) {
    ensure(q >= 0.0 && q <= 1.0 && std::isfinite(q), "track existence left [0,1]");
}

} // namespace detail

/// Survival-weighted existence, constant-velocity prediction; tracks whose
/// mean position leaves the region are dropped. Birth shapes no longer
/// describe the moved density and are cleared.
inline std::vector<BernoulliTrack> predict_tracks(std::vector<BernoulliTrack> tracks,
                                                  const CvDynamics& dyn, double survival,
                                                  const StateRegion& region) {
    std::vector<BernoulliTrack> out;
    out.reserve(tracks.size());
    for (auto& t : tracks) {
        t.existence *= survival;
        detail::check_existence(t.existence);
        t.kin = kf_predict(t.kin, dyn);
        t.birth_cells.clear();
        if (region.contains_position(Vec2(t.kin.mean[0], t.kin.mean[2])))
            out.push_back(std::move(t));
    }
    return out;
}

struct AssociationBuild {
    AssociationProblem problem;
    std::vector<BirthTerm> births; // one per measurement
};

/// Weights for one scan. Pairs outside the gate keep weight zero; the
/// unclaimed weight per measurement is clutter intensity plus the intensity
/// of measurements from undetected targets, which is what lets a
/// measurement in a high-birth area resist capture by existing tracks.
inline AssociationBuild build_association_problem(const std::vector<BernoulliTrack>& tracks,
                                                  const Scan& scan, const TrackerModel& model,
                                                  const FilterParams& params,
                                                  const IntensityModel& intensity) {
    const int n = static_cast<int>(tracks.size());
    const int m = static_cast<int>(scan.points.size());
    AssociationBuild out;
    out.problem = AssociationProblem::sized(n, m);

    for (int i = 0; i < n; ++i) {
        const auto& t = tracks[i];
        const double pd = detection_prob(scan.detection, t.kin.mean);
        out.problem.miss_weight[i] = 1.0 - t.existence * pd;
        if (m == 0 || t.existence == 0.0 || pd == 0.0) continue;

        const Vec2 predicted = model.meas.obs * t.kin.mean;
        const Mat2 s = symmetrized(model.meas.obs * t.kin.cov * model.meas.obs.transpose() +
                                   model.meas.noise);
        const Mat2 s_inv = s.inverse();
        const double norm = 1.0 / (2.0 * M_PI * std::sqrt(s.determinant()));
        for (int j = 0; j < m; ++j) {
            const Vec2 d = scan.points[j] - predicted;
            const double maha2 = d.dot(s_inv * d);
            if (maha2 > params.gate_threshold) continue;
            out.problem.pair_weight(i, j) =
                t.existence * pd * norm * std::exp(-0.5 * maha2);
        }
    }

    out.births.reserve(m);
    for (int j = 0; j < m; ++j) {
        out.births.push_back(birth_term(intensity, scan.detection, model.meas, scan.points[j]));
        out.problem.unclaimed_weight[j] = params.clutter_intensity + out.births[j].intensity;
    }
    return out;
}

/// Per-track posterior averaged over the marginal association events:
/// existence combines the miss branch q(1-pd)/(1-q pd) with the pair
/// marginals; kinematics are the moment-matched mixture of the prior and
/// the per-measurement Kalman posteriors.
inline std::vector<BernoulliTrack> update_tracks(std::vector<BernoulliTrack> tracks,
                                                 const AssociationMarginals& marg,
                                                 const Scan& scan,
                                                 const LinearMeasModel& meas) {
    const int m = static_cast<int>(scan.points.size());
    for (int i = 0; i < static_cast<int>(tracks.size()); ++i) {
        auto& t = tracks[i];
        const double pd = detection_prob(scan.detection, t.kin.mean);
        const double denom = 1.0 - t.existence * pd;
        const double q_miss = denom <= 0.0 ? 0.0 : t.existence * (1.0 - pd) / denom;

        std::vector<std::pair<double, Gaussian>> mix;
        mix.reserve(static_cast<std::size_t>(m) + 1);
        double q_post = marg.miss[i] * q_miss;
        mix.emplace_back(q_post, t.kin);
        for (int j = 0; j < m; ++j) {
            const double pj = marg.pair(i, j);
            if (pj == 0.0) continue;
            mix.emplace_back(pj, kf_update(t.kin, meas, scan.points[j]).posterior);
            q_post += pj;
        }
        q_post = clamp01(q_post);
        if (q_post > 0.0) t.kin = moment_match(mix);
        t.existence = q_post;
        detail::check_existence(t.existence);
    }
    return tracks;
}

/// One new Bernoulli per measurement: existence is the unclaimed marginal
/// times the ratio of undetected-target intensity to the total unclaimed
/// intensity at that measurement. Zero-intensity measurements spawn nothing.
inline std::vector<BernoulliTrack> spawn_new_tracks(const Scan& scan,
                                                    std::vector<BirthTerm>& births,
                                                    const AssociationMarginals& marg,
                                                    const FilterParams& params,
                                                    std::int64_t& next_id) {
    std::vector<BernoulliTrack> out;
    for (int j = 0; j < static_cast<int>(scan.points.size()); ++j) {
        BirthTerm& b = births[j];
        if (b.intensity <= 0.0) continue;
        const double q =
            marg.unclaimed[j] * b.intensity / (params.clutter_intensity + b.intensity);
        if (q <= 0.0) continue;
        BernoulliTrack t;
        t.id = next_id++;
        t.existence = clamp01(q);
        t.kin = b.kin;
        t.birth_time = scan.time;
        t.birth_cells = std::move(b.cells);
        out.push_back(std::move(t));
    }
    return out;
}

/// Removes low-existence tracks. In recycling modes their Poisson
/// projection (mass = existence, shape = kinematic density) is deposited
/// back onto the grid intensity; in delete mode they are simply discarded.
inline void recycle_and_prune(FilterState& state, const FilterParams& params) {
    auto deposit_track = [&](const BernoulliTrack& t) {
        auto* grid = std::get_if<GridIntensity>(&state.intensity);
        require(grid != nullptr, "recycling requires a grid intensity");
        const PoissonProjection proj = project_bernoulli_to_poisson(t.existence, t.kin);
        if (!t.birth_cells.empty())
            deposit_cells(*grid, proj.mass, t.birth_cells);
        else
            deposit(*grid, proj.mass, proj.shape);
    };

    std::vector<BernoulliTrack> kept;
    kept.reserve(state.tracks.size());
    switch (params.prune) {
    case FilterParams::Prune::Recycle:
        for (auto& t : state.tracks) {
            if (t.existence < params.recycle_threshold) {
                deposit_track(t);
                state.last.recycled_ids.push_back(t.id);
            } else {
                kept.push_back(std::move(t));
            }
        }
        break;
    case FilterParams::Prune::Delete:
        for (auto& t : state.tracks) {
            if (t.existence < params.delete_threshold)
                state.last.deleted_ids.push_back(t.id);
            else
                kept.push_back(std::move(t));
        }
        break;
    case FilterParams::Prune::DistortionBudget: {
        // Cheapest distortions first, spend until the budget is exhausted.
        std::vector<std::size_t> order(state.tracks.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return state.tracks[a].existence < state.tracks[b].existence;
        });
        std::vector<bool> recycle(state.tracks.size(), false);
        double spent = 0.0;
        for (std::size_t idx : order) {
            const double d = bernoulli_poisson_kl(state.tracks[idx].existence);
            if (spent + d > params.distortion_budget) break;
            spent += d;
            recycle[idx] = true;
        }
        for (std::size_t i = 0; i < state.tracks.size(); ++i) {
            if (recycle[i]) {
                deposit_track(state.tracks[i]);
                state.last.recycled_ids.push_back(state.tracks[i].id);
            } else {
                kept.push_back(std::move(state.tracks[i]));
            }
        }
        break;
    }
    }
    state.tracks = std::move(kept);
}

/// Kinematic means of tracks passing both output thresholds.
inline std::vector<Vec4> extract_estimates(const FilterState& state,
                                           const FilterParams& params) {
    std::vector<Vec4> out;
    for (const auto& t : state.tracks)
        if (t.existence >= params.confirm_existence &&
            t.kin.cov.trace() < params.confirm_cov_trace)
            out.push_back(t.kin.mean);
    return out;
}

namespace detail {

inline IntensityModel predict_intensity(const IntensityModel& intensity,
                                        const TrackerModel& model, double survival) {
    if (const auto* u = std::get_if<UniformIntensity>(&intensity)) {
        const auto* birth = std::get_if<UniformIntensity>(&model.birth);
        require(birth != nullptr, "predict: uniform intensity requires uniform birth");
        return predict(*u, survival, birth->mass());
    }
    const auto& g = std::get<GridIntensity>(intensity);
    const auto* birth = std::get_if<GridIntensity>(&model.birth);
    require(birth != nullptr, "predict: grid intensity requires grid birth");
    require(model.kernel != nullptr, "predict: grid intensity requires a transition kernel");
    return predict(g, *model.kernel, *birth);
}

} // namespace detail

/// One full filter cycle for a scan at state.time + 1:
/// intensity predict -> track predict -> association -> LBP -> track update
/// -> spawn -> intensity miss update -> recycle/prune.
/// New tracks are spawned from the *predicted* intensity, and newborn
/// low-existence tracks participate in the same scan's recycling.
inline void step(FilterState& state, const Scan& scan, const TrackerModel& model,
                 const FilterParams& params) {
    require(scan.time == state.time + 1, "step: scan time must be state.time + 1");
    state.last = StepDiagnostics{};

    if (!params.intensity_frozen)
        state.intensity = detail::predict_intensity(state.intensity, model, params.survival);
    state.last.predicted_mass = total_mass(state.intensity);

    state.tracks = predict_tracks(std::move(state.tracks), model.dynamics, params.survival,
                                  model.region);

    AssociationBuild assoc =
        build_association_problem(state.tracks, scan, model, params, state.intensity);
    LbpResult lbp =
        lbp_marginals(assoc.problem, params.lbp_tol, params.lbp_max_iter, params.lbp_damping);
    state.last.lbp_converged = lbp.converged;
    state.last.lbp_iterations = lbp.iterations;

    state.tracks = update_tracks(std::move(state.tracks), lbp.marginals, scan, model.meas);

    std::vector<BernoulliTrack> born =
        spawn_new_tracks(scan, assoc.births, lbp.marginals, params, state.next_id);
    for (auto& t : born) state.tracks.push_back(std::move(t));

    if (!params.intensity_frozen)
        state.intensity = miss_update(state.intensity, scan.detection);

    recycle_and_prune(state, params);
    state.time = scan.time;
}

} // namespace pmb
