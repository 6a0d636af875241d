#pragma once

#include <optional>
#include <vector>

#include "pmb/detection.hpp"
#include "pmb/grid.hpp"
#include "pmb/linalg.hpp"
#include "pmb/random.hpp"

namespace pmb {

/// A square birth hotspot (one grid cell wide): `rate` expected births per
/// step with positions uniform in the square and velocities uniform over
/// the region's velocity bounds.
struct Hotspot {
    double x = 0.0, y = 0.0;
    double rate = 0.0;
    double extent = 4.0;
};

/// Piecewise-linear sensor route traversed at constant speed. The heading
/// is the direction of the current segment; once the route is exhausted the
/// sensor holds position and keeps its last heading.
struct SensorPath {
    std::vector<Vec2> waypoints;
    double speed = 2.0;
};

struct SensorState {
    Vec2 position = Vec2::Zero();
    Vec2 heading = Vec2(0.0, -1.0);
};

inline SensorState sensor_state_at(const SensorPath& path, int t) {
    require(!path.waypoints.empty(), "sensor_state_at: empty path");
    SensorState s;
    s.position = path.waypoints.front();
    if (path.waypoints.size() >= 2)
        s.heading = (path.waypoints[1] - path.waypoints[0]).normalized();
    double remaining = path.speed * t;
    for (std::size_t leg = 0; leg + 1 < path.waypoints.size(); ++leg) {
        const Vec2 d = path.waypoints[leg + 1] - path.waypoints[leg];
        const double len = d.norm();
        if (len <= 0.0) continue;
        s.heading = d / len;
        if (remaining <= len) {
            s.position = path.waypoints[leg] + s.heading * remaining;
            return s;
        }
        remaining -= len;
        s.position = path.waypoints[leg + 1];
    }
    return s;
}

/// Detection probability seen from a sensor state: `pd` inside the closed
/// 45-degree half-angle cone about the heading, zero outside.
inline double sensor_fov(const SensorState& sensor, const Vec2& position, double pd) {
    return detection_prob(ConeDetection{sensor.position, sensor.heading, M_PI / 4.0, pd},
                          position);
}

struct ScenarioConfig {
    StateRegion region;
    double meas_halfwidth = 100.0; // clutter space Z = [-mh, mh]^2
    double birth_total = 0.05;     // expected births per step over the region
    double survival = 0.999;
    double detect_prob = 0.3;
    double clutter_total = 10.0; // expected false alarms per scan
    double diffusion = 0.01;
    double meas_var = 1.0; // R = meas_var * I
    int duration = 100;
    double init_expected = 50.0; // Poisson population at t = 0
    std::vector<Hotspot> hotspots;
    std::optional<SensorPath> sensor; // nullopt: omnidirectional
    std::optional<GridSpec> grid;     // filter discretization; nullopt: uniform scalar
    int kernel_samples = 1000;
    std::uint64_t kernel_seed = 1;

    [[nodiscard]] double clutter_intensity() const {
        return clutter_total / sqr(2.0 * meas_halfwidth);
    }
    [[nodiscard]] LinearMeasModel meas_model() const {
        return {LinearMeasModel::position_selector(), meas_var * Mat2::Identity()};
    }
    [[nodiscard]] CvDynamics dynamics() const { return {1.0, diffusion}; }
};

inline DetectionField detection_field_at(const ScenarioConfig& config, int t) {
    if (!config.sensor) return ConstantDetection{config.detect_prob};
    const SensorState s = sensor_state_at(*config.sensor, t);
    return ConeDetection{s.position, s.heading, M_PI / 4.0, config.detect_prob};
}

struct TruthTarget {
    int id = 0;
    Vec4 state = Vec4::Zero();
};

/// Target states per step, indices 0..duration.
struct TruthRecord {
    std::vector<std::vector<TruthTarget>> steps;
};

/// Measurement sets per step; index 0 is unused (no scan before the first
/// prediction).
struct ScanRecord {
    std::vector<std::vector<Vec2>> steps;
};

/// Poisson births (uniform plus hotspots), iid survival, constant-velocity
/// motion with process noise, removal at the position boundary. The initial
/// population is Poisson(init_expected): the steady state reached before
/// the sensor starts operating.
inline TruthRecord simulate_truth(const ScenarioConfig& config, std::uint64_t seed) {
    Rng rng(seed, 0x7472757468ull);
    const StateRegion& r = config.region;
    const CvDynamics dyn = config.dynamics();
    const Mat4 f = dyn.transition();
    const double l00 = std::sqrt(config.diffusion / 3.0);
    const double l10 = (config.diffusion / 2.0) / l00;
    const double l11 = std::sqrt(config.diffusion - l10 * l10);

    TruthRecord truth;
    truth.steps.resize(config.duration + 1);
    int next_id = 1;

    auto uniform_state = [&]() {
        return Vec4(rng.uniform(r.pos_min, r.pos_max), rng.uniform(r.vel_min, r.vel_max),
                    rng.uniform(r.pos_min, r.pos_max), rng.uniform(r.vel_min, r.vel_max));
    };

    std::vector<TruthTarget> alive;
    const int initial = rng.poisson(config.init_expected);
    for (int i = 0; i < initial; ++i) alive.push_back({next_id++, uniform_state()});
    truth.steps[0] = alive;

    for (int t = 1; t <= config.duration; ++t) {
        std::vector<TruthTarget> next;
        next.reserve(alive.size() + 4);
        for (const auto& target : alive) {
            if (rng.uniform() >= config.survival) continue;
            Vec4 x = f * target.state;
            const double nx1 = rng.normal(), nx2 = rng.normal();
            const double ny1 = rng.normal(), ny2 = rng.normal();
            x[0] += l00 * nx1;
            x[1] += l10 * nx1 + l11 * nx2;
            x[2] += l00 * ny1;
            x[3] += l10 * ny1 + l11 * ny2;
            if (!r.contains_position(Vec2(x[0], x[2]))) continue;
            next.push_back({target.id, x});
        }
        const int births = rng.poisson(config.birth_total);
        for (int i = 0; i < births; ++i) next.push_back({next_id++, uniform_state()});
        for (const auto& h : config.hotspots) {
            const int spawned = rng.poisson(h.rate);
            for (int i = 0; i < spawned; ++i) {
                Vec4 x(h.x + h.extent * (rng.uniform() - 0.5),
                       rng.uniform(r.vel_min, r.vel_max),
                       h.y + h.extent * (rng.uniform() - 0.5),
                       rng.uniform(r.vel_min, r.vel_max));
                next.push_back({next_id++, x});
            }
        }
        alive = std::move(next);
        truth.steps[t] = alive;
    }
    return truth;
}

/// One scan: independent detections with the field's probability, Gaussian
/// position measurements, Poisson clutter uniform on the measurement space,
/// order shuffled so measurements carry no origin information.
inline std::vector<Vec2> generate_scan(std::span<const TruthTarget> targets,
                                       const DetectionField& field,
                                       const ScenarioConfig& config, Rng& rng) {
    std::vector<Vec2> scan;
    const double noise_std = std::sqrt(config.meas_var);
    for (const auto& t : targets) {
        const Vec2 pos(t.state[0], t.state[2]);
        if (rng.uniform() >= detection_prob(field, pos)) continue;
        scan.emplace_back(pos.x() + noise_std * rng.normal(),
                          pos.y() + noise_std * rng.normal());
    }
    const int clutter = rng.poisson(config.clutter_total);
    for (int i = 0; i < clutter; ++i)
        scan.emplace_back(rng.uniform(-config.meas_halfwidth, config.meas_halfwidth),
                          rng.uniform(-config.meas_halfwidth, config.meas_halfwidth));
    for (std::size_t i = scan.size(); i > 1; --i)
        std::swap(scan[i - 1], scan[rng.uniform_index(i)]);
    return scan;
}

inline ScanRecord simulate_scans(const ScenarioConfig& config, const TruthRecord& truth,
                                 std::uint64_t seed) {
    Rng rng(seed, 0x7363616e73ull);
    ScanRecord scans;
    scans.steps.resize(config.duration + 1);
    for (int t = 1; t <= config.duration; ++t)
        scans.steps[t] =
            generate_scan(truth.steps[t], detection_field_at(config, t), config, rng);
    return scans;
}

} // namespace pmb
