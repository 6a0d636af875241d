#pragma once

#include <cmath>
#include <variant>

#include "pmb/linalg.hpp"

namespace pmb {

/// Position-independent probability of detection.
struct ConstantDetection {
    double pd = 0.3;
};

/// Detection probability `pd` inside a closed cone about `heading`
/// (half_angle either side), zero outside. Range-unlimited.
struct ConeDetection {
    Vec2 origin = Vec2::Zero();
    Vec2 heading = Vec2(0.0, -1.0);
    double half_angle = M_PI / 4.0;
    double pd = 0.3;
};

using DetectionField = std::variant<ConstantDetection, ConeDetection>;

inline double detection_prob(const DetectionField& field, const Vec2& position) {
    if (const auto* c = std::get_if<ConstantDetection>(&field)) return c->pd;
    const auto& cone = std::get<ConeDetection>(field);
    const Vec2 to_target = position - cone.origin;
    const double dist = to_target.norm();
    if (dist == 0.0) return cone.pd; // at the sensor: inside by convention
    const double heading_norm = cone.heading.norm();
    if (heading_norm == 0.0) return 0.0;
    const double cos_angle = to_target.dot(cone.heading) / (dist * heading_norm);
    // Closed cone: boundary targets count as inside.
    return cos_angle >= std::cos(cone.half_angle) - 1e-12 ? cone.pd : 0.0;
}

inline double detection_prob(const DetectionField& field, const Vec4& state) {
    return detection_prob(field, Vec2(state[0], state[2]));
}

} // namespace pmb
