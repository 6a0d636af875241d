#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "pmb/common.hpp"
#include "pmb/linalg.hpp"

namespace pmb {

/// Axis-aligned state region [pos_min,pos_max]^2 x [vel_min,vel_max]^2.
struct StateRegion {
    double pos_min = -100.0, pos_max = 100.0;
    double vel_min = -1.0, vel_max = 1.0;

    [[nodiscard]] double pos_extent() const { return pos_max - pos_min; }
    [[nodiscard]] double vel_extent() const { return vel_max - vel_min; }
    [[nodiscard]] double pos_area() const { return sqr(pos_extent()); }
    [[nodiscard]] double vel_area() const { return sqr(vel_extent()); }
    [[nodiscard]] double volume() const { return pos_area() * vel_area(); }
    [[nodiscard]] bool contains_position(const Vec2& p) const {
        return p.x() >= pos_min && p.x() <= pos_max && p.y() >= pos_min && p.y() <= pos_max;
    }
};

/// Uniformly spaced cell centers along one axis.
struct AxisSpec {
    double first = 0.0; // center of cell 0
    double spacing = 1.0;
    int count = 1;

    [[nodiscard]] double center(int i) const { return first + spacing * i; }
    [[nodiscard]] double lo() const { return first - 0.5 * spacing; }
    [[nodiscard]] double hi() const { return center(count - 1) + 0.5 * spacing; }

    /// Cell containing v, or -1 when v lies outside the covered interval.
    [[nodiscard]] int index_of(double v) const {
        const int i = static_cast<int>(std::floor((v - lo()) / spacing));
        return (i < 0 || i >= count) ? -1 : i;
    }

    [[nodiscard]] int clamped_index(double v) const {
        const int i = static_cast<int>(std::floor((v - lo()) / spacing));
        return i < 0 ? 0 : (i >= count ? count - 1 : i);
    }

    /// Fraction of cell i lying inside [min, max].
    [[nodiscard]] double overlap_fraction(int i, double min, double max) const {
        const double a = center(i) - 0.5 * spacing;
        const double b = center(i) + 0.5 * spacing;
        const double w = std::min(b, max) - std::max(a, min);
        return w <= 0.0 ? 0.0 : w / spacing;
    }
};

/// 4-D discretization of the state space: both position axes share one
/// AxisSpec, both velocity axes another. Cells are flattened as
/// ((ix*P + iy)*V + ivx)*V + ivy so the V^2 velocity cells of one position
/// cell are contiguous.
struct GridSpec {
    AxisSpec pos;
    AxisSpec vel;

    struct Cell {
        int ix = 0, iy = 0, ivx = 0, ivy = 0;
    };

    [[nodiscard]] std::uint32_t num_cells() const {
        return static_cast<std::uint32_t>(pos.count) * pos.count * vel.count * vel.count;
    }
    [[nodiscard]] int velocity_block() const { return vel.count * vel.count; }
    [[nodiscard]] double cell_volume() const { return sqr(pos.spacing) * sqr(vel.spacing); }

    [[nodiscard]] std::uint32_t index(int ix, int iy, int ivx, int ivy) const {
        return ((static_cast<std::uint32_t>(ix) * pos.count + iy) * vel.count + ivx) * vel.count +
               ivy;
    }

    [[nodiscard]] Cell decompose(std::uint32_t idx) const {
        Cell c;
        c.ivy = static_cast<int>(idx % vel.count);
        idx /= vel.count;
        c.ivx = static_cast<int>(idx % vel.count);
        idx /= vel.count;
        c.iy = static_cast<int>(idx % pos.count);
        c.ix = static_cast<int>(idx / pos.count);
        return c;
    }

    [[nodiscard]] Vec4 center(std::uint32_t idx) const {
        const Cell c = decompose(idx);
        return {pos.center(c.ix), vel.center(c.ivx), pos.center(c.iy), vel.center(c.ivy)};
    }

    /// Covariance of a uniform density over one cell; used when a
    /// piecewise-constant density is moment-matched to a Gaussian.
    [[nodiscard]] Mat4 cell_extent_cov() const {
        Mat4 m = Mat4::Zero();
        m(0, 0) = m(2, 2) = sqr(pos.spacing) / 12.0;
        m(1, 1) = m(3, 3) = sqr(vel.spacing) / 12.0;
        return m;
    }

    /// Fraction of the 4-D cell inside the region.
    [[nodiscard]] double overlap_fraction(std::uint32_t idx, const StateRegion& r) const {
        const Cell c = decompose(idx);
        return pos.overlap_fraction(c.ix, r.pos_min, r.pos_max) *
               pos.overlap_fraction(c.iy, r.pos_min, r.pos_max) *
               vel.overlap_fraction(c.ivx, r.vel_min, r.vel_max) *
               vel.overlap_fraction(c.ivy, r.vel_min, r.vel_max);
    }

    /// Grid with cell centers spanning the region bounds inclusive; the
    /// spacings must divide the region extents.
    static GridSpec covering(const StateRegion& region, double pos_spacing, double vel_spacing) {
        auto make_axis = [](double min, double max, double spacing) {
            const double steps = (max - min) / spacing;
            require(std::abs(steps - std::llround(steps)) < 1e-9,
                    "GridSpec::covering: spacing must divide the region extent");
            return AxisSpec{min, spacing, static_cast<int>(std::llround(steps)) + 1};
        };
        GridSpec spec;
        spec.pos = make_axis(region.pos_min, region.pos_max, pos_spacing);
        spec.vel = make_axis(region.vel_min, region.vel_max, vel_spacing);
        return spec;
    }

    [[nodiscard]] bool operator==(const GridSpec& o) const {
        return pos.first == o.pos.first && pos.spacing == o.pos.spacing &&
               pos.count == o.pos.count && vel.first == o.vel.first &&
               vel.spacing == o.vel.spacing && vel.count == o.vel.count;
    }
};

} // namespace pmb
