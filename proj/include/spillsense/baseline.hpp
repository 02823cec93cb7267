#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "spillsense/field.hpp"
#include "spillsense/grid.hpp"
#include "spillsense/oil.hpp"

namespace spillsense {

// ---------------------------------------------------------------------------
// Ladder flight plan
// ---------------------------------------------------------------------------

/// Boustrophedon coverage plan over the predicted spill. Legs are stored in
/// serpentine order; `sections` holds the [first, last) leg range assigned to
/// each sensor. When fewer legs than sensors exist, trailing sensors share
/// the nearest leg.
struct LadderPlan {
    std::vector<std::array<Point, 2>> legs;
    std::vector<std::pair<int, int>> sections;
    double swath = 0.0;
    double overlap = 0.10;
    double replan_period = 3600.0;
};

namespace detail {

/// Cross-axis leg offsets covering [lo, hi] with a band of width `swath`
/// around each offset: regular spacing swath*(1 - overlap) plus a closing
/// offset so the far edge is never left uncovered.
inline std::vector<double> ladder_offsets(double lo, double hi, double swath,
                                          double overlap) {
    std::vector<double> out;
    const double width = hi - lo;
    if (width <= swath) {
        out.push_back(0.5 * (lo + hi));
        return out;
    }
    const double spacing = swath * (1.0 - overlap);
    double o = lo + 0.5 * swath;
    while (o + 0.5 * swath < hi - 1e-12) {
        out.push_back(o);
        o += spacing;
    }
    const double closing = hi - 0.5 * swath;
    if (out.empty() || closing - out.back() > 1e-12) out.push_back(closing);
    return out;
}

}  // namespace detail

/// Builds the industry ladder plan over the bounding box of cells whose
/// predicted presence exceeds `presence_floor`, padded by half a cell so the
/// box covers cell areas. Legs run along the longer box axis with spacing
/// swath*(1 - overlap); the ordered leg list is split into `n_p` contiguous
/// sections of near-equal leg count. An empty prediction collapses the box
/// to one swath centered on the release point.
inline LadderPlan generate_ladder(const ScalarField& predicted, Point release,
                                  double swath, double overlap, int n_p,
                                  double presence_floor = 0.01) {
    if (swath <= 0.0) throw ConfigError("generate_ladder: swath must be positive");
    if (overlap < 0.0 || overlap >= 1.0)
        throw ConfigError("generate_ladder: overlap must lie in [0, 1)");
    if (n_p < 1) throw ConfigError("generate_ladder: need at least one sensor");

    const GridSpec& g = *predicted.grid();
    double xlo = std::numeric_limits<double>::infinity();
    double xhi = -xlo, ylo = xlo, yhi = -xlo;
    bool any = false;
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            if (g.is_land(i, j)) continue;
            if (predicted.at(i, j) <= presence_floor) continue;
            Point c = g.cell_center(i, j);
            xlo = std::min(xlo, c.x - 0.5 * g.dx());
            xhi = std::max(xhi, c.x + 0.5 * g.dx());
            ylo = std::min(ylo, c.y - 0.5 * g.dy());
            yhi = std::max(yhi, c.y + 0.5 * g.dy());
            any = true;
        }
    if (!any) {
        xlo = release.x - 0.5 * swath;
        xhi = release.x + 0.5 * swath;
        ylo = release.y - 0.5 * swath;
        yhi = release.y + 0.5 * swath;
    }

    LadderPlan plan;
    plan.swath = swath;
    plan.overlap = overlap;
    const bool along_x = (xhi - xlo) >= (yhi - ylo);
    const double cross_lo = along_x ? ylo : xlo;
    const double cross_hi = along_x ? yhi : xhi;
    const double run_lo = along_x ? xlo : ylo;
    const double run_hi = along_x ? xhi : yhi;
    const std::vector<double> offsets =
        detail::ladder_offsets(cross_lo, cross_hi, swath, overlap);
    for (std::size_t k = 0; k < offsets.size(); ++k) {
        double a = (k % 2 == 0) ? run_lo : run_hi;
        double b = (k % 2 == 0) ? run_hi : run_lo;
        if (along_x)
            plan.legs.push_back({Point{a, offsets[k]}, Point{b, offsets[k]}});
        else
            plan.legs.push_back({Point{offsets[k], a}, Point{offsets[k], b}});
    }

    const int n_legs = static_cast<int>(plan.legs.size());
    for (int s = 0; s < n_p; ++s) {
        int first = s * n_legs / n_p;
        int last = (s + 1) * n_legs / n_p;
        if (last <= first) {
            first = std::min(first, n_legs - 1);
            last = first + 1;
        }
        plan.sections.emplace_back(first, last);
    }
    return plan;
}

/// Serpentine polyline traversed by the sensor owning section `s`: the legs
/// of the section in order, joined by the cross-axis hops between them.
inline std::vector<Point> section_polyline(const LadderPlan& plan, int s) {
    if (s < 0 || s >= static_cast<int>(plan.sections.size()))
        throw ConfigError("section_polyline: section index out of range");
    std::vector<Point> out;
    auto [first, last] = plan.sections[static_cast<std::size_t>(s)];
    for (int k = first; k < last; ++k) {
        out.push_back(plan.legs[static_cast<std::size_t>(k)][0]);
        out.push_back(plan.legs[static_cast<std::size_t>(k)][1]);
    }
    return out;
}

/// Total arc length of one section's polyline.
inline double section_length(const LadderPlan& plan, int s) {
    std::vector<Point> poly = section_polyline(plan, s);
    double len = 0.0;
    for (std::size_t k = 1; k < poly.size(); ++k)
        len += distance(poly[k - 1], poly[k]);
    return len;
}

/// Positions of all sensors at elapsed time `t`: each flies its section at
/// `v_max` in arc-length parameterization and wraps back to the section
/// start upon completion.
inline std::vector<Point> follow_path(const LadderPlan& plan, double v_max,
                                      double t) {
    if (plan.legs.empty() || plan.sections.empty())
        throw ConfigError("follow_path: empty plan");
    if (v_max < 0.0) throw ConfigError("follow_path: speed must be nonnegative");
    std::vector<Point> out;
    out.reserve(plan.sections.size());
    for (int s = 0; s < static_cast<int>(plan.sections.size()); ++s) {
        std::vector<Point> poly = section_polyline(plan, s);
        double len = 0.0;
        for (std::size_t k = 1; k < poly.size(); ++k)
            len += distance(poly[k - 1], poly[k]);
        if (len <= 0.0) {
            out.push_back(poly.front());
            continue;
        }
        const double total = v_max * t;
        double arc = std::fmod(total, len);
        if (arc < 0.0) arc += len;
        if (arc == 0.0 && total > 0.0) arc = len;  // completion reaches the end

        Point pos = poly.front();
        for (std::size_t k = 1; k < poly.size(); ++k) {
            double seg = distance(poly[k - 1], poly[k]);
            if (arc <= seg || k + 1 == poly.size()) {
                double f = seg > 0.0 ? std::min(arc / seg, 1.0) : 0.0;
                Vec2 d = poly[k] - poly[k - 1];
                pos = poly[k - 1] + f * d;
                break;
            }
            arc -= seg;
        }
        out.push_back(pos);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Value-replacement feedback
// ---------------------------------------------------------------------------

enum class VelocityUpdate { kNone, kReplaceInPlace };

struct ValueReplacementPolicy {
    VelocityUpdate velocity_update = VelocityUpdate::kReplaceInPlace;
};

/// One sensor reading over a single cell.
struct Measurement {
    CellIndex cell{};
    bool oil_present = false;
    Vec2 velocity{};
};

/// Overwrites the model's oil presence in the measured cells: clear-water
/// readings deactivate every particle in the cell, oil readings over an
/// empty cell seed one particle of mean active volume at the cell center.
/// Cells outside the measurement set are untouched.
inline void value_replace_oil(ParticleEnsemble& ens, const GridSpec& g,
                              const std::vector<Measurement>& measurements) {
    for (const Measurement& m : measurements) {
        std::vector<std::size_t> in_cell;
        for (std::size_t k = 0; k < ens.particles.size(); ++k) {
            const OilParticle& p = ens.particles[k];
            if (!p.active) continue;
            if (!g.in_bounding_box(p.position)) continue;
            CellIndex c = g.locate(p.position);
            if (c.i == m.cell.i && c.j == m.cell.j) in_cell.push_back(k);
        }
        if (!m.oil_present) {
            for (std::size_t k : in_cell) ens.particles[k].active = false;
        } else if (in_cell.empty() && !g.is_land(m.cell.i, m.cell.j)) {
            double mean_vol = 0.0;
            std::size_t n_active = ens.active_count();
            if (n_active > 0) {
                mean_vol = ens.active_volume() / static_cast<double>(n_active);
            } else if (!ens.particles.empty()) {
                mean_vol = ens.total_volume() /
                           static_cast<double>(ens.particles.size());
            }
            ens.particles.push_back(
                {g.cell_center(m.cell.i, m.cell.j), mean_vol, true});
        }
    }
}

/// Overwrites the local current with the observed values in measured cells.
inline void value_replace_velocity(VectorField& velocity,
                                   const std::vector<Measurement>& measurements) {
    for (const Measurement& m : measurements) {
        velocity.u.at(m.cell.i, m.cell.j) = m.velocity.u;
        velocity.v.at(m.cell.i, m.cell.j) = m.velocity.v;
    }
}

/// Applies value replacement to every realization and, when the policy asks
/// for it, to the shared velocity field. No reduced-order assimilation runs.
inline void value_replace(std::vector<ParticleEnsemble>& realizations,
                          VectorField& velocity,
                          const std::vector<Measurement>& measurements,
                          const ValueReplacementPolicy& policy) {
    const GridSpec& g = *velocity.u.grid();
    for (ParticleEnsemble& ens : realizations)
        value_replace_oil(ens, g, measurements);
    if (policy.velocity_update == VelocityUpdate::kReplaceInPlace)
        value_replace_velocity(velocity, measurements);
}

}  // namespace spillsense
