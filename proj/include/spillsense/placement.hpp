#pragma once

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <vector>

#include "spillsense/field.hpp"
#include "spillsense/grid.hpp"
#include "spillsense/uncertainty.hpp"

namespace spillsense {

// ---------------------------------------------------------------------------
// Weighting field
// ---------------------------------------------------------------------------

struct WeightingConfig {
    double k_pov = 1.0;
    double k_se = 1.0;
    double k_pdmd = 1.0;
    double k_domain = 1.0;

    double k_t() const { return k_pov + k_se + k_pdmd + k_domain; }
};

/// Convex combination of the oil-presence, entropy and sensing-location
/// weights with a uniform domain floor, normalized by the weight sum.
inline ScalarField weighting_field(const ScalarField& pov, const ScalarField& se,
                                   const ScalarField& pdmd,
                                   const WeightingConfig& cfg) {
    require_same_grid(pov, se);
    require_same_grid(pov, pdmd);
    const double kt = cfg.k_t();
    if (kt <= 0.0) throw ConfigError("weighting_field: weight sum must be positive");
    if (cfg.k_pov < 0.0 || cfg.k_se < 0.0 || cfg.k_pdmd < 0.0 || cfg.k_domain < 0.0)
        throw ConfigError("weighting_field: weights must be nonnegative");
    const GridSpec& g = *pov.grid();
    ScalarField e(pov.grid());
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            if (g.is_land(i, j)) continue;
            e.at(i, j) = (cfg.k_pov * pov.at(i, j) + cfg.k_se * se.at(i, j) +
                          cfg.k_pdmd * pdmd.at(i, j) + cfg.k_domain) /
                         kt;
        }
    return e;
}

// ---------------------------------------------------------------------------
// Smooth sensor footprint (used for differentiation; the simulation keeps
// the hard sensing disk)
// ---------------------------------------------------------------------------

namespace detail {

constexpr double kBumpFloor = 3.3546262790251185e-4;  // exp(-8)

inline double bump_value(double d, double r) {
    if (d >= 2.0 * r) return 0.0;
    const double sigma2 = 0.25 * r * r;
    return (std::exp(-d * d / (2.0 * sigma2)) - kBumpFloor) / (1.0 - kBumpFloor);
}

// d(bump)/dd divided by d; finite at d = 0.
inline double bump_slope_over_d(double d, double r) {
    if (d >= 2.0 * r) return 0.0;
    const double sigma2 = 0.25 * r * r;
    return -std::exp(-d * d / (2.0 * sigma2)) / (sigma2 * (1.0 - kBumpFloor));
}

}  // namespace detail

/// Union of smooth per-sensor bumps: w = 1 - prod(1 - b_i).
inline ScalarField footprint_union(const std::vector<Point>& positions,
                                   GridPtr grid, double r) {
    const GridSpec& g = *grid;
    ScalarField w(grid);
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            Point c = g.cell_center(i, j);
            double miss = 1.0;
            for (const Point& p : positions)
                miss *= 1.0 - detail::bump_value(distance(p, c), r);
            w.at(i, j) = 1.0 - miss;
        }
    return w;
}

// ---------------------------------------------------------------------------
// Penalty function c = V + D_m + D_e
// ---------------------------------------------------------------------------

struct PenaltyParams {
    double reach_budget = 0.0;  // v_sensor * window duration
    double r = 0.0;             // sensing radius (grace distance for D_m)
    const ScalarField* no_fly = nullptr;
};

struct PenaltyResult {
    double total = 0.0;
    std::vector<double> per_sensor;
    std::vector<Vec2> gradient;
};

namespace detail {

inline bool permissible_cell(const GridSpec& g, const ScalarField* no_fly, int i,
                             int j) {
    if (g.is_land(i, j)) return false;
    if (no_fly && !no_fly->empty() && no_fly->at(i, j) > 0.0) return false;
    return true;
}

inline bool nearest_cell_center(const GridSpec& g, const Point& p,
                                const std::vector<Point>& centers, Point* out) {
    if (centers.empty()) return false;
    double best = std::numeric_limits<double>::infinity();
    for (const Point& c : centers) {
        double d = distance(p, c);
        if (d < best) {
            best = d;
            *out = c;
        }
    }
    return true;
}

}  // namespace detail

/// Reachability, interest-proximity and exclusion penalties with their
/// analytic position gradients. The interest set is frozen with respect to
/// differentiation.
inline PenaltyResult penalty(const std::vector<Point>& positions,
                             const std::vector<Point>& start,
                             const ScalarField& interest, const GridSpec& g,
                             const PenaltyParams& params) {
    if (positions.size() != start.size())
        throw ConfigError("penalty: positions and start counts differ");
    std::vector<Point> interest_cells;
    std::vector<Point> open_cells;
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            if (detail::permissible_cell(g, params.no_fly, i, j))
                open_cells.push_back(g.cell_center(i, j));
            if (!g.is_land(i, j) && interest.at(i, j) > 0.0)
                interest_cells.push_back(g.cell_center(i, j));
        }

    PenaltyResult out;
    out.per_sensor.assign(positions.size(), 0.0);
    out.gradient.assign(positions.size(), Vec2{0.0, 0.0});
    for (std::size_t n = 0; n < positions.size(); ++n) {
        const Point& p = positions[n];
        if (!g.in_bounding_box(p))
            throw OutOfDomainError("penalty: sensor position outside the domain");
        double value = 0.0;
        Vec2 grad{0.0, 0.0};

        double d0 = distance(p, start[n]);
        double over = d0 - params.reach_budget;
        if (over > 0.0) {
            value += over * over;
            grad.u += 2.0 * over * (p.x - start[n].x) / d0;
            grad.v += 2.0 * over * (p.y - start[n].y) / d0;
        }

        Point near{0.0, 0.0};
        if (detail::nearest_cell_center(g, p, interest_cells, &near)) {
            double dm = distance(p, near);
            if (dm > params.r) {
                value += dm;
                grad.u += (p.x - near.x) / dm;
                grad.v += (p.y - near.y) / dm;
            }
        }

        CellIndex cell = g.locate(p);
        if (!detail::permissible_cell(g, params.no_fly, cell.i, cell.j)) {
            if (!detail::nearest_cell_center(g, p, open_cells, &near))
                throw ConfigError("penalty: domain has no permissible cells");
            double de = distance(p, near);
            if (de > 0.0) {
                value += de;
                grad.u += (p.x - near.x) / de;
                grad.v += (p.y - near.y) / de;
            }
        }

        out.per_sensor[n] = value;
        out.gradient[n] = grad;
        out.total += value;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Planning rollout
// ---------------------------------------------------------------------------

struct PlanningScenario {
    GridPtr grid;
    VectorField velocity;
    ScalarField weighting;  // E, zero on land
    VarianceSources sources_x;
    VarianceSources sources_y;
    UncertaintyParams params;
    UncertaintyState init;
    std::vector<Point> start;
    double dt = 60.0;
    int n_steps = 15;
    double k_pen = 1.0;
    const ScalarField* no_fly = nullptr;

    double window_duration() const { return dt * n_steps; }
};

struct CostBreakdown {
    double total = 0.0;
    double uncertainty = 0.0;
    double penalty = 0.0;
    std::vector<double> per_step;
};

struct Rollout {
    std::vector<Point> positions;
    std::vector<ScalarField> var_x, var_y, q;  // n_steps + 1 entries each
    std::vector<ScalarField> dvx, dvy;         // n_steps entries
    ScalarField footprint;                     // smooth w for the window
    CostBreakdown cost;
    PenaltyResult pen;
};

/// Forward window rollout: the uncertainty system stepped with the smooth
/// footprint held fixed, the E-weighted q^2 integral accumulated per step,
/// and the penalty charged once over the window duration.
inline Rollout rollout_window(const std::vector<Point>& positions,
                              const PlanningScenario& scn) {
    const GridSpec& g = *scn.grid;
    if (positions.size() != scn.start.size())
        throw ConfigError("rollout_window: sensor count mismatch");
    for (const Point& p : positions)
        if (!g.in_bounding_box(p))
            throw OutOfDomainError("rollout_window: sensor outside the domain");

    Rollout r;
    r.positions = positions;
    r.footprint = footprint_union(positions, scn.grid, scn.params.r);
    r.var_x.push_back(scn.init.var_x);
    r.var_y.push_back(scn.init.var_y);
    r.q.push_back(scn.init.q);

    const double cell_area = g.dx() * g.dy();
    for (int k = 0; k < scn.n_steps; ++k) {
        ScalarField vx_new = step_variance(r.var_x.back(), scn.velocity,
                                           r.footprint, scn.sources_x,
                                           scn.params, scn.dt);
        ScalarField vy_new = step_variance(r.var_y.back(), scn.velocity,
                                           r.footprint, scn.sources_y,
                                           scn.params, scn.dt);
        ScalarField dvx(scn.grid), dvy(scn.grid);
        for (std::size_t c = 0; c < dvx.size(); ++c) {
            dvx[c] = (vx_new[c] - r.var_x.back()[c]) / scn.dt;
            dvy[c] = (vy_new[c] - r.var_y.back()[c]) / scn.dt;
        }
        ScalarField q_new = step_tracer(r.q.back(), r.var_x.back(), r.var_y.back(),
                                        dvx, dvy, scn.params, scn.dt);

        double j_step = 0.0;
        for (int j = 0; j < g.ny(); ++j)
            for (int i = 0; i < g.nx(); ++i) {
                if (g.is_land(i, j)) continue;
                double qv = q_new.at(i, j);
                j_step += scn.weighting.at(i, j) * qv * qv;
            }
        j_step *= cell_area * scn.dt;
        r.cost.per_step.push_back(j_step);
        r.cost.uncertainty += j_step;

        r.var_x.push_back(std::move(vx_new));
        r.var_y.push_back(std::move(vy_new));
        r.q.push_back(std::move(q_new));
        r.dvx.push_back(std::move(dvx));
        r.dvy.push_back(std::move(dvy));
    }

    ScalarField interest(scn.grid);
    for (std::size_t c = 0; c < interest.size(); ++c)
        interest[c] = scn.weighting[c] * scn.init.q[c];
    PenaltyParams pp;
    pp.reach_budget = scn.params.v_sensor * scn.window_duration();
    pp.r = scn.params.r;
    pp.no_fly = scn.no_fly;
    r.pen = penalty(positions, scn.start, interest, g, pp);
    r.cost.penalty = scn.k_pen * r.pen.total * scn.window_duration();
    r.cost.total = r.cost.uncertainty + r.cost.penalty;
    return r;
}

inline CostBreakdown evaluate_cost(const std::vector<Point>& positions,
                                   const PlanningScenario& scn) {
    return rollout_window(positions, scn).cost;
}

// ---------------------------------------------------------------------------
// Discrete adjoint of the rollout
// ---------------------------------------------------------------------------

struct AdjointSolution {
    std::vector<ScalarField> lvx, lvy, lq;  // cotangents per stored state
    ScalarField lambda_w;                   // cotangent of the footprint
};

/// Backward-in-time sweep over the stored rollout: exact transposition of
/// the forward stepping, including the relu and clamp gates, accumulating
/// the footprint cotangent for the position gradient.
inline AdjointSolution solve_adjoint(const Rollout& r,
                                     const PlanningScenario& scn) {
    const GridSpec& g = *scn.grid;
    const int n = scn.n_steps;
    const double dx = g.dx(), dy = g.dy();
    const double k2 = scn.params.k_chi * scn.params.k_chi;
    const double cell_area = dx * dy;

    AdjointSolution adj;
    adj.lvx.assign(n + 1, ScalarField(scn.grid));
    adj.lvy.assign(n + 1, ScalarField(scn.grid));
    adj.lq.assign(n + 1, ScalarField(scn.grid));
    adj.lambda_w = ScalarField(scn.grid);

    auto reverse_var = [&](const ScalarField& lam_out, const ScalarField& out,
                           ScalarField& lam_in) {
        for (int j = 0; j < g.ny(); ++j)
            for (int i = 0; i < g.nx(); ++i) {
                if (g.is_land(i, j)) continue;
                double lo = lam_out.at(i, j);
                if (lo == 0.0) continue;
                if (out.at(i, j) <= 0.0) continue;  // relu inactive
                double keep =
                    std::max(1.0 - scn.params.k_s * r.footprint.at(i, j), 0.0);
                double lam_upd = keep * lo;
                double updated = out.at(i, j) / keep;
                adj.lambda_w.at(i, j) += -scn.params.k_s * updated * lo;

                double u = scn.velocity.u.at(i, j), v = scn.velocity.v.at(i, j);
                double nu = scn.params.nu;
                double coef_c = 1.0 + scn.dt * (-(u > 0.0 ? u / dx : -u / dx) -
                                                (v > 0.0 ? v / dy : -v / dy) -
                                                2.0 * nu / (dx * dx) -
                                                2.0 * nu / (dy * dy));
                double coef_l = scn.dt * ((u > 0.0 ? u / dx : 0.0) + nu / (dx * dx));
                double coef_r = scn.dt * ((u > 0.0 ? 0.0 : -u / dx) + nu / (dx * dx));
                double coef_d = scn.dt * ((v > 0.0 ? v / dy : 0.0) + nu / (dy * dy));
                double coef_u = scn.dt * ((v > 0.0 ? 0.0 : -v / dy) + nu / (dy * dy));
                auto scatter = [&](int a, int b, double coef) {
                    int ii = std::clamp(a, 0, g.nx() - 1);
                    int jj = std::clamp(b, 0, g.ny() - 1);
                    if (!g.is_land(ii, jj)) lam_in.at(ii, jj) += coef * lam_upd;
                };
                scatter(i, j, coef_c);
                scatter(i - 1, j, coef_l);
                scatter(i + 1, j, coef_r);
                scatter(i, j - 1, coef_d);
                scatter(i, j + 1, coef_u);
            }
    };

    for (int k = n - 1; k >= 0; --k) {
        for (int j = 0; j < g.ny(); ++j)
            for (int i = 0; i < g.nx(); ++i) {
                if (g.is_land(i, j)) continue;
                adj.lq[k + 1].at(i, j) += 2.0 * scn.weighting.at(i, j) *
                                          r.q[k + 1].at(i, j) * cell_area * scn.dt;
            }
        for (int j = 0; j < g.ny(); ++j)
            for (int i = 0; i < g.nx(); ++i) {
                if (g.is_land(i, j)) continue;
                double vx0 = r.var_x[k].at(i, j), vy0 = r.var_y[k].at(i, j);
                double dqx = r.dvx[k].at(i, j), dqy = r.dvy[k].at(i, j);
                double pre = r.q[k].at(i, j) +
                             scn.dt * k2 * (vx0 * dqy + vy0 * dqx);
                if (pre <= 0.0 || pre >= 1.0) continue;  // clamp active
                double lam = adj.lq[k + 1].at(i, j);
                if (lam == 0.0) continue;
                double delta_x = scn.dt * dqx, delta_y = scn.dt * dqy;
                adj.lq[k].at(i, j) += lam;
                adj.lvx[k + 1].at(i, j) += k2 * vy0 * lam;
                adj.lvy[k + 1].at(i, j) += k2 * vx0 * lam;
                adj.lvx[k].at(i, j) += k2 * (delta_y - vy0) * lam;
                adj.lvy[k].at(i, j) += k2 * (delta_x - vx0) * lam;
            }
        reverse_var(adj.lvx[k + 1], r.var_x[k + 1], adj.lvx[k]);
        reverse_var(adj.lvy[k + 1], r.var_y[k + 1], adj.lvy[k]);
    }
    for (const auto& fields : {adj.lvx, adj.lvy, adj.lq})
        for (const auto& f : fields)
            if (!f.all_finite())
                throw NumericalError("solve_adjoint: non-finite adjoint state");
    return adj;
}

/// Total position gradient: the footprint chain rule plus the analytic
/// penalty gradient scaled by the window duration.
inline std::vector<Vec2> gradient(const AdjointSolution& adj, const Rollout& r,
                                  const PlanningScenario& scn) {
    const GridSpec& g = *scn.grid;
    const std::size_t n_p = r.positions.size();
    std::vector<Vec2> grad(n_p, Vec2{0.0, 0.0});
    for (std::size_t n = 0; n < n_p; ++n) {
        grad[n].u = scn.k_pen * r.pen.gradient[n].u * scn.window_duration();
        grad[n].v = scn.k_pen * r.pen.gradient[n].v * scn.window_duration();
    }

    std::vector<double> b(n_p);
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            if (g.is_land(i, j)) continue;
            double lw = adj.lambda_w.at(i, j);
            if (lw == 0.0) continue;
            Point c = g.cell_center(i, j);
            for (std::size_t m = 0; m < n_p; ++m)
                b[m] = detail::bump_value(distance(r.positions[m], c),
                                          scn.params.r);
            for (std::size_t m = 0; m < n_p; ++m) {
                double others = 1.0;
                for (std::size_t o = 0; o < n_p; ++o)
                    if (o != m) others *= 1.0 - b[o];
                double d = distance(r.positions[m], c);
                double slope = detail::bump_slope_over_d(d, scn.params.r);
                if (slope == 0.0) continue;
                grad[m].u += lw * others * slope * (r.positions[m].x - c.x);
                grad[m].v += lw * others * slope * (r.positions[m].y - c.y);
            }
        }
    return grad;
}

// ---------------------------------------------------------------------------
// Initialization from the empty-fleet rollout
// ---------------------------------------------------------------------------

/// Highest strict 8-neighbor local maxima of the interest field, padded at
/// the global maximum with one-cell offsets when too few peaks exist.
inline std::vector<Point> initial_positions(const ScalarField& field, int n_p) {
    if (n_p < 1) throw ConfigError("initial_positions: need at least one sensor");
    const GridSpec& g = *field.grid();

    struct Peak {
        double value;
        std::size_t index;
        int i, j;
    };
    std::vector<Peak> peaks;
    bool any_nonzero = false;
    double best_value = -std::numeric_limits<double>::infinity();
    int best_i = -1, best_j = -1;
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            if (g.is_land(i, j)) continue;
            double v = field.at(i, j);
            if (v != 0.0) any_nonzero = true;
            if (v > best_value) {
                best_value = v;
                best_i = i;
                best_j = j;
            }
            bool strict = true;
            for (int dj = -1; dj <= 1 && strict; ++dj)
                for (int di = -1; di <= 1 && strict; ++di) {
                    if (di == 0 && dj == 0) continue;
                    int ni = i + di, nj = j + dj;
                    if (ni < 0 || nj < 0 || ni >= g.nx() || nj >= g.ny()) continue;
                    if (g.is_land(ni, nj)) continue;
                    if (field.at(ni, nj) >= v) strict = false;
                }
            if (strict) peaks.push_back({v, g.idx(i, j), i, j});
        }
    if (best_i < 0) throw ConfigError("initial_positions: no water cells");

    std::vector<Point> out;
    if (!any_nonzero) {
        std::cerr << "initial_positions: interest field is all zero, "
                     "falling back to the domain centroid\n";
        Point centroid{0.0, 0.0};
        std::size_t count = 0;
        for (int j = 0; j < g.ny(); ++j)
            for (int i = 0; i < g.nx(); ++i) {
                if (g.is_land(i, j)) continue;
                Point c = g.cell_center(i, j);
                centroid.x += c.x;
                centroid.y += c.y;
                ++count;
            }
        centroid.x /= static_cast<double>(count);
        centroid.y /= static_cast<double>(count);
        CellIndex cell = g.locate(centroid);
        best_i = cell.i;
        best_j = cell.j;
        if (g.is_land(best_i, best_j)) {
            double best = std::numeric_limits<double>::infinity();
            for (int j = 0; j < g.ny(); ++j)
                for (int i = 0; i < g.nx(); ++i) {
                    if (g.is_land(i, j)) continue;
                    double d = distance(g.cell_center(i, j), centroid);
                    if (d < best) {
                        best = d;
                        best_i = i;
                        best_j = j;
                    }
                }
        }
        peaks.clear();
    } else {
        std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
            if (a.value != b.value) return a.value > b.value;
            return a.index < b.index;
        });
        for (const Peak& p : peaks) {
            if (static_cast<int>(out.size()) == n_p) break;
            out.push_back(g.cell_center(p.i, p.j));
        }
    }

    // Pad remaining sensors around the global maximum in a growing ring.
    int radius = 1;
    int placed_in_ring = 0;
    std::vector<CellIndex> ring;
    auto rebuild_ring = [&]() {
        ring.clear();
        for (int dj = -radius; dj <= radius; ++dj)
            for (int di = -radius; di <= radius; ++di) {
                if (std::max(std::abs(di), std::abs(dj)) != radius) continue;
                int ni = best_i + di, nj = best_j + dj;
                if (ni < 0 || nj < 0 || ni >= g.nx() || nj >= g.ny()) continue;
                if (g.is_land(ni, nj)) continue;
                ring.push_back({ni, nj});
            }
        placed_in_ring = 0;
    };
    bool seeded = !out.empty();
    if (seeded) rebuild_ring();
    while (static_cast<int>(out.size()) < n_p) {
        if (!seeded) {
            out.push_back(g.cell_center(best_i, best_j));
            seeded = true;
            rebuild_ring();
            continue;
        }
        if (placed_in_ring >= static_cast<int>(ring.size())) {
            ++radius;
            if (radius > g.nx() + g.ny()) {
                out.push_back(g.cell_center(best_i, best_j));
                continue;
            }
            rebuild_ring();
            continue;
        }
        CellIndex c = ring[static_cast<std::size_t>(placed_in_ring++)];
        out.push_back(g.cell_center(c.i, c.j));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Armijo-Goldstein descent
// ---------------------------------------------------------------------------

struct DescentConfig {
    double zeta_g = 1e-3;
    int max_iters = 100;
    double c1 = 1e-4;
    double backtrack = 0.5;
    int max_halvings = 30;
};

struct DescentResult {
    std::vector<Point> positions;
    CostBreakdown cost;
    std::vector<double> accepted_costs;
    int iterations = 0;
    bool converged = false;
    bool stalled = false;
};

/// Gradient descent with per-sensor step sizes initialized to move one cell
/// width, shared halving backtracking under the Armijo condition, and a
/// max-norm gradient stopping rule.
template <class CostFn, class GradFn, class ClampFn>
DescentResult descend(std::vector<Point> p, CostFn&& cost, GradFn&& grad,
                      const DescentConfig& cfg, double cell_width,
                      ClampFn&& clamp) {
    if (cfg.c1 <= 0.0 || cfg.c1 >= 1.0 || cfg.backtrack <= 0.0 ||
        cfg.backtrack >= 1.0)
        throw ConfigError("descend: invalid line-search parameters");
    DescentResult res;
    p = clamp(p);
    res.cost = cost(p);
    res.accepted_costs.push_back(res.cost.total);

    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        std::vector<Vec2> dj = grad(p);
        double gmax = 0.0;
        for (const Vec2& gn : dj)
            gmax = std::max({gmax, std::abs(gn.u), std::abs(gn.v)});
        if (gmax < cfg.zeta_g) {
            res.converged = true;
            break;
        }

        std::vector<double> gamma(p.size());
        double decrement = 0.0;
        for (std::size_t n = 0; n < p.size(); ++n) {
            double gn = std::hypot(dj[n].u, dj[n].v);
            gamma[n] = gn > 0.0 ? cell_width / gn : 0.0;
        }

        bool accepted = false;
        for (int h = 0; h <= cfg.max_halvings; ++h) {
            std::vector<Point> trial(p.size());
            decrement = 0.0;
            for (std::size_t n = 0; n < p.size(); ++n) {
                trial[n] = {p[n].x - gamma[n] * dj[n].u,
                            p[n].y - gamma[n] * dj[n].v};
                decrement += gamma[n] * (dj[n].u * dj[n].u + dj[n].v * dj[n].v);
            }
            trial = clamp(trial);
            CostBreakdown trial_cost = cost(trial);
            if (trial_cost.total <= res.cost.total - cfg.c1 * decrement) {
                p = std::move(trial);
                res.cost = std::move(trial_cost);
                res.accepted_costs.push_back(res.cost.total);
                ++res.iterations;
                accepted = true;
                break;
            }
            for (double& gm : gamma) gm *= cfg.backtrack;
        }
        if (!accepted) {
            res.stalled = true;
            break;
        }
    }
    res.positions = std::move(p);
    return res;
}

// ---------------------------------------------------------------------------
// Scenario-bound optimization and receding-horizon planning
// ---------------------------------------------------------------------------

namespace detail {

inline Point clamp_to_box(const GridSpec& g, Point p) {
    const double inset = 1e-9 * std::min(g.dx(), g.dy());
    const double x_lo = g.origin().x - 0.5 * g.dx() + inset;
    const double x_hi = g.origin().x + (g.nx() - 0.5) * g.dx() - inset;
    const double y_lo = g.origin().y - 0.5 * g.dy() + inset;
    const double y_hi = g.origin().y + (g.ny() - 0.5) * g.dy() - inset;
    return {std::clamp(p.x, x_lo, x_hi), std::clamp(p.y, y_lo, y_hi)};
}

inline Point nearest_permissible_center(const GridSpec& g,
                                        const ScalarField* no_fly, Point p) {
    double best = std::numeric_limits<double>::infinity();
    Point out = p;
    bool found = false;
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            if (!permissible_cell(g, no_fly, i, j)) continue;
            double d = distance(g.cell_center(i, j), p);
            if (d < best) {
                best = d;
                out = g.cell_center(i, j);
                found = true;
            }
        }
    if (!found) throw ConfigError("no permissible cells in the domain");
    return out;
}

}  // namespace detail

/// Projection onto the feasible set: bounding box, reachable disk around the
/// start position, then permissible (non-land, non-excluded) cells.
inline std::vector<Point> clamp_feasible(const std::vector<Point>& positions,
                                         const std::vector<Point>& start,
                                         const GridSpec& g, double budget,
                                         const ScalarField* no_fly) {
    std::vector<Point> out(positions.size());
    for (std::size_t n = 0; n < positions.size(); ++n) {
        Point p = detail::clamp_to_box(g, positions[n]);
        double d = distance(p, start[n]);
        if (d > budget && d > 0.0) {
            double s = budget / d;
            p = {start[n].x + s * (p.x - start[n].x),
                 start[n].y + s * (p.y - start[n].y)};
        }
        CellIndex cell = g.locate(p);
        if (!detail::permissible_cell(g, no_fly, cell.i, cell.j))
            p = detail::nearest_permissible_center(g, no_fly, p);
        out[n] = p;
    }
    return out;
}

/// One planning-window optimization: adjoint-based gradients of the window
/// rollout under the feasibility projection.
inline DescentResult optimize_window(const PlanningScenario& scn,
                                     const std::vector<Point>& p0,
                                     const DescentConfig& cfg) {
    const GridSpec& g = *scn.grid;
    const double budget = scn.params.v_sensor * scn.window_duration();
    auto cost_fn = [&](const std::vector<Point>& p) {
        return evaluate_cost(p, scn);
    };
    auto grad_fn = [&](const std::vector<Point>& p) {
        Rollout r = rollout_window(p, scn);
        AdjointSolution adj = solve_adjoint(r, scn);
        return gradient(adj, r, scn);
    };
    auto clamp_fn = [&](const std::vector<Point>& p) {
        return clamp_feasible(p, scn.start, g, budget, scn.no_fly);
    };
    return descend(p0, cost_fn, grad_fn, cfg, std::min(g.dx(), g.dy()),
                   clamp_fn);
}

/// Advance a committed waypoint from the previous position toward a target
/// at bounded travel, snapping to a reachable permissible cell if required.
inline Point commit_waypoint(const GridSpec& g, const ScalarField* no_fly,
                             const Point& prev, const Point& target,
                             double budget) {
    Vec2 delta{target.x - prev.x, target.y - prev.y};
    double d = std::hypot(delta.u, delta.v);
    Point p = target;
    if (d > budget && d > 0.0) {
        double s = budget / d;
        p = {prev.x + s * delta.u, prev.y + s * delta.v};
    }
    p = detail::clamp_to_box(g, p);
    CellIndex cell = g.locate(p);
    if (detail::permissible_cell(g, no_fly, cell.i, cell.j)) return p;

    double best = std::numeric_limits<double>::infinity();
    Point out = prev;
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            if (!detail::permissible_cell(g, no_fly, i, j)) continue;
            Point c = g.cell_center(i, j);
            if (distance(c, prev) > budget) continue;
            double dt_target = distance(c, target);
            if (dt_target < best) {
                best = dt_target;
                out = c;
            }
        }
    return out;
}

struct HorizonChain {
    int horizon = 0;
    double total = 0.0;
    std::vector<std::vector<Point>> waypoints;
    bool stalled = false;
};

struct PlanResult {
    std::vector<Point> committed;
    int chosen_horizon = 0;
    std::vector<HorizonChain> chains;
    bool all_stalled = false;
};

/// Parallel horizon chains: each horizon h covers the common span in
/// windows of h planning steps, chaining window optimizations; the chain
/// with the lowest summed cost wins and only its first waypoint is
/// committed (clamped to one planning step of travel).
inline PlanResult plan_receding_horizon(const PlanningScenario& base,
                                        const std::vector<int>& horizons,
                                        const DescentConfig& cfg) {
    if (horizons.empty())
        throw ConfigError("plan_receding_horizon: need at least one horizon");
    for (int h : horizons)
        if (h < 1) throw ConfigError("plan_receding_horizon: horizons must be >= 1");
    const int common = *std::max_element(horizons.begin(), horizons.end());

    PlanResult out;
    for (int h : horizons) {
        HorizonChain chain;
        chain.horizon = h;
        PlanningScenario scn = base;
        std::vector<Point> pos = base.start;
        int remaining = common;
        while (remaining > 0) {
            int span = std::min(h, remaining);
            scn.n_steps = base.n_steps * span;
            scn.start = pos;
            DescentResult res = optimize_window(scn, pos, cfg);
            Rollout roll = rollout_window(res.positions, scn);
            chain.total += roll.cost.total;
            chain.stalled = chain.stalled || res.stalled;
            chain.waypoints.push_back(res.positions);
            scn.init.var_x = roll.var_x.back();
            scn.init.var_y = roll.var_y.back();
            scn.init.q = roll.q.back();
            pos = res.positions;
            remaining -= span;
        }
        out.chains.push_back(std::move(chain));
    }

    std::size_t best = 0;
    for (std::size_t c = 1; c < out.chains.size(); ++c)
        if (out.chains[c].total < out.chains[best].total) best = c;
    out.chosen_horizon = out.chains[best].horizon;
    out.all_stalled = std::all_of(out.chains.begin(), out.chains.end(),
                                  [](const HorizonChain& c) { return c.stalled; });

    const double step_budget =
        base.params.v_sensor * base.window_duration();
    const GridSpec& g = *base.grid;
    out.committed.resize(base.start.size());
    for (std::size_t n = 0; n < base.start.size(); ++n)
        out.committed[n] =
            commit_waypoint(g, base.no_fly, base.start[n],
                            out.chains[best].waypoints.front()[n], step_budget);
    return out;
}

}  // namespace spillsense
