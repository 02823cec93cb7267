#include <cmath>
#include <random>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "spillsense/placement.hpp"

using namespace spillsense;

namespace {

/// Smooth 6x6 planning scenario with gentle spatial ramps, one sensor and
/// every nondifferentiable gate (clamp, relu, hinge) comfortably inactive.
PlanningScenario smooth_scenario(int sensors = 1) {
    PlanningScenario scn;
    scn.grid = make_grid(6, 6, 1.0, 1.0);
    scn.velocity = VectorField(scn.grid);
    scn.velocity.u.fill(0.4);
    scn.velocity.v.fill(-0.3);
    scn.weighting = ScalarField(scn.grid);
    scn.init.var_x = ScalarField(scn.grid);
    scn.init.var_y = ScalarField(scn.grid);
    scn.init.q = ScalarField(scn.grid);
    for (int j = 0; j < 6; ++j)
        for (int i = 0; i < 6; ++i) {
            scn.weighting.at(i, j) = 0.2 + 0.05 * (i + j);
            scn.init.var_x.at(i, j) = 0.5 + 0.04 * i + 0.03 * j;
            scn.init.var_y.at(i, j) = 0.6 + 0.02 * i + 0.05 * j;
            scn.init.q.at(i, j) = 0.15 + 0.01 * (i + j);
        }
    scn.sources_x.eps = 0.3;
    scn.sources_y.eps = 0.2;
    scn.params.nu = 0.05;
    scn.params.k_chi = 0.5;
    scn.params.k_s = 0.8;
    scn.params.r = 3.0;
    scn.params.v_sensor = 26.8;
    scn.dt = 0.05;
    scn.n_steps = 4;
    scn.k_pen = 1.0;
    scn.start = {Point{2.3, 3.1}, Point{3.9, 4.2}};
    scn.start.resize(static_cast<std::size_t>(sensors));
    return scn;
}

std::vector<Vec2> adjoint_gradient(const std::vector<Point>& p,
                                   const PlanningScenario& scn) {
    Rollout roll = rollout_window(p, scn);
    AdjointSolution adj = solve_adjoint(roll, scn);
    return gradient(adj, roll, scn);
}

std::vector<Vec2> fd_gradient(const std::vector<Point>& p,
                              const PlanningScenario& scn, double h) {
    std::vector<Vec2> out(p.size());
    for (std::size_t n = 0; n < p.size(); ++n) {
        for (int axis = 0; axis < 2; ++axis) {
            std::vector<Point> hi = p, lo = p;
            (axis == 0 ? hi[n].x : hi[n].y) += h;
            (axis == 0 ? lo[n].x : lo[n].y) -= h;
            double d = (evaluate_cost(hi, scn).total -
                        evaluate_cost(lo, scn).total) /
                       (2.0 * h);
            (axis == 0 ? out[n].u : out[n].v) = d;
        }
    }
    return out;
}

}  // namespace

// ============================================================================
// Weighting field
// ============================================================================

TEST_CASE("a domain-only weighting is uniform on water") {
    std::vector<uint8_t> land(25, 0);
    land[12] = 1;
    auto grid = make_grid(5, 5, 1.0, 1.0, {}, land);
    ScalarField zero(grid);
    WeightingConfig cfg;
    cfg.k_pov = cfg.k_se = cfg.k_pdmd = 0.0;
    cfg.k_domain = 2.0;
    ScalarField e = weighting_field(zero, zero, zero, cfg);
    for (int j = 0; j < 5; ++j)
        for (int i = 0; i < 5; ++i)
            REQUIRE(e.at(i, j) == (grid->is_land(i, j) ? 0.0 : 1.0));
}

TEST_CASE("equal weights average a single lit cell against the domain floor") {
    auto grid = make_grid(4, 4, 1.0, 1.0);
    ScalarField pov(grid), se(grid), pdmd(grid);
    pov.at(2, 1) = 1.0;
    se.at(2, 1) = 1.0;
    pdmd.at(2, 1) = 1.0;
    ScalarField e = weighting_field(pov, se, pdmd, WeightingConfig{});
    for (int j = 0; j < 4; ++j)
        for (int i = 0; i < 4; ++i) {
            double want = (i == 2 && j == 1) ? 1.0 : 0.25;
            REQUIRE(e.at(i, j) == Catch::Approx(want).margin(1e-15));
        }
}

TEST_CASE("the weighting stays between the component extremes") {
    auto grid = make_grid(7, 5, 2.0, 3.0);
    std::mt19937_64 rng(404u);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    ScalarField pov(grid), se(grid), pdmd(grid);
    for (std::size_t c = 0; c < pov.size(); ++c) {
        pov[c] = dist(rng);
        se[c] = dist(rng);
        pdmd[c] = dist(rng);
    }
    WeightingConfig cfg;
    cfg.k_pov = 0.4;
    cfg.k_se = 1.7;
    cfg.k_pdmd = 0.2;
    cfg.k_domain = 0.9;
    ScalarField e = weighting_field(pov, se, pdmd, cfg);
    for (std::size_t c = 0; c < e.size(); ++c) {
        double lo = std::min({pov[c], se[c], pdmd[c], 1.0});
        double hi = std::max({pov[c], se[c], pdmd[c], 1.0});
        REQUIRE(e[c] >= lo - 1e-14);
        REQUIRE(e[c] <= hi + 1e-14);
    }

    WeightingConfig zero;
    zero.k_pov = zero.k_se = zero.k_pdmd = zero.k_domain = 0.0;
    REQUIRE_THROWS_AS(weighting_field(pov, se, pdmd, zero), ConfigError);
    WeightingConfig neg;
    neg.k_se = -1.0;
    REQUIRE_THROWS_AS(weighting_field(pov, se, pdmd, neg), ConfigError);
}

// ============================================================================
// Penalty function
// ============================================================================

TEST_CASE("an unconstrained sensor pays no penalty") {
    auto grid = make_grid(10, 10, 100.0, 100.0);
    ScalarField interest(grid);
    interest.at(4, 4) = 1.0;
    PenaltyParams pp;
    pp.reach_budget = 500.0;
    pp.r = 250.0;
    std::vector<Point> p = {grid->cell_center(4, 4)};
    PenaltyResult res = penalty(p, p, interest, *grid, pp);
    REQUIRE(res.total == 0.0);
    REQUIRE(res.gradient[0].u == 0.0);
    REQUIRE(res.gradient[0].v == 0.0);
}

TEST_CASE("exceeding the reachable radius costs a quadratic hinge") {
    auto grid = make_grid(10, 10, 100.0, 100.0);
    ScalarField interest(grid);
    interest.at(7, 4) = 1.0;  // keeps the proximity term quiet at the sensor
    PenaltyParams pp;
    pp.reach_budget = 200.0;
    pp.r = 250.0;
    std::vector<Point> start = {Point{450.0, 450.0}};
    std::vector<Point> p = {Point{750.0, 450.0}};
    PenaltyResult res = penalty(p, start, interest, *grid, pp);
    REQUIRE(res.per_sensor[0] == Catch::Approx(10000.0).margin(1e-9));
    REQUIRE(res.gradient[0].u == Catch::Approx(200.0).margin(1e-9));
    REQUIRE(res.gradient[0].v == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("a sensor on land is pushed along the shortest vector to water") {
    std::vector<uint8_t> land(100, 0);
    for (int j = 0; j < 10; ++j)
        for (int i = 0; i < 3; ++i) land[static_cast<std::size_t>(j) * 10 + i] = 1;
    auto grid = make_grid(10, 10, 100.0, 100.0, {}, land);
    ScalarField interest(grid);
    PenaltyParams pp;
    pp.reach_budget = 1e6;
    pp.r = 100.0;
    std::vector<Point> p = {grid->cell_center(0, 5)};
    PenaltyResult res = penalty(p, p, interest, *grid, pp);
    REQUIRE(res.per_sensor[0] == Catch::Approx(300.0).margin(1e-9));
    REQUIRE(res.gradient[0].u == Catch::Approx(-1.0).margin(1e-12));
    REQUIRE(res.gradient[0].v == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("distant interest attracts through the proximity term") {
    auto grid = make_grid(10, 10, 100.0, 100.0);
    ScalarField interest(grid);
    interest.at(8, 4) = 0.5;
    PenaltyParams pp;
    pp.reach_budget = 1e6;
    pp.r = 250.0;
    std::vector<Point> p = {Point{400.0, 400.0}};
    PenaltyResult res = penalty(p, p, interest, *grid, pp);
    REQUIRE(res.per_sensor[0] == Catch::Approx(400.0).margin(1e-9));
    REQUIRE(res.gradient[0].u == Catch::Approx(-1.0).margin(1e-12));

    interest.at(5, 4) = 0.5;  // interest within the grace radius
    res = penalty(p, p, interest, *grid, pp);
    REQUIRE(res.per_sensor[0] == 0.0);

    REQUIRE_THROWS_AS(penalty(p, {}, interest, *grid, pp), ConfigError);
    std::vector<Point> outside = {Point{-5000.0, 0.0}};
    REQUIRE_THROWS_AS(penalty(outside, outside, interest, *grid, pp),
                      OutOfDomainError);
}

// ============================================================================
// Cost rollout
// ============================================================================

TEST_CASE("zero weighting and no penalties give a zero cost") {
    PlanningScenario scn = smooth_scenario();
    scn.weighting.fill(0.0);
    scn.k_pen = 0.0;
    CostBreakdown cost = evaluate_cost(scn.start, scn);
    REQUIRE(cost.total == 0.0);
    REQUIRE(cost.uncertainty == 0.0);
    for (double step : cost.per_step) REQUIRE(step == 0.0);
}

TEST_CASE("the uncertainty term is linear in the weighting") {
    PlanningScenario scn = smooth_scenario();
    scn.k_pen = 0.0;
    CostBreakdown base = evaluate_cost(scn.start, scn);
    for (std::size_t c = 0; c < scn.weighting.size(); ++c)
        scn.weighting[c] *= 2.0;
    CostBreakdown twice = evaluate_cost(scn.start, scn);
    REQUIRE(twice.uncertainty ==
            Catch::Approx(2.0 * base.uncertainty).epsilon(1e-13));
    REQUIRE(base.total == Catch::Approx(base.uncertainty + base.penalty)
                              .margin(1e-10));
}

TEST_CASE("a parked sensor beats an empty fleet on the lone uncertain cell") {
    PlanningScenario scn;
    scn.grid = make_grid(9, 9, 100.0, 100.0);
    scn.velocity = VectorField(scn.grid);
    scn.weighting = ScalarField(scn.grid);
    scn.weighting.fill(1.0);
    scn.init.var_x = ScalarField(scn.grid);
    scn.init.var_y = ScalarField(scn.grid);
    scn.init.q = ScalarField(scn.grid);
    scn.init.var_x.at(4, 4) = 1.0;
    scn.init.var_y.at(4, 4) = 1.0;
    scn.init.q.at(4, 4) = 0.5;
    scn.params.nu = 0.0;
    scn.params.k_chi = 1.0;
    scn.params.k_s = 1.0;
    scn.params.r = 120.0;
    scn.params.v_sensor = 26.8;
    scn.dt = 10.0;
    scn.n_steps = 6;
    scn.k_pen = 0.0;
    scn.start = {scn.grid->cell_center(4, 4)};

    CostBreakdown with_sensor = evaluate_cost(scn.start, scn);
    PlanningScenario empty = scn;
    empty.start.clear();
    CostBreakdown without = evaluate_cost({}, empty);
    REQUIRE(with_sensor.total < without.total);
}

TEST_CASE("rollouts reject an unstable advection step") {
    PlanningScenario scn = smooth_scenario();
    scn.velocity.u.fill(30.0);
    REQUIRE_THROWS_AS(evaluate_cost(scn.start, scn), CflViolation);
}

// ============================================================================
// Adjoint solve
// ============================================================================

TEST_CASE("a state-independent cost has a zero adjoint") {
    PlanningScenario scn = smooth_scenario();
    scn.weighting.fill(0.0);
    Rollout roll = rollout_window(scn.start, scn);
    AdjointSolution adj = solve_adjoint(roll, scn);
    for (const auto& f : adj.lq) REQUIRE(f.max_abs() == 0.0);
    for (const auto& f : adj.lvx) REQUIRE(f.max_abs() == 0.0);
    for (const auto& f : adj.lvy) REQUIRE(f.max_abs() == 0.0);
    REQUIRE(adj.lambda_w.max_abs() == 0.0);
}

TEST_CASE("the single-cell adjoint matches the hand-written solution") {
    std::vector<uint8_t> land(9, 1);
    land[4] = 0;
    PlanningScenario scn;
    scn.grid = make_grid(3, 3, 1.0, 1.0, {}, land);
    scn.velocity = VectorField(scn.grid);
    scn.weighting = ScalarField(scn.grid);
    scn.weighting.at(1, 1) = 0.9;
    scn.init.var_x = ScalarField(scn.grid);
    scn.init.var_y = ScalarField(scn.grid);
    scn.init.q = ScalarField(scn.grid);
    scn.init.var_x.at(1, 1) = 0.8;
    scn.init.var_y.at(1, 1) = 0.5;
    scn.init.q.at(1, 1) = 0.3;
    scn.params.nu = 0.0;
    scn.params.k_chi = 0.3;
    scn.params.k_s = 0.6;
    scn.params.r = 0.9;
    scn.params.v_sensor = 10.0;
    scn.sources_x.eps = 0.7;
    scn.dt = 0.1;
    scn.n_steps = 1;
    scn.k_pen = 0.0;
    scn.start = {scn.grid->cell_center(1, 1)};

    Rollout roll = rollout_window(scn.start, scn);
    const double keep = 0.4;
    const double vx1 = keep * (0.8 + 0.1 * 0.7);
    const double vy1 = keep * 0.5;
    REQUIRE(roll.var_x[1].at(1, 1) == Catch::Approx(vx1).margin(1e-14));
    REQUIRE(roll.var_y[1].at(1, 1) == Catch::Approx(vy1).margin(1e-14));
    const double k2 = 0.09;
    const double q1 = 0.3 + k2 * (0.8 * (vy1 - 0.5) + 0.5 * (vx1 - 0.8));
    REQUIRE(roll.q[1].at(1, 1) == Catch::Approx(q1).margin(1e-14));

    AdjointSolution adj = solve_adjoint(roll, scn);
    const double lq1 = 2.0 * 0.9 * q1 * 1.0 * 0.1;
    const double lvx1 = k2 * 0.5 * lq1;
    const double lvy1 = k2 * 0.8 * lq1;
    const double lvx0 = k2 * ((vy1 - 0.5) - 0.5) * lq1 + keep * lvx1;
    const double lvy0 = k2 * ((vx1 - 0.8) - 0.8) * lq1 + keep * lvy1;
    REQUIRE(adj.lq[1].at(1, 1) == Catch::Approx(lq1).margin(1e-12));
    REQUIRE(adj.lq[0].at(1, 1) == Catch::Approx(lq1).margin(1e-12));
    REQUIRE(adj.lvx[1].at(1, 1) == Catch::Approx(lvx1).margin(1e-12));
    REQUIRE(adj.lvy[1].at(1, 1) == Catch::Approx(lvy1).margin(1e-12));
    REQUIRE(adj.lvx[0].at(1, 1) == Catch::Approx(lvx0).margin(1e-12));
    REQUIRE(adj.lvy[0].at(1, 1) == Catch::Approx(lvy0).margin(1e-12));

    const double lw = -0.6 * ((vx1 / keep) * lvx1 + (vy1 / keep) * lvy1);
    REQUIRE(adj.lambda_w.at(1, 1) == Catch::Approx(lw).margin(1e-12));

    std::vector<Vec2> g = gradient(adj, roll, scn);
    REQUIRE(std::abs(g[0].u) < 1e-14);
    REQUIRE(std::abs(g[0].v) < 1e-14);
}

TEST_CASE("initial-state cotangents match directional finite differences") {
    PlanningScenario scn = smooth_scenario();
    scn.grid = make_grid(4, 4, 1.0, 1.0);
    scn.velocity = VectorField(scn.grid);
    scn.velocity.u.fill(0.3);
    scn.velocity.v.fill(-0.2);
    scn.weighting = ScalarField(scn.grid);
    scn.init.var_x = ScalarField(scn.grid);
    scn.init.var_y = ScalarField(scn.grid);
    scn.init.q = ScalarField(scn.grid);
    for (int j = 0; j < 4; ++j)
        for (int i = 0; i < 4; ++i) {
            scn.weighting.at(i, j) = 0.3 + 0.04 * (i + 2 * j);
            scn.init.var_x.at(i, j) = 0.7 + 0.05 * i;
            scn.init.var_y.at(i, j) = 0.5 + 0.06 * j;
            scn.init.q.at(i, j) = 0.25 + 0.02 * i;
        }
    scn.params.nu = 0.04;
    scn.params.k_chi = 0.6;
    scn.params.k_s = 0.5;
    scn.params.r = 1.0;
    scn.sources_x.eps = 0.1;
    scn.sources_y.eps = 0.15;
    scn.dt = 0.05;
    scn.n_steps = 5;
    scn.k_pen = 0.0;
    scn.start = {Point{1.6, 2.1}};

    Rollout roll = rollout_window(scn.start, scn);
    AdjointSolution adj = solve_adjoint(roll, scn);

    std::mt19937_64 rng(515u);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    ScalarField delta(scn.grid);
    for (std::size_t c = 0; c < delta.size(); ++c) delta[c] = dist(rng);

    struct Slot {
        ScalarField UncertaintyState::*field;
        const std::vector<ScalarField>* lambda;
    };
    const Slot slots[] = {{&UncertaintyState::var_x, &adj.lvx},
                          {&UncertaintyState::var_y, &adj.lvy},
                          {&UncertaintyState::q, &adj.lq}};
    const double h = 1e-5;
    for (const Slot& slot : slots) {
        double directional = 0.0;
        for (std::size_t c = 0; c < delta.size(); ++c)
            directional += (*slot.lambda)[0][c] * delta[c];

        PlanningScenario hi = scn, lo = scn;
        for (std::size_t c = 0; c < delta.size(); ++c) {
            (hi.init.*(slot.field))[c] += h * delta[c];
            (lo.init.*(slot.field))[c] -= h * delta[c];
        }
        double fd = (evaluate_cost(scn.start, hi).total -
                     evaluate_cost(scn.start, lo).total) /
                    (2.0 * h);
        INFO("directional " << directional << " fd " << fd);
        REQUIRE(std::abs(fd - directional) <=
                1e-6 * std::max(std::abs(fd), 1e-12));
    }
}

// ============================================================================
// Position gradient vs. finite differences
// ============================================================================

TEST_CASE("a sensor in a dead region sees no gradient") {
    PlanningScenario scn = smooth_scenario();
    scn.weighting.fill(0.0);
    scn.init.q.fill(0.0);
    scn.k_pen = 1.0;
    std::vector<Vec2> g = adjoint_gradient(scn.start, scn);
    REQUIRE(std::abs(g[0].u) <= 1e-10);
    REQUIRE(std::abs(g[0].v) <= 1e-10);
}

TEST_CASE("with a zero weighting the gradient is exactly the penalty term") {
    PlanningScenario scn = smooth_scenario();
    scn.weighting.fill(0.0);
    scn.init.q.fill(0.0);
    scn.k_pen = 2.5;
    scn.params.v_sensor = 0.5;  // shrink the reachable disk
    std::vector<Point> p = {Point{3.9, 3.1}};

    Rollout roll = rollout_window(p, scn);
    AdjointSolution adj = solve_adjoint(roll, scn);
    std::vector<Vec2> g = gradient(adj, roll, scn);
    REQUIRE(roll.pen.total > 0.0);
    double t = scn.window_duration();
    REQUIRE(g[0].u == Catch::Approx(2.5 * roll.pen.gradient[0].u * t)
                          .margin(1e-12));
    REQUIRE(g[0].v == Catch::Approx(2.5 * roll.pen.gradient[0].v * t)
                          .margin(1e-12));
}

TEST_CASE("the adjoint gradient matches central finite differences") {
    PlanningScenario scn = smooth_scenario(1);
    std::vector<Vec2> adj = adjoint_gradient(scn.start, scn);
    std::vector<Vec2> fd = fd_gradient(scn.start, scn, 0.00625);

    double scale = std::max({std::abs(fd[0].u), std::abs(fd[0].v), 1e-12});
    INFO("adj (" << adj[0].u << ", " << adj[0].v << ") fd (" << fd[0].u << ", "
                 << fd[0].v << ")");
    REQUIRE(std::abs(adj[0].u - fd[0].u) / scale <= 1e-4);
    REQUIRE(std::abs(adj[0].v - fd[0].v) / scale <= 1e-4);
}

TEST_CASE("two overlapping footprints still differentiate cleanly") {
    PlanningScenario scn = smooth_scenario(2);
    std::vector<Vec2> adj = adjoint_gradient(scn.start, scn);
    std::vector<Vec2> fd = fd_gradient(scn.start, scn, 0.00625);

    double scale = 1e-12;
    for (const Vec2& g : fd)
        scale = std::max({scale, std::abs(g.u), std::abs(g.v)});
    for (std::size_t n = 0; n < fd.size(); ++n) {
        INFO("sensor " << n);
        REQUIRE(std::abs(adj[n].u - fd[n].u) / scale <= 1e-4);
        REQUIRE(std::abs(adj[n].v - fd[n].v) / scale <= 1e-4);
    }
}

// ============================================================================
// Initialization
// ============================================================================

TEST_CASE("a single bump yields its peak cell") {
    auto grid = make_grid(12, 12, 1.0, 1.0);
    ScalarField f(grid);
    for (int j = 0; j < 12; ++j)
        for (int i = 0; i < 12; ++i)
            f.at(i, j) = std::exp(-((i - 6.0) * (i - 6.0) +
                                    (j - 7.0) * (j - 7.0)) / 4.0);
    auto p = initial_positions(f, 1);
    REQUIRE(p.size() == 1);
    REQUIRE(p[0].x == Catch::Approx(6.0).margin(1e-12));
    REQUIRE(p[0].y == Catch::Approx(7.0).margin(1e-12));
}

TEST_CASE("two bumps come back tallest first") {
    auto grid = make_grid(12, 12, 1.0, 1.0);
    ScalarField f(grid);
    for (int j = 0; j < 12; ++j)
        for (int i = 0; i < 12; ++i) {
            double d1 = (i - 3.0) * (i - 3.0) + (j - 3.0) * (j - 3.0);
            double d2 = (i - 8.0) * (i - 8.0) + (j - 8.0) * (j - 8.0);
            f.at(i, j) = 2.0 * std::exp(-d1 / 3.0) + std::exp(-d2 / 3.0);
        }
    auto p = initial_positions(f, 2);
    REQUIRE(p[0].x == Catch::Approx(3.0).margin(1e-12));
    REQUIRE(p[0].y == Catch::Approx(3.0).margin(1e-12));
    REQUIRE(p[1].x == Catch::Approx(8.0).margin(1e-12));
    REQUIRE(p[1].y == Catch::Approx(8.0).margin(1e-12));
}

TEST_CASE("returned peaks beat all of their neighbors") {
    auto grid = make_grid(16, 16, 1.0, 1.0);
    std::mt19937_64 rng(616u);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    ScalarField raw(grid), f(grid);
    for (std::size_t c = 0; c < raw.size(); ++c) raw[c] = dist(rng);
    for (int j = 0; j < 16; ++j)
        for (int i = 0; i < 16; ++i) {
            double sum = 0.0;
            int count = 0;
            for (int dj = -1; dj <= 1; ++dj)
                for (int di = -1; di <= 1; ++di) {
                    int ni = i + di, nj = j + dj;
                    if (ni < 0 || nj < 0 || ni > 15 || nj > 15) continue;
                    sum += raw.at(ni, nj);
                    ++count;
                }
            f.at(i, j) = sum / count;
        }
    auto p = initial_positions(f, 3);
    for (const Point& pt : p) {
        CellIndex c = grid->locate(pt);
        for (int dj = -1; dj <= 1; ++dj)
            for (int di = -1; di <= 1; ++di) {
                if (di == 0 && dj == 0) continue;
                int ni = c.i + di, nj = c.j + dj;
                if (ni < 0 || nj < 0 || ni > 15 || nj > 15) continue;
                REQUIRE(f.at(c.i, c.j) > f.at(ni, nj));
            }
    }
}

TEST_CASE("missing peaks are padded around the global maximum") {
    auto grid = make_grid(12, 12, 1.0, 1.0);
    ScalarField f(grid);
    for (int j = 0; j < 12; ++j)
        for (int i = 0; i < 12; ++i)
            f.at(i, j) = std::exp(-((i - 6.0) * (i - 6.0) +
                                    (j - 7.0) * (j - 7.0)) / 4.0);
    auto p = initial_positions(f, 3);
    REQUIRE(p[0].x == Catch::Approx(6.0).margin(1e-12));
    REQUIRE(p[0].y == Catch::Approx(7.0).margin(1e-12));
    for (std::size_t n = 1; n < p.size(); ++n) {
        REQUIRE(std::abs(p[n].x - 6.0) <= 1.0 + 1e-12);
        REQUIRE(std::abs(p[n].y - 7.0) <= 1.0 + 1e-12);
        REQUIRE(distance(p[n], p[0]) > 0.5);
    }
}

TEST_CASE("an all-zero field falls back to the domain centroid") {
    auto grid = make_grid(10, 10, 1.0, 1.0);
    ScalarField f(grid);
    auto p = initial_positions(f, 3);
    REQUIRE(p[0].x == Catch::Approx(4.0).margin(1e-12));
    REQUIRE(p[0].y == Catch::Approx(4.0).margin(1e-12));
    REQUIRE(p.size() == 3);
    REQUIRE(distance(p[1], p[0]) <= std::sqrt(2.0) + 1e-12);
}

// ============================================================================
// Descent
// ============================================================================

namespace {

CostBreakdown quadratic_cost(const std::vector<Point>& p,
                             const std::vector<Point>& target) {
    CostBreakdown c;
    for (std::size_t n = 0; n < p.size(); ++n) {
        double dx = p[n].x - target[n].x, dy = p[n].y - target[n].y;
        c.total += dx * dx + dy * dy;
    }
    c.uncertainty = c.total;
    return c;
}

std::vector<Vec2> quadratic_grad(const std::vector<Point>& p,
                                 const std::vector<Point>& target) {
    std::vector<Vec2> g(p.size());
    for (std::size_t n = 0; n < p.size(); ++n)
        g[n] = {2.0 * (p[n].x - target[n].x), 2.0 * (p[n].y - target[n].y)};
    return g;
}

}  // namespace

TEST_CASE("descent from a stationary point returns immediately") {
    std::vector<Point> target = {Point{3.0, 4.0}};
    auto identity = [](std::vector<Point> p) { return p; };
    DescentResult res = descend(
        target, [&](const std::vector<Point>& p) { return quadratic_cost(p, target); },
        [&](const std::vector<Point>& p) { return quadratic_grad(p, target); },
        DescentConfig{}, 1.0, identity);
    REQUIRE(res.iterations == 0);
    REQUIRE(res.converged);
    REQUIRE(res.accepted_costs.size() == 1);
}

TEST_CASE("descent solves the convex quadratic oracle") {
    std::vector<Point> target = {Point{3.2, 4.1}};
    std::vector<Point> start = {Point{0.5, 0.5}};
    auto identity = [](std::vector<Point> p) { return p; };
    DescentResult res = descend(
        start, [&](const std::vector<Point>& p) { return quadratic_cost(p, target); },
        [&](const std::vector<Point>& p) { return quadratic_grad(p, target); },
        DescentConfig{}, 1.0, identity);
    REQUIRE(res.iterations <= 50);
    REQUIRE(res.converged);
    REQUIRE(distance(res.positions[0], target[0]) < 1e-3);
    for (std::size_t k = 1; k < res.accepted_costs.size(); ++k)
        REQUIRE(res.accepted_costs[k] <= res.accepted_costs[k - 1]);
}

TEST_CASE("an impossible line search stalls instead of looping") {
    std::vector<Point> start = {Point{1.0, 1.0}};
    auto identity = [](std::vector<Point> p) { return p; };
    DescentResult res = descend(
        start,
        [](const std::vector<Point>&) {
            CostBreakdown c;
            c.total = 5.0;
            return c;
        },
        [](const std::vector<Point>& p) {
            return std::vector<Vec2>(p.size(), Vec2{1.0, 0.0});
        },
        DescentConfig{}, 1.0, identity);
    REQUIRE(res.stalled);
    REQUIRE(res.iterations == 0);
    REQUIRE(res.positions[0].x == 1.0);
}

TEST_CASE("window optimization never worsens the starting cost") {
    PlanningScenario scn = smooth_scenario(1);
    DescentConfig cfg;
    cfg.max_iters = 8;
    DescentResult res = optimize_window(scn, scn.start, cfg);
    REQUIRE(res.cost.total <= res.accepted_costs.front() + 1e-12);
    for (std::size_t k = 1; k < res.accepted_costs.size(); ++k)
        REQUIRE(res.accepted_costs[k] <= res.accepted_costs[k - 1]);
    REQUIRE(scn.grid->in_bounding_box(res.positions[0]));
}

TEST_CASE("scaling the weighting leaves the descent path unchanged") {
    PlanningScenario scn = smooth_scenario(1);
    scn.k_pen = 0.0;
    DescentConfig cfg;
    cfg.max_iters = 6;
    cfg.zeta_g = 1e-15;
    DescentResult base = optimize_window(scn, scn.start, cfg);
    for (std::size_t c = 0; c < scn.weighting.size(); ++c)
        scn.weighting[c] *= 3.0;
    DescentResult scaled = optimize_window(scn, scn.start, cfg);
    REQUIRE(distance(base.positions[0], scaled.positions[0]) < 1e-6);
}

// ============================================================================
// Receding-horizon planning
// ============================================================================

TEST_CASE("a single horizon reduces to one window optimization") {
    PlanningScenario scn = smooth_scenario(1);
    scn.n_steps = 2;
    DescentConfig cfg;
    cfg.max_iters = 4;
    PlanResult plan = plan_receding_horizon(scn, {2}, cfg);
    REQUIRE(plan.chains.size() == 1);
    REQUIRE(plan.chains[0].waypoints.size() == 1);

    PlanningScenario direct = scn;
    direct.n_steps = 4;
    DescentResult res = optimize_window(direct, scn.start, cfg);
    REQUIRE(plan.chains[0].waypoints[0][0].x == res.positions[0].x);
    REQUIRE(plan.chains[0].waypoints[0][0].y == res.positions[0].y);
    REQUIRE(plan.chosen_horizon == 2);
}

TEST_CASE("the cheapest chain is selected") {
    PlanningScenario scn = smooth_scenario(1);
    scn.n_steps = 2;
    DescentConfig cfg;
    cfg.max_iters = 3;
    PlanResult plan = plan_receding_horizon(scn, {1, 2}, cfg);
    REQUIRE(plan.chains.size() == 2);
    double best = std::min(plan.chains[0].total, plan.chains[1].total);
    for (const HorizonChain& chain : plan.chains)
        if (chain.horizon == plan.chosen_horizon)
            REQUIRE(chain.total == best);
    REQUIRE_THROWS_AS(plan_receding_horizon(scn, {}, cfg), ConfigError);
}

TEST_CASE("committed waypoints respect the speed bound across cycles") {
    PlanningScenario scn = smooth_scenario(1);
    scn.n_steps = 2;
    scn.params.v_sensor = 3.0;
    DescentConfig cfg;
    cfg.max_iters = 3;
    double budget = scn.params.v_sensor * scn.window_duration();
    for (int cycle = 0; cycle < 3; ++cycle) {
        PlanResult plan = plan_receding_horizon(scn, {1, 2}, cfg);
        REQUIRE(distance(plan.committed[0], scn.start[0]) <= budget + 1e-9);
        scn.start = plan.committed;
    }
}
