#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <exception>
#include <limits>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "spillsense/baseline.hpp"
#include "spillsense/config.hpp"
#include "spillsense/field.hpp"
#include "spillsense/flow.hpp"
#include "spillsense/grid.hpp"
#include "spillsense/io.hpp"
#include "spillsense/oil.hpp"
#include "spillsense/placement.hpp"
#include "spillsense/plot.hpp"
#include "spillsense/rom.hpp"
#include "spillsense/uncertainty.hpp"

namespace spillsense {

// ---------------------------------------------------------------------------
// Deterministic seed streams
// ---------------------------------------------------------------------------

namespace detail {

constexpr std::uint64_t kStreamOil = 0x100;     // + realization index
constexpr std::uint64_t kStreamNoise = 0x20000; // + tick*64 + sensor

/// splitmix64 finalizer; decorrelates the base seed across named streams.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Error metrics
// ---------------------------------------------------------------------------

/// Area of the symmetric difference between the two thresholded presence
/// supports, in m^2; land cells never count.
inline double oil_presence_error(const ScalarField& truth,
                                 const ScalarField& estimate,
                                 double threshold) {
    require_same_grid(truth, estimate);
    const GridSpec& g = *truth.grid();
    double area = 0.0;
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            if (g.is_land(i, j)) continue;
            bool a = truth.at(i, j) >= threshold;
            bool b = estimate.at(i, j) >= threshold;
            if (a != b) area += g.cell_area();
        }
    return area;
}

/// RMS of the velocity-error magnitude over the water cells where
/// `mask >= threshold`; NaN when no cell qualifies.
inline double rms_current_error(const VectorField& truth,
                                const VectorField& estimate,
                                const ScalarField& mask, double threshold) {
    require_same_grid(truth.u, estimate.u);
    require_same_grid(truth.u, mask);
    const GridSpec& g = *mask.grid();
    double sum = 0.0;
    std::size_t count = 0;
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            if (g.is_land(i, j) || mask.at(i, j) < threshold) continue;
            double du = truth.u.at(i, j) - estimate.u.at(i, j);
            double dv = truth.v.at(i, j) - estimate.v.at(i, j);
            sum += du * du + dv * dv;
            ++count;
        }
    if (count == 0) return std::numeric_limits<double>::quiet_NaN();
    return std::sqrt(sum / static_cast<double>(count));
}

/// Domain integral of q^2 over water cells, in m^2 (q is dimensionless).
inline double uncertainty_cost(const ScalarField& q) {
    const GridSpec& g = *q.grid();
    double sum = 0.0;
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i)
            if (!g.is_land(i, j)) sum += q.at(i, j) * q.at(i, j) * g.cell_area();
    return sum;
}

// ---------------------------------------------------------------------------
// Shared truth stream
// ---------------------------------------------------------------------------

/// Per-step record of the synthetic truth: the relaxed Navier-Stokes current
/// and the rescaled presence of the single truth spill realization. All
/// strategies of one experiment read the same record, so metric differences
/// isolate the sensing strategy.
struct TruthRecord {
    GridPtr grid;
    double dt = 0.0;
    std::vector<VectorField> current;   // steps + 1 entries
    std::vector<ScalarField> presence;  // steps + 1 entries, zero when empty
};

namespace detail {

/// Mean presence over the non-empty realizations, rescaled to max 1; a fully
/// empty ensemble set maps to the zero field.
inline ScalarField ensemble_presence(const std::vector<ParticleEnsemble>& reals,
                                     const GridPtr& grid) {
    std::vector<OilProbabilityMap> maps;
    for (const ParticleEnsemble& ens : reals) {
        try {
            maps.push_back(probability_single(ens, grid));
        } catch (const EmptySpillError&) {
        }
    }
    if (maps.empty()) return ScalarField(grid);
    return rescale_presence(probability_mean(maps));
}

inline void set_relaxation_source(FluidLayer& layer, const VectorField& target,
                                  double tau) {
    for (std::size_t k = 0; k < layer.source.u.size(); ++k) {
        layer.source.u[k] = (target.u[k] - layer.velocity.u[k]) / tau;
        layer.source.v[k] = (target.v[k] - layer.velocity.v[k]) / tau;
    }
    layer.source.zero_on_land();
}

inline int ticks_per(double interval, double dt) {
    return std::max(1, static_cast<int>(std::llround(interval / dt)));
}

inline Point move_toward(Point p, Point target, double budget) {
    double d = distance(p, target);
    if (d <= budget || d == 0.0) return target;
    double f = budget / d;
    return {p.x + f * (target.x - p.x), p.y + f * (target.y - p.y)};
}

}  // namespace detail

/// Simulates the truth stream: the current field follows the stacked-layer
/// dynamics relaxed toward the truth forcing (tide included), and the spill
/// ensemble rides the combined drift of that current. The ensemble uses the
/// same realization seeds as every strategy's test model, so presence-map
/// differences measure divergence of the advecting currents rather than
/// Monte-Carlo spread.
inline TruthRecord simulate_truth(const ScenarioConfig& cfg,
                                  const GridPtr& grid) {
    const int n = cfg.time.steps();
    const double dt = cfg.time.dt;

    TruthRecord rec;
    rec.grid = grid;
    rec.dt = dt;
    rec.current.reserve(n + 1);
    rec.presence.reserve(n + 1);

    FluidLayer layer = make_layer(grid, cfg.flow.viscosity);
    layer.velocity = synthesize_forcing(cfg.truth_forcing, grid, 0.0).first;
    layer.velocity.zero_on_land();

    std::vector<ParticleEnsemble> reals;
    reals.reserve(cfg.spill.realizations);
    for (int r = 0; r < cfg.spill.realizations; ++r)
        reals.push_back(seed_ensemble(
            grid, {cfg.spill.release_x, cfg.spill.release_y},
            cfg.spill.volume_m3, cfg.spill.particles, cfg.spill.spread,
            detail::mix_seed(cfg.seed, detail::kStreamOil +
                                           static_cast<std::uint64_t>(r)),
            r));

    DriftModel drift = DriftModel::constant_diffusion(grid, cfg.spill.dh);
    drift.current_factor = cfg.flow.current_factor;
    drift.wind_factor = cfg.flow.wind_factor;
    drift.wave_factor = 0.0;
    const VectorField zero(grid);

    rec.current.push_back(layer.velocity);
    rec.presence.push_back(detail::ensemble_presence(reals, grid));

    for (int k = 0; k < n; ++k) {
        const double t = k * dt;
        auto forcing = synthesize_forcing(cfg.truth_forcing, grid, t);
        VectorField vel =
            combined_drift(layer.velocity, forcing.second, zero, zero, drift);
        for (ParticleEnsemble& ens : reals)
            ens = advect_particles(ens, vel, drift.diffusion, dt);
        detail::set_relaxation_source(layer, forcing.first, cfg.flow.relax_tau);
        layer = step_layer(layer, dt);
        rec.current.push_back(layer.velocity);
        rec.presence.push_back(detail::ensemble_presence(reals, grid));
    }
    return rec;
}

// ---------------------------------------------------------------------------
// Strategy runner
// ---------------------------------------------------------------------------

struct MetricsRow {
    Strategy strategy = Strategy::kNone;
    int step = 0;
    double t = 0.0;
    double oil_error_m2 = 0.0;
    double rms_current_mps = 0.0;
    double cost_j = 0.0;
};

struct WaypointRow {
    int cycle = 0;
    int sensor_id = 0;
    double t = 0.0;
    double x = 0.0;
    double y = 0.0;
    int committed = 0;
};

struct FieldSnapshot {
    int step = 0;
    ScalarField model_presence;
};

struct StrategyResult {
    Strategy strategy = Strategy::kNone;
    std::vector<MetricsRow> rows;
    std::vector<WaypointRow> waypoints;
    std::vector<FieldSnapshot> snapshots;
    VectorField final_current;
    UncertaintyState final_uncertainty;
    std::vector<Point> final_positions;
    DmdModel final_model;
    std::vector<Eigen::Index> final_selection;
    bool has_model = false;
};

/// Runs one sensing strategy against a frozen truth record and returns its
/// metric rows (steps 1..N), waypoint log and presence snapshots.
inline StrategyResult run_strategy(const ScenarioConfig& cfg, Strategy strat,
                                   const TruthRecord& truth) {
    const GridPtr& grid = truth.grid;
    const GridSpec& g = *grid;
    const int n = cfg.time.steps();
    const double dt = cfg.time.dt;
    const int reading_every = detail::ticks_per(cfg.fleet.reading_interval, dt);
    const int plan_every = detail::ticks_per(cfg.planning.dt_plan, dt);
    const int replan_every = detail::ticks_per(cfg.fleet.replan_period, dt);
    const int refit_every = detail::ticks_per(cfg.rom.refit_interval, dt);
    const int snap_every =
        cfg.output.snapshot_interval > 0.0
            ? detail::ticks_per(cfg.output.snapshot_interval, dt)
            : 0;
    const double presence_threshold = cfg.output.presence_threshold;
    const bool sensing = strat != Strategy::kNone;
    const bool industry = strat == Strategy::kIndustry ||
                          strat == Strategy::kIndustryNoVelocity;
    const bool model_based = strat == Strategy::kModelBased;

    StrategyResult res;
    res.strategy = strat;
    res.rows.reserve(n);

    // Model current: same stacked-layer dynamics as the truth, relaxed toward
    // the test forcing (no tide). Identical machinery means the only model
    // error is the withheld forcing component.
    FluidLayer layer = make_layer(grid, cfg.flow.viscosity);
    layer.velocity = synthesize_forcing(cfg.test_forcing, grid, 0.0).first;
    layer.velocity.zero_on_land();

    // Spill ensemble; realization 0 shares the truth seed, so the truth is a
    // member of the prior ensemble (common random numbers).
    std::vector<ParticleEnsemble> reals;
    reals.reserve(cfg.spill.realizations);
    for (int r = 0; r < cfg.spill.realizations; ++r)
        reals.push_back(seed_ensemble(
            grid, {cfg.spill.release_x, cfg.spill.release_y},
            cfg.spill.volume_m3, cfg.spill.particles, cfg.spill.spread,
            detail::mix_seed(cfg.seed, detail::kStreamOil + r), r));

    DriftModel drift = DriftModel::constant_diffusion(grid, cfg.spill.dh);
    drift.current_factor = cfg.flow.current_factor;
    drift.wind_factor = cfg.flow.wind_factor;
    drift.wave_factor = 0.0;
    const VectorField zero(grid);

    UncertaintyParams params = make_uncertainty_params(
        cfg.uncertainty.zeta, dt, g.domain_area(), cfg.uncertainty.nu,
        cfg.fleet.k_s, cfg.fleet.sensor_radius, cfg.fleet.v_sensor);
    UncertaintyState unc(grid);
    VarianceSources src_x, src_y;
    src_x.eps = cfg.uncertainty.eps_x;
    src_y.eps = cfg.uncertainty.eps_y;
    ScalarField diffusion_rate = drift.diffusion;
    for (auto& v : diffusion_rate.data()) v /= dt;
    src_x.diffusion_rate = diffusion_rate;
    src_y.diffusion_rate = diffusion_rate;

    const Point base{cfg.fleet.base_x, cfg.fleet.base_y};
    std::vector<Point> sensors;   // empty until deployment
    std::vector<Point> targets;
    bool deployed = false;

    // Industry ladder state.
    LadderPlan ladder;
    bool ladder_valid = false;
    double ladder_birth = 0.0;

    // Reduced-order model state.
    StateLayout layout(grid, {"u", "v"});
    std::deque<Eigen::VectorXd> snaps;
    DmdModel model;
    DmdModel kmodel;
    bool model_valid = false;
    KalmanState kf;
    Eigen::MatrixXd basis_prev;
    bool kf_valid = false;
    int cycle = 0;

    ValueReplacementPolicy policy;
    policy.velocity_update = strat == Strategy::kIndustry
                                 ? VelocityUpdate::kReplaceInPlace
                                 : VelocityUpdate::kNone;

    auto record_snapshot = [&](int step) {
        res.snapshots.push_back({step, detail::ensemble_presence(reals, grid)});
    };

    for (int k = 0; k < n; ++k) {
        const double t = k * dt;
        const bool active =
            t >= cfg.fleet.active_start && t < cfg.fleet.active_end;

        if (active && !deployed) {
            sensors.assign(static_cast<std::size_t>(cfg.fleet.n_p), base);
            targets = sensors;
            deployed = true;
        }
        const bool operating = active && deployed;

        // --- Feedback events -------------------------------------------------
        if (operating && industry && (k % replan_every == 0 || !ladder_valid)) {
            ladder = generate_ladder(detail::ensemble_presence(reals, grid),
                                     {cfg.spill.release_x, cfg.spill.release_y},
                                     2.0 * cfg.fleet.sensor_radius,
                                     cfg.fleet.overlap, cfg.fleet.n_p,
                                     cfg.fleet.presence_floor);
            ladder_valid = true;
            ladder_birth = t;
            ++cycle;
            for (int s = 0; s < cfg.fleet.n_p; ++s) {
                Point p = section_polyline(ladder, s).front();
                res.waypoints.push_back({cycle, s, t, p.x, p.y, 1});
            }
        }

        const bool measuring =
            operating && (industry || k % reading_every == 0);
        if (measuring) {
            std::vector<Measurement> meas;
            meas.reserve(sensors.size());
            for (std::size_t s = 0; s < sensors.size(); ++s) {
                std::mt19937_64 rng(detail::mix_seed(
                    cfg.seed, detail::kStreamNoise +
                                  static_cast<std::uint64_t>(k) * 64 + s));
                std::normal_distribution<double> nd;
                CellIndex c = g.locate(sensors[s]);
                Measurement m;
                m.cell = c;
                double oil = truth.presence[static_cast<std::size_t>(k)].at(c.i, c.j);
                if (cfg.fleet.noise_oil > 0.0) oil += cfg.fleet.noise_oil * nd(rng);
                m.oil_present = oil >= presence_threshold;
                const VectorField& tc = truth.current[static_cast<std::size_t>(k)];
                m.velocity = {tc.u.at(c.i, c.j) + cfg.fleet.noise_velocity * nd(rng),
                              tc.v.at(c.i, c.j) + cfg.fleet.noise_velocity * nd(rng)};
                meas.push_back(m);
            }
            value_replace(reals, layer.velocity, meas, policy);

            if (model_based && snaps.size() >= 2) {
                // The basis is refit on the stacked window at its own cadence
                // and held fixed across the readings in between, so the
                // filter recursion accumulates observability from the moving
                // fleet in a stable modal coordinate system.
                if (!model_valid || k % refit_every == 0) {
                    SnapshotMatrix sm;
                    const auto rows = snaps.front().size();
                    const auto cols =
                        static_cast<Eigen::Index>(snaps.size()) - 1;
                    sm.x.resize(rows, cols);
                    sm.x_shift.resize(rows, cols);
                    for (Eigen::Index c = 0; c < cols; ++c) {
                        sm.x.col(c) = snaps[static_cast<std::size_t>(c)];
                        sm.x_shift.col(c) =
                            snaps[static_cast<std::size_t>(c) + 1];
                    }
                    int n_z = std::min<int>(cfg.rom.n_z, static_cast<int>(cols));
                    model = fit_dmd(sm, n_z);
                    // Trailing modes whose singular values fall below the
                    // relative floor are not determined by the window;
                    // corrections along them would be unconstrained, so the
                    // fit is truncated first.
                    int r_eff = 0;
                    for (Eigen::Index m = 0; m < model.singulars.size(); ++m)
                        if (model.singulars(m) >=
                            cfg.rom.rank_tol * model.singulars(0))
                            ++r_eff;
                    if (r_eff >= 1 && r_eff < model.rank)
                        model = fit_dmd(sm, r_eff);

                    // The filter corrects along the few most energetic modes
                    // only: point readings over-determine that small space,
                    // so noise cannot excite trailing-mode artifacts. The
                    // full fit still drives forecasting and planning.
                    kmodel = fit_dmd(
                        sm, std::min<int>(cfg.rom.n_kf, model.rank));

                    // A fit on closed-loop data can pick up spurious growth;
                    // the true window dynamics are neutral rotations, so
                    // eigenvalues outside the unit circle are pulled back
                    // onto it.
                    for (DmdModel* dm : {&model, &kmodel}) {
                        Eigen::EigenSolver<Eigen::MatrixXd> es(dm->atilde);
                        Eigen::VectorXcd lam = es.eigenvalues();
                        bool grew = false;
                        for (Eigen::Index m = 0; m < lam.size(); ++m)
                            if (std::abs(lam(m)) > 1.0) {
                                lam(m) /= std::abs(lam(m));
                                grew = true;
                            }
                        if (grew) {
                            Eigen::MatrixXcd v = es.eigenvectors();
                            dm->atilde =
                                (v * lam.asDiagonal() * v.inverse()).real();
                        }
                    }

                    KalmanState fresh =
                        make_kalman_state(kmodel, cfg.rom.p0, cfg.rom.r_meas);
                    fresh.q_proc *= cfg.rom.q_scale;
                    if (kf_valid) {
                        Eigen::MatrixXd gproj =
                            kmodel.basis.transpose() * basis_prev;
                        fresh.cov = gproj * kf.cov * gproj.transpose();
                        fresh.cov =
                            0.5 * (fresh.cov + fresh.cov.transpose()).eval();
                    }
                    kf = fresh;
                    kf_valid = true;
                    basis_prev = kmodel.basis;
                    model_valid = true;
                }

                // Directions the fleet cannot observe accumulate process
                // noise without bound; saturating the prior covariance keeps
                // their gains from swamping the update.
                {
                    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(kf.cov);
                    Eigen::VectorXd ev = es.eigenvalues()
                                             .cwiseMax(0.0)
                                             .cwiseMin(cfg.rom.cov_cap);
                    kf.cov = es.eigenvectors() * ev.asDiagonal() *
                             es.eigenvectors().transpose();
                }

                Eigen::VectorXd x = layout.stack({&layer.velocity.u,
                                                  &layer.velocity.v});
                kf.z = kmodel.project(snaps.back());

                Eigen::VectorXd y(2 * static_cast<Eigen::Index>(meas.size()));
                Eigen::MatrixXd h(y.size(), kmodel.rank);
                for (std::size_t s = 0; s < meas.size(); ++s) {
                    const CellIndex c = meas[s].cell;
                    y(2 * static_cast<Eigen::Index>(s)) = meas[s].velocity.u;
                    y(2 * static_cast<Eigen::Index>(s) + 1) = meas[s].velocity.v;
                    h.row(2 * static_cast<Eigen::Index>(s)) = kmodel.basis.row(
                        static_cast<Eigen::Index>(layout.entry(0, c.i, c.j)));
                    h.row(2 * static_cast<Eigen::Index>(s) + 1) =
                        kmodel.basis.row(
                            static_cast<Eigen::Index>(layout.entry(1, c.i, c.j)));
                }
                Eigen::VectorXd z_prior = kf.z;
                kf = kalman_step(kf, kmodel.atilde, y, h);

                Eigen::VectorXd dz = kf.z - kmodel.project(x);
                std::vector<ScalarField> dfs =
                    layout.unstack(kmodel.basis * dz);

                // The modal correction is tapered away from the fleet: a few
                // point readings constrain the field locally, and applying
                // their global extrapolation far from any sensor lets errors
                // accumulate where nothing can correct them.
                const double l2 = cfg.rom.correction_radius *
                                  cfg.rom.correction_radius;
                for (int j = 0; j < g.ny(); ++j)
                    for (int i = 0; i < g.nx(); ++i) {
                        if (!g.is_water(i, j)) continue;
                        Point cc = g.cell_center(i, j);
                        double w = 0.0;
                        for (const Point& sp : sensors) {
                            double ddx = cc.x - sp.x;
                            double ddy = cc.y - sp.y;
                            w = std::max(
                                w, std::exp(-0.5 * (ddx * ddx + ddy * ddy) /
                                            l2));
                        }
                        layer.velocity.u.at(i, j) += w * dfs[0].at(i, j);
                        layer.velocity.v.at(i, j) += w * dfs[1].at(i, j);
                    }
                layer.velocity.zero_on_land();

                // Corrected speeds are capped so a poorly conditioned update
                // (few clustered sensors fitting global modes) cannot push the
                // advecting current outside the physical regime.
                const double cap = cfg.rom.correction_limit;
                for (std::size_t k = 0; k < layer.velocity.u.size(); ++k) {
                    double spd = std::hypot(layer.velocity.u[k],
                                            layer.velocity.v[k]);
                    if (spd > cap) {
                        layer.velocity.u[k] *= cap / spd;
                        layer.velocity.v[k] *= cap / spd;
                    }
                }

                CovarianceInjection inj = covariance_injection(
                    kf.cov, kmodel.basis, layout, cfg.rom.injection_gain);
                src_x.injection = std::move(inj.e_kx);
                src_y.injection = std::move(inj.e_ky);

                if (std::getenv("SPILLSENSE_KF_DEBUG")) {
                    const VectorField& tc =
                        truth.current[static_cast<std::size_t>(k)];
                    double e2 = 0.0;
                    int nw = 0;
                    for (int j = 0; j < g.ny(); ++j)
                        for (int i = 0; i < g.nx(); ++i) {
                            if (!g.is_water(i, j)) continue;
                            double du = layer.velocity.u.at(i, j) - tc.u.at(i, j);
                            double dv = layer.velocity.v.at(i, j) - tc.v.at(i, j);
                            e2 += du * du + dv * dv;
                            ++nw;
                        }
                    Eigen::VectorXd xt = layout.stack({&tc.u, &tc.v});
                    Eigen::VectorXd te = xt - x;
                    Eigen::VectorXd dzs = kmodel.basis.transpose() * te;
                    double rms_star =
                        std::sqrt((te - kmodel.basis * dzs).squaredNorm() /
                                  static_cast<double>(nw));
                    Eigen::VectorXd innov = y - h * z_prior;
                    std::fprintf(stderr,
                                 "[kf] t=%6.2fh |innov|=%7.4f |dz|=%7.3f "
                                 "|dz*|=%7.3f |dz-dz*|=%7.3f rms_pre=%7.4f "
                                 "rms*=%7.4f rms_post=%7.4f\n",
                                 t / 3600.0, innov.norm(), dz.norm(),
                                 dzs.norm(), (dz - dzs).norm(),
                                 std::sqrt(te.squaredNorm() /
                                           static_cast<double>(nw)),
                                 rms_star, std::sqrt(e2 / nw));
                }
            }
        }

        // The snapshot stack holds post-correction states on the reading
        // cadence; the filter's one-cycle prediction spans that spacing.
        if (model_based && k % reading_every == 0) {
            snaps.push_back(layout.stack({&layer.velocity.u, &layer.velocity.v}));
            while (snaps.size() > static_cast<std::size_t>(cfg.rom.window))
                snaps.pop_front();
        }

        // --- Receding-horizon planning (model strategy) ----------------------
        if (operating && model_based && k % plan_every == 0) {
            ScalarField pov = detail::ensemble_presence(reals, grid);
            ScalarField se = entropy_neighborhood(pov);
            ScalarField pdmd(grid);
            res.final_selection.clear();
            if (model_valid && pov.max_value() > 0.0) {
                Eigen::MatrixXd u_s =
                    scale_modes(model.basis, model.singulars, cfg.rom.k_id);
                int n_pick = std::min<int>(cfg.fleet.n_p,
                                           static_cast<int>(u_s.rows()));
                IdSelection sel = interpolative_decomposition(
                    u_s, n_pick, cfg.rom.f_rrqr, cfg.rom.k_id);
                pdmd = pdmd_weighting(sel, pov, layout);
                res.final_selection = sel.rows;
            }
            WeightingConfig wcfg{cfg.planning.k_pov, cfg.planning.k_se,
                                 cfg.planning.k_pdmd, cfg.planning.k_domain};
            ScalarField weighting = weighting_field(pov, se, pdmd, wcfg);

            PlanningScenario scn;
            scn.grid = grid;
            scn.velocity = combined_drift(
                layer.velocity,
                evaluate_analytic(cfg.test_forcing.wind, grid, t), zero, zero,
                drift);
            scn.weighting = std::move(weighting);
            scn.params = make_uncertainty_params(
                cfg.uncertainty.zeta, cfg.planning.window_dt, g.domain_area(),
                cfg.uncertainty.nu, cfg.fleet.k_s, cfg.fleet.sensor_radius,
                cfg.fleet.v_sensor);
            scn.sources_x = src_x;
            scn.sources_y = src_y;
            ScalarField window_rate = drift.diffusion;
            for (auto& v : window_rate.data()) v /= cfg.planning.window_dt;
            scn.sources_x.diffusion_rate = window_rate;
            scn.sources_y.diffusion_rate = std::move(window_rate);
            scn.init = unc;
            scn.start = sensors;
            scn.dt = cfg.planning.window_dt;
            scn.n_steps = cfg.planning.window_steps;
            scn.k_pen = cfg.planning.k_pen;

            DescentConfig dcfg;
            dcfg.zeta_g = cfg.planning.zeta_g;
            dcfg.max_iters = cfg.planning.max_iters;
            PlanResult plan =
                plan_receding_horizon(scn, cfg.planning.horizons, dcfg);
            targets = plan.committed;
            ++cycle;
            for (std::size_t s = 0; s < targets.size(); ++s)
                res.waypoints.push_back({cycle, static_cast<int>(s), t,
                                         targets[s].x, targets[s].y, 1});
            for (const HorizonChain& chain : plan.chains) {
                if (chain.horizon != plan.chosen_horizon) continue;
                for (std::size_t w = 1; w < chain.waypoints.size(); ++w)
                    for (std::size_t s = 0; s < chain.waypoints[w].size(); ++s)
                        res.waypoints.push_back(
                            {cycle, static_cast<int>(s), t,
                             chain.waypoints[w][s].x, chain.waypoints[w][s].y,
                             0});
                break;
            }
        }

        // --- Sensor motion ----------------------------------------------------
        std::vector<Point> sensors_prev = sensors;
        if (operating) {
            const double budget = cfg.fleet.v_sensor * dt;
            std::vector<Point> goals = targets;
            if (industry && ladder_valid) {
                std::vector<Point> path = follow_path(
                    ladder, cfg.fleet.v_sensor, t + dt - ladder_birth);
                for (std::size_t s = 0; s < sensors.size(); ++s)
                    goals[s] = path[s % path.size()];
            }
            for (std::size_t s = 0; s < sensors.size(); ++s)
                sensors[s] = detail::move_toward(sensors[s], goals[s], budget);
        }

        // --- Uncertainty, oil and flow updates -------------------------------
        ScalarField mask =
            operating ? sensor_mask(sensors, sensors_prev, dt, 0.0, params, grid)
                      : ScalarField(grid);
        VectorField wind = evaluate_analytic(cfg.test_forcing.wind, grid, t);
        VectorField vel = combined_drift(layer.velocity, wind, zero, zero, drift);

        for (ParticleEnsemble& ens : reals)
            ens = advect_particles(ens, vel, drift.diffusion, dt);

        ScalarField new_vx = step_variance(unc.var_x, vel, mask, src_x, params, dt);
        ScalarField new_vy = step_variance(unc.var_y, vel, mask, src_y, params, dt);
        ScalarField dvx(grid), dvy(grid);
        for (std::size_t c = 0; c < dvx.size(); ++c) {
            dvx[c] = (new_vx[c] - unc.var_x[c]) / dt;
            dvy[c] = (new_vy[c] - unc.var_y[c]) / dt;
        }
        unc.q = step_tracer(unc.q, unc.var_x, unc.var_y, dvx, dvy, params, dt);
        unc.var_x = std::move(new_vx);
        unc.var_y = std::move(new_vy);

        detail::set_relaxation_source(
            layer, synthesize_forcing(cfg.test_forcing, grid, t).first,
            cfg.flow.relax_tau);
        layer = step_layer(layer, dt);

        // --- Metrics at t_{k+1} ----------------------------------------------
        const int step = k + 1;
        const ScalarField& truth_p = truth.presence[static_cast<std::size_t>(step)];
        ScalarField model_p = detail::ensemble_presence(reals, grid);
        MetricsRow row;
        row.strategy = strat;
        row.step = step;
        row.t = step * dt;
        row.oil_error_m2 =
            oil_presence_error(truth_p, model_p, presence_threshold);
        row.rms_current_mps = rms_current_error(
            truth.current[static_cast<std::size_t>(step)], layer.velocity,
            truth_p, presence_threshold);
        row.cost_j = uncertainty_cost(unc.q);
        res.rows.push_back(row);

        if ((snap_every > 0 && step % snap_every == 0) || step == n)
            record_snapshot(step);
    }

    res.final_current = layer.velocity;
    res.final_uncertainty = unc;
    res.final_positions = sensors;
    res.final_model = model;
    res.has_model = model_valid;
    return res;
}

// ---------------------------------------------------------------------------
// Twin experiment
// ---------------------------------------------------------------------------

struct TwinResult {
    TruthRecord truth;
    std::vector<StrategyResult> strategies;  // fixed order of all_strategies()
};

/// Simulates the truth once, then runs every strategy against the frozen
/// record; strategies are independent and may run on separate threads.
inline TwinResult run_twin_experiment(const ScenarioConfig& cfg,
                                      int threads = 1) {
    cfg.validate();
    GridPtr grid =
        make_grid(cfg.grid.nx, cfg.grid.ny, cfg.grid.dx, cfg.grid.dy,
                  {cfg.grid.origin_x, cfg.grid.origin_y});
    TwinResult out;
    out.truth = simulate_truth(cfg, grid);

    const std::vector<Strategy> strategies = all_strategies();
    out.strategies.resize(strategies.size());
    if (threads <= 1) {
        for (std::size_t s = 0; s < strategies.size(); ++s)
            out.strategies[s] = run_strategy(cfg, strategies[s], out.truth);
        return out;
    }

    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(strategies.size());
    auto worker = [&]() {
        for (;;) {
            std::size_t s = next.fetch_add(1);
            if (s >= strategies.size()) return;
            try {
                out.strategies[s] = run_strategy(cfg, strategies[s], out.truth);
            } catch (...) {
                errors[s] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const std::size_t n_threads = std::min<std::size_t>(
        static_cast<std::size_t>(threads), strategies.size());
    pool.reserve(n_threads);
    for (std::size_t w = 0; w < n_threads; ++w) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
    for (const std::exception_ptr& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

// ---------------------------------------------------------------------------
// Summaries used by the experiment comparisons
// ---------------------------------------------------------------------------

/// Time average of one metric column over rows with t0 < t <= t1; NaN samples
/// are skipped, and an empty selection returns NaN.
inline double time_average(const std::vector<MetricsRow>& rows, double t0,
                           double t1, double MetricsRow::*column) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const MetricsRow& r : rows) {
        if (r.t <= t0 || r.t > t1) continue;
        double v = r.*column;
        if (std::isnan(v)) continue;
        sum += v;
        ++count;
    }
    if (count == 0) return std::numeric_limits<double>::quiet_NaN();
    return sum / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Output emission
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> metrics_cells(const MetricsRow& r) {
    return {strategy_name(r.strategy),
            std::to_string(r.step),
            format_number(r.t),
            format_number(r.oil_error_m2),
            format_number(r.rms_current_mps),
            format_number(r.cost_j)};
}

inline CsvTable waypoint_table(const std::vector<WaypointRow>& rows) {
    CsvTable t;
    t.header = {"cycle", "sensor_id", "t", "x", "y", "committed"};
    for (const WaypointRow& w : rows)
        t.rows.push_back({std::to_string(w.cycle), std::to_string(w.sensor_id),
                          format_number(w.t), format_number(w.x),
                          format_number(w.y), std::to_string(w.committed)});
    return t;
}

}  // namespace detail

/// Writes the experiment artifacts: scenario config, metrics and waypoint
/// CSVs, presence / current / uncertainty field files, the exported reduced
/// model and the rendered plots.
inline void emit_outputs(const ScenarioConfig& cfg, const TwinResult& twin,
                         const std::string& out_dir) {
    ensure_directory(out_dir);
    ensure_directory(out_dir + "/fields");
    ensure_directory(out_dir + "/models");
    save_config(out_dir + "/config.json", cfg);

    {
        CsvWriter metrics(out_dir + "/metrics.csv",
                          "strategy,step,t,oil_error_m2,rms_current_mps,J",
                          {"seed=" + std::to_string(cfg.seed)});
        for (const StrategyResult& res : twin.strategies)
            for (const MetricsRow& r : res.rows)
                metrics.row(detail::metrics_cells(r));
    }

    for (const StrategyResult& res : twin.strategies) {
        const std::string name = strategy_name(res.strategy);
        CsvTable table = detail::waypoint_table(res.waypoints);
        CsvWriter way(out_dir + "/waypoints_" + name + ".csv",
                      "cycle,sensor_id,t,x,y,committed");
        for (const auto& row : table.rows) way.row(row);

        for (const FieldSnapshot& snap : res.snapshots) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "_step%06d", snap.step);
            const ScalarField& truth_p =
                twin.truth.presence[static_cast<std::size_t>(snap.step)];
            write_fld1(out_dir + "/fields/presence_" + name + buf + ".fld",
                       {"truth", "model"}, {&truth_p, &snap.model_presence});
        }
        if (!res.snapshots.empty()) {
            const FieldSnapshot& last = res.snapshots.back();
            const ScalarField& truth_p =
                twin.truth.presence[static_cast<std::size_t>(last.step)];
            write_fld1(out_dir + "/fields/presence_" + name + "_final.fld",
                       {"truth", "model"}, {&truth_p, &last.model_presence});
        }
        const VectorField& tc = twin.truth.current.back();
        write_fld1(out_dir + "/fields/current_" + name + "_final.fld",
                   {"u_truth", "v_truth", "u_model", "v_model"},
                   {&tc.u, &tc.v, &res.final_current.u, &res.final_current.v});
        write_fld1(out_dir + "/fields/uncertainty_" + name + "_final.fld",
                   {"q", "var_x", "var_y"},
                   {&res.final_uncertainty.q, &res.final_uncertainty.var_x,
                    &res.final_uncertainty.var_y});
        if (res.has_model)
            write_dmd_model(out_dir + "/models/dmd_" + name + ".txt",
                            res.final_model, res.final_selection);
    }

    render_metrics_plots(out_dir + "/metrics.csv", out_dir + "/plots");

    std::vector<std::pair<std::string, const ScalarField*>> fields;
    fields.push_back({"truth", &twin.truth.presence.back()});
    const ScalarField* model_final = nullptr;
    for (const StrategyResult& res : twin.strategies)
        if (res.strategy == Strategy::kModelBased && !res.snapshots.empty())
            model_final = &res.snapshots.back().model_presence;
    if (model_final) fields.push_back({"model-based", model_final});

    std::vector<CsvTable> track_tables;
    std::vector<std::pair<std::string, const CsvTable*>> tracks;
    track_tables.reserve(twin.strategies.size());
    for (const StrategyResult& res : twin.strategies) {
        if (res.waypoints.empty()) continue;
        track_tables.push_back(detail::waypoint_table(res.waypoints));
        tracks.push_back({strategy_name(res.strategy), &track_tables.back()});
    }
    render_final_map(out_dir + "/plots/map.svg", fields, tracks);
}

}  // namespace spillsense
