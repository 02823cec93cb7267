/// @file spillsense_main.cpp
/// Command-line front end: truth/open-loop simulation, one-shot planning,
/// the industry baseline, the full twin comparison, metric recomputation
/// from persisted fields, and plot regeneration from the CSV artifacts.

#include <cstdint>
#include <cstdio>
#include <deque>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spillsense/spillsense.hpp"

namespace {

using namespace spillsense;

struct GlobalArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 1;
};

ScenarioConfig resolve_config(const GlobalArgs& args) {
    ScenarioConfig cfg =
        args.config_path.empty() ? default_config() : load_config(args.config_path);
    if (args.seed_set) cfg.seed = args.seed;
    cfg.validate();
    return cfg;
}

GridPtr grid_of(const ScenarioConfig& cfg) {
    return make_grid(cfg.grid.nx, cfg.grid.ny, cfg.grid.dx, cfg.grid.dy,
                     {cfg.grid.origin_x, cfg.grid.origin_y});
}

std::vector<int> snapshot_steps(const ScenarioConfig& cfg) {
    const int n = cfg.time.steps();
    std::vector<int> steps;
    if (cfg.output.snapshot_interval > 0.0) {
        const int every = std::max(
            1, static_cast<int>(std::llround(cfg.output.snapshot_interval /
                                             cfg.time.dt)));
        for (int k = every; k <= n; k += every) steps.push_back(k);
    }
    if (steps.empty() || steps.back() != n) steps.push_back(n);
    return steps;
}

void write_particle_rows(CsvWriter& csv, const ParticleEnsemble& ens, int step) {
    for (std::size_t p = 0; p < ens.particles.size(); ++p) {
        const OilParticle& part = ens.particles[p];
        csv.row({std::to_string(ens.realization), std::to_string(step),
                 std::to_string(p), format_number(part.position.x),
                 format_number(part.position.y), format_number(part.volume),
                 part.active ? "1" : "0"});
    }
}

/// Open-loop run of the current layer and spill ensemble under the given
/// forcing; particle states stream into the CSV on the snapshot cadence.
int run_simulate(const GlobalArgs& args, bool truth_mode) {
    ScenarioConfig cfg = resolve_config(args);
    GridPtr grid = grid_of(cfg);
    const SyntheticForcing& forcing =
        truth_mode ? cfg.truth_forcing : cfg.test_forcing;
    const int n = cfg.time.steps();
    const double dt = cfg.time.dt;
    const int realizations = cfg.spill.realizations;

    ensure_directory(args.out_dir);
    ensure_directory(args.out_dir + "/fields");
    save_config(args.out_dir + "/config.json", cfg);
    CsvWriter particles(args.out_dir + "/particles.csv",
                        "realization,step,particle_id,x,y,volume,active",
                        {"seed=" + std::to_string(cfg.seed),
                         truth_mode ? "forcing=truth" : "forcing=test"});

    FluidLayer layer = make_layer(grid, cfg.flow.viscosity);
    layer.velocity = synthesize_forcing(forcing, grid, 0.0).first;
    layer.velocity.zero_on_land();

    std::vector<ParticleEnsemble> reals;
    for (int r = 0; r < realizations; ++r)
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

    std::vector<int> snaps = snapshot_steps(cfg);
    for (const ParticleEnsemble& ens : reals) write_particle_rows(particles, ens, 0);

    std::size_t next_snap = 0;
    for (int k = 0; k < n; ++k) {
        const double t = k * dt;
        auto forced = synthesize_forcing(forcing, grid, t);
        VectorField vel =
            combined_drift(layer.velocity, forced.second, zero, zero, drift);
        for (ParticleEnsemble& ens : reals)
            ens = advect_particles(ens, vel, drift.diffusion, dt);
        detail::set_relaxation_source(layer, forced.first, cfg.flow.relax_tau);
        layer = step_layer(layer, dt);
        if (next_snap < snaps.size() && k + 1 == snaps[next_snap]) {
            for (const ParticleEnsemble& ens : reals)
                write_particle_rows(particles, ens, k + 1);
            ++next_snap;
        }
    }

    ScalarField presence = detail::ensemble_presence(reals, grid);
    write_fld1(args.out_dir + "/fields/presence_openloop_final.fld",
               {"presence"}, {&presence});
    write_fld1(args.out_dir + "/fields/current_openloop_final.fld", {"u", "v"},
               {&layer.velocity.u, &layer.velocity.v});
    std::cout << "simulate: " << realizations << " realization(s), " << n
              << " steps -> " << args.out_dir << "\n";
    return 0;
}

/// One cold-start planning cycle at the chosen time: open-loop model spin-up,
/// weighting assembly, interest-peak initialization and the receding-horizon
/// plan over the configured horizons.
int run_plan(const GlobalArgs& args, double plan_time) {
    ScenarioConfig cfg = resolve_config(args);
    GridPtr grid = grid_of(cfg);
    const GridSpec& g = *grid;
    if (plan_time < 0.0) plan_time = cfg.fleet.active_start;
    const double dt = cfg.time.dt;
    const int n = std::min(cfg.time.steps(),
                           static_cast<int>(std::llround(plan_time / dt)));
    const int reading_every =
        std::max(1, static_cast<int>(std::llround(cfg.fleet.reading_interval / dt)));

    FluidLayer layer = make_layer(grid, cfg.flow.viscosity);
    layer.velocity = synthesize_forcing(cfg.test_forcing, grid, 0.0).first;
    layer.velocity.zero_on_land();
    std::vector<ParticleEnsemble> reals;
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

    StateLayout layout(grid, {"u", "v"});
    std::deque<Eigen::VectorXd> snaps;
    snaps.push_back(layout.stack({&layer.velocity.u, &layer.velocity.v}));
    for (int k = 0; k < n; ++k) {
        const double t = k * dt;
        auto forced = synthesize_forcing(cfg.test_forcing, grid, t);
        VectorField vel =
            combined_drift(layer.velocity, forced.second, zero, zero, drift);
        for (ParticleEnsemble& ens : reals)
            ens = advect_particles(ens, vel, drift.diffusion, dt);
        detail::set_relaxation_source(layer, forced.first, cfg.flow.relax_tau);
        layer = step_layer(layer, dt);
        if ((k + 1) % reading_every == 0) {
            snaps.push_back(layout.stack({&layer.velocity.u, &layer.velocity.v}));
            while (snaps.size() > static_cast<std::size_t>(cfg.rom.window))
                snaps.pop_front();
        }
    }

    ScalarField pov = detail::ensemble_presence(reals, grid);
    ScalarField se = entropy_neighborhood(pov);
    ScalarField pdmd(grid);
    if (snaps.size() >= 2 && pov.max_value() > 0.0) {
        SnapshotMatrix sm;
        const auto cols = static_cast<Eigen::Index>(snaps.size()) - 1;
        sm.x.resize(snaps.front().size(), cols);
        sm.x_shift.resize(snaps.front().size(), cols);
        for (Eigen::Index c = 0; c < cols; ++c) {
            sm.x.col(c) = snaps[static_cast<std::size_t>(c)];
            sm.x_shift.col(c) = snaps[static_cast<std::size_t>(c) + 1];
        }
        DmdModel model =
            fit_dmd(sm, std::min<int>(cfg.rom.n_z, static_cast<int>(cols)));
        Eigen::MatrixXd u_s =
            scale_modes(model.basis, model.singulars, cfg.rom.k_id);
        IdSelection sel = interpolative_decomposition(
            u_s, std::min<int>(cfg.fleet.n_p, static_cast<int>(u_s.rows())),
            cfg.rom.f_rrqr, cfg.rom.k_id);
        pdmd = pdmd_weighting(sel, pov, layout);
    }
    WeightingConfig wcfg{cfg.planning.k_pov, cfg.planning.k_se,
                         cfg.planning.k_pdmd, cfg.planning.k_domain};
    ScalarField weighting = weighting_field(pov, se, pdmd, wcfg);

    PlanningScenario scn;
    scn.grid = grid;
    scn.velocity = combined_drift(
        layer.velocity,
        evaluate_analytic(cfg.test_forcing.wind, grid, n * dt), zero, zero,
        drift);
    scn.weighting = weighting;
    scn.params = make_uncertainty_params(
        cfg.uncertainty.zeta, cfg.planning.window_dt, g.domain_area(),
        cfg.uncertainty.nu, cfg.fleet.k_s, cfg.fleet.sensor_radius,
        cfg.fleet.v_sensor);
    scn.sources_x.eps = cfg.uncertainty.eps_x;
    scn.sources_y.eps = cfg.uncertainty.eps_y;
    ScalarField rate = drift.diffusion;
    for (auto& v : rate.data()) v /= cfg.planning.window_dt;
    scn.sources_x.diffusion_rate = rate;
    scn.sources_y.diffusion_rate = std::move(rate);
    scn.init = UncertaintyState(grid);
    scn.start = initial_positions(weighting, cfg.fleet.n_p);
    scn.dt = cfg.planning.window_dt;
    scn.n_steps = cfg.planning.window_steps;
    scn.k_pen = cfg.planning.k_pen;

    DescentConfig dcfg;
    dcfg.zeta_g = cfg.planning.zeta_g;
    dcfg.max_iters = cfg.planning.max_iters;
    PlanResult plan = plan_receding_horizon(scn, cfg.planning.horizons, dcfg);

    ensure_directory(args.out_dir);
    ensure_directory(args.out_dir + "/fields");
    save_config(args.out_dir + "/config.json", cfg);
    write_fld1(args.out_dir + "/fields/weighting.fld",
               {"weighting", "presence", "entropy", "pdmd"},
               {&weighting, &pov, &se, &pdmd});
    CsvWriter way(args.out_dir + "/waypoints_plan.csv",
                  "cycle,sensor_id,t,x,y,committed");
    for (std::size_t s = 0; s < plan.committed.size(); ++s)
        way.row({"1", std::to_string(s), format_number(n * dt),
                 format_number(plan.committed[s].x),
                 format_number(plan.committed[s].y), "1"});
    std::cout << "plan: horizon " << plan.chosen_horizon
              << " chosen at t=" << format_number(n * dt, 6) << " s\n";
    for (std::size_t s = 0; s < plan.committed.size(); ++s)
        std::cout << "  sensor " << s << " -> ("
                  << format_number(plan.committed[s].x, 6) << ", "
                  << format_number(plan.committed[s].y, 6) << ")\n";
    return 0;
}

void print_strategy_summary(const ScenarioConfig& cfg,
                            const StrategyResult& res) {
    const double t_on = cfg.fleet.active_start;
    const double t_off = cfg.fleet.active_end;
    const double t_end = cfg.time.duration;
    std::printf("  %-22s active-avg %10.0f m^2 | post-avg %10.0f m^2 | "
                "final %10.0f m^2 | post-rms %.4f m/s\n",
                strategy_name(res.strategy),
                time_average(res.rows, t_on, t_off, &MetricsRow::oil_error_m2),
                time_average(res.rows, t_off, t_end, &MetricsRow::oil_error_m2),
                res.rows.back().oil_error_m2,
                time_average(res.rows, t_off, t_end,
                             &MetricsRow::rms_current_mps));
}

int run_twin(const GlobalArgs& args, bool baseline_only) {
    ScenarioConfig cfg = resolve_config(args);
    TwinResult twin;
    if (baseline_only) {
        GridPtr grid = grid_of(cfg);
        twin.truth = simulate_truth(cfg, grid);
        twin.strategies.push_back(
            run_strategy(cfg, Strategy::kIndustry, twin.truth));
    } else {
        twin = run_twin_experiment(cfg, args.threads);
    }
    emit_outputs(cfg, twin, args.out_dir);
    std::cout << (baseline_only ? "baseline" : "twin") << " (seed "
              << cfg.seed << "):\n";
    for (const StrategyResult& res : twin.strategies)
        print_strategy_summary(cfg, res);
    std::cout << "artifacts -> " << args.out_dir << "\n";
    return 0;
}

/// Recomputes the oil presence error from the persisted FLD1 snapshots and
/// cross-checks the stored metrics rows where steps coincide.
int run_metrics(const GlobalArgs& args) {
    ScenarioConfig cfg = args.config_path.empty()
                             ? load_config(args.out_dir + "/config.json")
                             : load_config(args.config_path);
    if (args.seed_set) cfg.seed = args.seed;
    const std::vector<int> steps = snapshot_steps(cfg);

    CsvWriter out(args.out_dir + "/metrics_recomputed.csv",
                  "strategy,step,t,oil_error_m2");
    int written = 0;
    for (Strategy strat : all_strategies()) {
        const std::string name = strategy_name(strat);
        for (int step : steps) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "_step%06d", step);
            const std::string path =
                args.out_dir + "/fields/presence_" + name + buf + ".fld";
            Fld1File file;
            try {
                file = read_fld1(path);
            } catch (const IoError&) {
                continue;
            }
            double err = oil_presence_error(file.field("truth"),
                                            file.field("model"),
                                            cfg.output.presence_threshold);
            out.row({name, std::to_string(step),
                     format_number(step * cfg.time.dt), format_number(err)});
            ++written;
        }
    }
    std::cout << "metrics: recomputed " << written << " snapshot errors -> "
              << args.out_dir << "/metrics_recomputed.csv\n";
    return 0;
}

int run_plot(const GlobalArgs& args) {
    render_metrics_plots(args.out_dir + "/metrics.csv", args.out_dir + "/plots");

    std::vector<std::pair<std::string, const ScalarField*>> fields;
    std::vector<Fld1File> files;
    std::vector<CsvTable> tables;
    std::vector<std::pair<std::string, const CsvTable*>> tracks;
    files.reserve(8);
    tables.reserve(8);
    for (Strategy strat : all_strategies()) {
        const std::string name = strategy_name(strat);
        try {
            files.push_back(read_fld1(args.out_dir + "/fields/presence_" +
                                      name + "_final.fld"));
        } catch (const IoError&) {
            continue;
        }
        if (fields.empty())
            fields.push_back({"truth", &files.back().field("truth")});
        if (strat == Strategy::kModelBased)
            fields.push_back({"model-based", &files.back().field("model")});
        try {
            CsvTable t = read_csv(args.out_dir + "/waypoints_" + name + ".csv");
            if (!t.rows.empty()) {
                tables.push_back(std::move(t));
                tracks.push_back({name, &tables.back()});
            }
        } catch (const IoError&) {
        }
    }
    if (fields.empty()) {
        std::cerr << "plot: no presence fields under " << args.out_dir
                  << "/fields\n";
        return 1;
    }
    render_final_map(args.out_dir + "/plots/map.svg", fields, tracks);
    std::cout << "plot: wrote " << args.out_dir << "/plots\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "spillsense: adaptive sensing simulator for surface oil spills"};
    app.require_subcommand(1);

    GlobalArgs args;
    app.add_option("--config", args.config_path,
                   "Scenario configuration JSON (defaults when omitted)");
    app.add_option("--seed", args.seed, "Override the scenario seed")
        ->each([&args](const std::string&) { args.seed_set = true; });
    app.add_option("--out", args.out_dir, "Output directory")
        ->capture_default_str();
    app.add_option("--threads", args.threads,
                   "Worker threads for strategy runs")
        ->capture_default_str();

    bool truth_mode = false;
    CLI::App* simulate = app.add_subcommand(
        "simulate", "Open-loop spill simulation with particle output");
    simulate->add_flag("--truth", truth_mode,
                       "Use the truth forcing and a single realization");

    double plan_time = -1.0;
    CLI::App* plan = app.add_subcommand(
        "plan", "One cold-start sensor planning cycle");
    plan->add_option("--t", plan_time,
                     "Planning time in seconds (default: activation time)");

    CLI::App* baseline = app.add_subcommand(
        "baseline", "Industry ladder baseline against the synthetic truth");
    CLI::App* twin = app.add_subcommand(
        "twin", "Full twin comparison across all strategies");
    CLI::App* metrics = app.add_subcommand(
        "metrics", "Recompute oil errors from persisted field snapshots");
    CLI::App* plot = app.add_subcommand(
        "plot", "Regenerate plots from persisted CSV and field artifacts");

    CLI11_PARSE(app, argc, argv);

    try {
        if (simulate->parsed()) return run_simulate(args, truth_mode);
        if (plan->parsed()) return run_plan(args, plan_time);
        if (baseline->parsed()) return run_twin(args, true);
        if (twin->parsed()) return run_twin(args, false);
        if (metrics->parsed()) return run_metrics(args);
        if (plot->parsed()) return run_plot(args);
    } catch (const std::exception& e) {
        std::cerr << "spillsense: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
