#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "spillsense/errors.hpp"
#include "spillsense/flow.hpp"
#include "spillsense/grid.hpp"

namespace spillsense {

enum class Strategy { kNone, kIndustry, kIndustryNoVelocity, kModelBased };

inline const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::kNone: return "none";
        case Strategy::kIndustry: return "industry";
        case Strategy::kIndustryNoVelocity: return "industry-no-velocity";
        case Strategy::kModelBased: return "model-based";
    }
    throw ConfigError("strategy_name: unknown strategy");
}

inline Strategy parse_strategy(const std::string& name) {
    if (name == "none") return Strategy::kNone;
    if (name == "industry") return Strategy::kIndustry;
    if (name == "industry-no-velocity") return Strategy::kIndustryNoVelocity;
    if (name == "model-based") return Strategy::kModelBased;
    throw ConfigError("unknown strategy \"" + name +
                      "\" (expected none | industry | industry-no-velocity | "
                      "model-based)");
}

inline std::vector<Strategy> all_strategies() {
    return {Strategy::kNone, Strategy::kIndustry, Strategy::kIndustryNoVelocity,
            Strategy::kModelBased};
}

// ---------------------------------------------------------------------------
// Scenario configuration blocks
// ---------------------------------------------------------------------------

struct GridConfig {
    int nx = 48;
    int ny = 48;
    double dx = 1000.0;  // m
    double dy = 1000.0;  // m
    double origin_x = 0.0;
    double origin_y = 0.0;
};

struct TimeConfig {
    double dt = 60.0;          // s
    double duration = 68400.0;  // s (19 h)

    int steps() const { return static_cast<int>(std::llround(duration / dt)); }
};

struct SpillConfig {
    double release_x = 16000.0;  // m
    double release_y = 24000.0;  // m
    double volume_m3 = 15.9;     // 100 barrels
    int particles = 2000;
    int realizations = 8;  // S_T
    double spread = 500.0;  // initial scatter, m
    double dh = 2.0;        // horizontal diffusion, m^2/s
};

struct FleetConfig {
    int n_p = 4;
    double v_sensor = 26.8;          // m/s (60 mph)
    double reading_interval = 900.0;  // s
    double active_start = 3600.0;     // s after release
    double active_end = 54000.0;      // s (active_start + 14 h)
    double sensor_radius = 1000.0;    // m
    double k_s = 1.0;
    double base_x = 23500.0;  // staging location, m
    double base_y = 1500.0;
    double noise_velocity = 0.02;  // m/s std dev
    double noise_oil = 0.0;
    double replan_period = 3600.0;  // industry ladder refresh, s
    double overlap = 0.10;
    double presence_floor = 0.01;
};

struct FlowConfig {
    double viscosity = 5.0;     // m^2/s
    double relax_tau = 10800.0;  // forcing relaxation time, s
    double wind_factor = 0.03;
    double current_factor = 1.0;
};

struct UncertaintyConfig {
    double zeta = 0.95;
    double nu = 50.0;      // variance diffusion, m^2/s
    double eps_x = 0.25;   // external variance growth, m^2/s^3
    double eps_y = 0.25;
};

struct RomConfig {
    int n_z = 5;
    int n_kf = 3;              // leading modes the filter corrects along
    double k_id = 0.5;
    double f_rrqr = 2.0;
    int window = 12;           // snapshots kept for each fit
    double p0 = 0.25;          // initial modal covariance
    double r_meas = 4e-4;      // measurement noise variance
    double q_scale = 8.0;      // multiplier on the derived process noise
    double rank_tol = 1e-3;    // relative singular-value floor for kept modes
    double cov_cap = 2.0;      // ceiling on carried modal covariance eigenvalues
    double refit_interval = 900.0;  // seconds between basis refits
    double correction_limit = 1.2;   // cap on corrected speeds, m/s
    double correction_radius = 16000.0;  // taper length for corrections, m
    double injection_gain = 1.0;
};

struct PlanningConfig {
    std::vector<int> horizons = {1, 2, 4};
    double dt_plan = 900.0;    // replanning cadence, s
    double window_dt = 300.0;  // rollout sub-step, s
    int window_steps = 12;     // sub-steps per planning window
    double k_pen = 1e5;
    double zeta_g = 1e-3;
    int max_iters = 10;  // per window in the twin loop
    double k_pov = 1.0;
    double k_se = 1.0;
    double k_pdmd = 1.0;
    double k_domain = 1.0;
};

struct OutputConfig {
    double snapshot_interval = 3600.0;  // s; 0 writes only the final state
    double presence_threshold = 0.05;
};

struct ScenarioConfig {
    GridConfig grid;
    TimeConfig time;
    SpillConfig spill;
    FleetConfig fleet;
    SyntheticForcing truth_forcing;
    SyntheticForcing test_forcing;
    FlowConfig flow;
    UncertaintyConfig uncertainty;
    RomConfig rom;
    PlanningConfig planning;
    OutputConfig output;
    Strategy strategy = Strategy::kModelBased;
    std::uint64_t seed = 1;

    void validate() const;
};

/// Desk-scale default scenario: quick enough for a full strategy comparison
/// yet large enough that the tidal truth/test asymmetry matters.
inline ScenarioConfig default_config() {
    ScenarioConfig cfg;
    cfg.truth_forcing.current.uniform = {0.25, 0.12};
    cfg.truth_forcing.current.rotation_period = 172800.0;  // 48 h
    cfg.truth_forcing.current.gyre_amplitude = 0.10;
    cfg.truth_forcing.wind.uniform = {4.0, 1.5};
    cfg.truth_forcing.wind.rotation_period = 259200.0;  // 72 h
    cfg.truth_forcing.tide.amplitude = 0.50;
    cfg.truth_forcing.tide.period = 44712.0;  // 12.42 h
    cfg.truth_forcing.tide.phase = 0.0;
    cfg.truth_forcing.tide.direction = {0.8, 0.6};
    cfg.truth_forcing.include_tide = true;

    cfg.test_forcing = cfg.truth_forcing;
    cfg.test_forcing.include_tide = false;
    return cfg;
}

inline void ScenarioConfig::validate() const {
    if (grid.nx < 3 || grid.ny < 3)
        throw ConfigError("config: grid must be at least 3x3");
    if (grid.dx <= 0.0 || grid.dy <= 0.0)
        throw ConfigError("config: cell sizes must be positive");
    if (time.dt <= 0.0 || time.duration <= 0.0)
        throw ConfigError("config: time step and duration must be positive");
    if (spill.particles < 1 || spill.realizations < 1)
        throw ConfigError("config: need at least one particle and realization");
    if (spill.volume_m3 <= 0.0)
        throw ConfigError("config: spill volume must be positive");
    if (fleet.n_p < 1) throw ConfigError("config: need at least one sensor");
    if (fleet.v_sensor <= 0.0)
        throw ConfigError("config: sensor speed must be positive");
    if (fleet.reading_interval <= 0.0)
        throw ConfigError("config: reading interval must be positive");
    if (fleet.active_start < 0.0 || fleet.active_end > time.duration ||
        fleet.active_start >= fleet.active_end)
        throw ConfigError(
            "config: active window must lie within the simulation window");
    if (fleet.sensor_radius <= 0.0)
        throw ConfigError("config: sensor radius must be positive");
    if (fleet.k_s < 0.0 || fleet.k_s > 1.0)
        throw ConfigError("config: sensor effectiveness must lie in [0,1]");
    if (flow.viscosity <= 0.0 || flow.relax_tau <= 0.0)
        throw ConfigError("config: viscosity and relaxation time must be positive");
    if (uncertainty.zeta <= 0.0 || uncertainty.zeta >= 1.0)
        throw ConfigError("config: containment probability must be in (0,1)");
    if (rom.n_z < 1) throw ConfigError("config: need at least one mode");
    if (rom.n_kf < 1)
        throw ConfigError("config: filter needs at least one mode");
    if (rom.window < 2)
        throw ConfigError("config: snapshot window must hold at least 2");
    if (rom.correction_limit <= 0.0)
        throw ConfigError("config: correction speed limit must be positive");
    if (rom.correction_radius <= 0.0)
        throw ConfigError("config: correction taper radius must be positive");
    if (rom.cov_cap <= 0.0)
        throw ConfigError("config: covariance ceiling must be positive");
    if (rom.refit_interval <= 0.0)
        throw ConfigError("config: basis refit interval must be positive");
    if (planning.horizons.empty())
        throw ConfigError("config: need at least one planning horizon");
    for (int h : planning.horizons)
        if (h < 1) throw ConfigError("config: horizons must be positive");
    if (planning.dt_plan < time.dt)
        throw ConfigError("config: planning step must be at least one time step");
    if (planning.window_dt <= 0.0 || planning.window_steps < 1)
        throw ConfigError("config: planning window must have positive sub-steps");
    if (output.presence_threshold <= 0.0 || output.presence_threshold > 1.0)
        throw ConfigError("config: presence threshold must lie in (0,1]");
    truth_forcing.validate();
    test_forcing.validate();
    strategy_name(strategy);
}

// ---------------------------------------------------------------------------
// JSON round trip
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
void get_to(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

inline void load_analytic(const nlohmann::json& j, AnalyticFieldSpec& s) {
    get_to(j, "uniform_u", s.uniform.u);
    get_to(j, "uniform_v", s.uniform.v);
    get_to(j, "rotation_period", s.rotation_period);
    get_to(j, "gyre_amplitude", s.gyre_amplitude);
    get_to(j, "gyre_kx", s.gyre_kx);
    get_to(j, "gyre_ky", s.gyre_ky);
}

inline nlohmann::json dump_analytic(const AnalyticFieldSpec& s) {
    return {{"uniform_u", s.uniform.u},
            {"uniform_v", s.uniform.v},
            {"rotation_period", s.rotation_period},
            {"gyre_amplitude", s.gyre_amplitude},
            {"gyre_kx", s.gyre_kx},
            {"gyre_ky", s.gyre_ky}};
}

inline void load_forcing(const nlohmann::json& j, SyntheticForcing& f) {
    if (j.contains("current")) load_analytic(j.at("current"), f.current);
    if (j.contains("wind")) load_analytic(j.at("wind"), f.wind);
    if (j.contains("tide")) {
        const auto& t = j.at("tide");
        get_to(t, "amplitude", f.tide.amplitude);
        get_to(t, "period", f.tide.period);
        get_to(t, "phase", f.tide.phase);
        get_to(t, "direction_u", f.tide.direction.u);
        get_to(t, "direction_v", f.tide.direction.v);
    }
    get_to(j, "include_tide", f.include_tide);
}

inline nlohmann::json dump_forcing(const SyntheticForcing& f) {
    return {{"current", dump_analytic(f.current)},
            {"wind", dump_analytic(f.wind)},
            {"tide",
             {{"amplitude", f.tide.amplitude},
              {"period", f.tide.period},
              {"phase", f.tide.phase},
              {"direction_u", f.tide.direction.u},
              {"direction_v", f.tide.direction.v}}},
            {"include_tide", f.include_tide}};
}

}  // namespace detail

/// Applies the key/value tree in `j` on top of `cfg`; unknown keys are
/// ignored, missing keys keep their current values.
inline void apply_json(const nlohmann::json& j, ScenarioConfig& cfg) {
    using detail::get_to;
    if (j.contains("grid")) {
        const auto& g = j.at("grid");
        get_to(g, "nx", cfg.grid.nx);
        get_to(g, "ny", cfg.grid.ny);
        get_to(g, "dx", cfg.grid.dx);
        get_to(g, "dy", cfg.grid.dy);
        get_to(g, "origin_x", cfg.grid.origin_x);
        get_to(g, "origin_y", cfg.grid.origin_y);
    }
    if (j.contains("time")) {
        const auto& t = j.at("time");
        get_to(t, "dt", cfg.time.dt);
        get_to(t, "duration", cfg.time.duration);
    }
    if (j.contains("spill")) {
        const auto& s = j.at("spill");
        get_to(s, "release_x", cfg.spill.release_x);
        get_to(s, "release_y", cfg.spill.release_y);
        get_to(s, "volume_m3", cfg.spill.volume_m3);
        get_to(s, "particles", cfg.spill.particles);
        get_to(s, "realizations", cfg.spill.realizations);
        get_to(s, "spread", cfg.spill.spread);
        get_to(s, "dh", cfg.spill.dh);
    }
    if (j.contains("fleet")) {
        const auto& f = j.at("fleet");
        get_to(f, "n_p", cfg.fleet.n_p);
        get_to(f, "v_sensor", cfg.fleet.v_sensor);
        get_to(f, "reading_interval", cfg.fleet.reading_interval);
        get_to(f, "active_start", cfg.fleet.active_start);
        get_to(f, "active_end", cfg.fleet.active_end);
        get_to(f, "sensor_radius", cfg.fleet.sensor_radius);
        get_to(f, "k_s", cfg.fleet.k_s);
        get_to(f, "base_x", cfg.fleet.base_x);
        get_to(f, "base_y", cfg.fleet.base_y);
        get_to(f, "noise_velocity", cfg.fleet.noise_velocity);
        get_to(f, "noise_oil", cfg.fleet.noise_oil);
        get_to(f, "replan_period", cfg.fleet.replan_period);
        get_to(f, "overlap", cfg.fleet.overlap);
        get_to(f, "presence_floor", cfg.fleet.presence_floor);
    }
    if (j.contains("truth_forcing"))
        detail::load_forcing(j.at("truth_forcing"), cfg.truth_forcing);
    if (j.contains("test_forcing"))
        detail::load_forcing(j.at("test_forcing"), cfg.test_forcing);
    if (j.contains("flow")) {
        const auto& f = j.at("flow");
        get_to(f, "viscosity", cfg.flow.viscosity);
        get_to(f, "relax_tau", cfg.flow.relax_tau);
        get_to(f, "wind_factor", cfg.flow.wind_factor);
        get_to(f, "current_factor", cfg.flow.current_factor);
    }
    if (j.contains("uncertainty")) {
        const auto& u = j.at("uncertainty");
        get_to(u, "zeta", cfg.uncertainty.zeta);
        get_to(u, "nu", cfg.uncertainty.nu);
        get_to(u, "eps_x", cfg.uncertainty.eps_x);
        get_to(u, "eps_y", cfg.uncertainty.eps_y);
    }
    if (j.contains("rom")) {
        const auto& r = j.at("rom");
        get_to(r, "n_z", cfg.rom.n_z);
        get_to(r, "n_kf", cfg.rom.n_kf);
        get_to(r, "k_id", cfg.rom.k_id);
        get_to(r, "f_rrqr", cfg.rom.f_rrqr);
        get_to(r, "window", cfg.rom.window);
        get_to(r, "p0", cfg.rom.p0);
        get_to(r, "r_meas", cfg.rom.r_meas);
        get_to(r, "q_scale", cfg.rom.q_scale);
        get_to(r, "rank_tol", cfg.rom.rank_tol);
        get_to(r, "cov_cap", cfg.rom.cov_cap);
        get_to(r, "refit_interval", cfg.rom.refit_interval);
        get_to(r, "correction_limit", cfg.rom.correction_limit);
        get_to(r, "correction_radius", cfg.rom.correction_radius);
        get_to(r, "injection_gain", cfg.rom.injection_gain);
    }
    if (j.contains("planning")) {
        const auto& p = j.at("planning");
        get_to(p, "horizons", cfg.planning.horizons);
        get_to(p, "dt_plan", cfg.planning.dt_plan);
        get_to(p, "window_dt", cfg.planning.window_dt);
        get_to(p, "window_steps", cfg.planning.window_steps);
        get_to(p, "k_pen", cfg.planning.k_pen);
        get_to(p, "zeta_g", cfg.planning.zeta_g);
        get_to(p, "max_iters", cfg.planning.max_iters);
        get_to(p, "k_pov", cfg.planning.k_pov);
        get_to(p, "k_se", cfg.planning.k_se);
        get_to(p, "k_pdmd", cfg.planning.k_pdmd);
        get_to(p, "k_domain", cfg.planning.k_domain);
    }
    if (j.contains("output")) {
        const auto& o = j.at("output");
        get_to(o, "snapshot_interval", cfg.output.snapshot_interval);
        get_to(o, "presence_threshold", cfg.output.presence_threshold);
    }
    if (j.contains("strategy"))
        cfg.strategy = parse_strategy(j.at("strategy").get<std::string>());
    detail::get_to(j, "seed", cfg.seed);
}

inline nlohmann::json to_json(const ScenarioConfig& cfg) {
    nlohmann::json j;
    j["grid"] = {{"nx", cfg.grid.nx},       {"ny", cfg.grid.ny},
                 {"dx", cfg.grid.dx},       {"dy", cfg.grid.dy},
                 {"origin_x", cfg.grid.origin_x},
                 {"origin_y", cfg.grid.origin_y}};
    j["time"] = {{"dt", cfg.time.dt}, {"duration", cfg.time.duration}};
    j["spill"] = {{"release_x", cfg.spill.release_x},
                  {"release_y", cfg.spill.release_y},
                  {"volume_m3", cfg.spill.volume_m3},
                  {"particles", cfg.spill.particles},
                  {"realizations", cfg.spill.realizations},
                  {"spread", cfg.spill.spread},
                  {"dh", cfg.spill.dh}};
    j["fleet"] = {{"n_p", cfg.fleet.n_p},
                  {"v_sensor", cfg.fleet.v_sensor},
                  {"reading_interval", cfg.fleet.reading_interval},
                  {"active_start", cfg.fleet.active_start},
                  {"active_end", cfg.fleet.active_end},
                  {"sensor_radius", cfg.fleet.sensor_radius},
                  {"k_s", cfg.fleet.k_s},
                  {"base_x", cfg.fleet.base_x},
                  {"base_y", cfg.fleet.base_y},
                  {"noise_velocity", cfg.fleet.noise_velocity},
                  {"noise_oil", cfg.fleet.noise_oil},
                  {"replan_period", cfg.fleet.replan_period},
                  {"overlap", cfg.fleet.overlap},
                  {"presence_floor", cfg.fleet.presence_floor}};
    j["truth_forcing"] = detail::dump_forcing(cfg.truth_forcing);
    j["test_forcing"] = detail::dump_forcing(cfg.test_forcing);
    j["flow"] = {{"viscosity", cfg.flow.viscosity},
                 {"relax_tau", cfg.flow.relax_tau},
                 {"wind_factor", cfg.flow.wind_factor},
                 {"current_factor", cfg.flow.current_factor}};
    j["uncertainty"] = {{"zeta", cfg.uncertainty.zeta},
                        {"nu", cfg.uncertainty.nu},
                        {"eps_x", cfg.uncertainty.eps_x},
                        {"eps_y", cfg.uncertainty.eps_y}};
    j["rom"] = {{"n_z", cfg.rom.n_z},       {"n_kf", cfg.rom.n_kf},
                {"k_id", cfg.rom.k_id},
                {"f_rrqr", cfg.rom.f_rrqr}, {"window", cfg.rom.window},
                {"p0", cfg.rom.p0},         {"r_meas", cfg.rom.r_meas},
                {"q_scale", cfg.rom.q_scale},
                {"rank_tol", cfg.rom.rank_tol},
                {"cov_cap", cfg.rom.cov_cap},
                {"refit_interval", cfg.rom.refit_interval},
                {"correction_limit", cfg.rom.correction_limit},
                {"correction_radius", cfg.rom.correction_radius},
                {"injection_gain", cfg.rom.injection_gain}};
    j["planning"] = {{"horizons", cfg.planning.horizons},
                     {"dt_plan", cfg.planning.dt_plan},
                     {"window_dt", cfg.planning.window_dt},
                     {"window_steps", cfg.planning.window_steps},
                     {"k_pen", cfg.planning.k_pen},
                     {"zeta_g", cfg.planning.zeta_g},
                     {"max_iters", cfg.planning.max_iters},
                     {"k_pov", cfg.planning.k_pov},
                     {"k_se", cfg.planning.k_se},
                     {"k_pdmd", cfg.planning.k_pdmd},
                     {"k_domain", cfg.planning.k_domain}};
    j["output"] = {{"snapshot_interval", cfg.output.snapshot_interval},
                   {"presence_threshold", cfg.output.presence_threshold}};
    j["strategy"] = strategy_name(cfg.strategy);
    j["seed"] = cfg.seed;
    return j;
}

/// Loads a configuration file on top of the desk defaults and validates it.
inline ScenarioConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_config: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("load_config: " + path + ": " + e.what());
    }
    ScenarioConfig cfg = default_config();
    apply_json(j, cfg);
    cfg.validate();
    return cfg;
}

inline void save_config(const std::string& path, const ScenarioConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw IoError("save_config: cannot open " + path);
    out << to_json(cfg).dump(2) << "\n";
    if (!out) throw IoError("save_config: write failed for " + path);
}

}  // namespace spillsense
