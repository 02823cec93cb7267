#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Core>

#include "spillsense/field.hpp"
#include "spillsense/grid.hpp"

namespace spillsense {

/// Tracer and directional variance fields advanced together each tick.
struct UncertaintyState {
    ScalarField q;      // in [0,1]
    ScalarField var_x;  // m^2/s^2
    ScalarField var_y;  // m^2/s^2

    explicit UncertaintyState(const GridPtr& grid)
        : q(grid), var_x(grid), var_y(grid) {}
    UncertaintyState() = default;
};

struct UncertaintyParams {
    double nu = 1.0;        // tracer diffusion, m^2/s
    double zeta = 0.95;     // containment probability
    double chi = 0.0;       // chi-squared quantile of zeta, 2 dof
    double k_chi = 0.0;     // pi*dt^2*chi / domain area
    double k_s = 1.0;       // sensor effectiveness
    double r = 1000.0;      // sensor footprint radius, m
    double v_sensor = 26.8; // max sensor speed, m/s
    double eps_x = 0.0;     // external variance floor
    double eps_y = 0.0;
    std::vector<Point> p0;  // sensor start positions
};

/// Quantile of the chi-squared distribution with 2 degrees of freedom; the
/// 2-dof CDF is 1 - exp(-x/2), so the inverse is closed form.
inline double chi_squared_quantile_2dof(double zeta) {
    if (zeta <= 0.0 || zeta >= 1.0)
        throw ConfigError("chi quantile: containment probability must be in (0,1)");
    return -2.0 * std::log(1.0 - zeta);
}

inline UncertaintyParams make_uncertainty_params(double zeta, double dt,
                                                 double domain_area,
                                                 double nu, double k_s,
                                                 double r, double v_sensor) {
    if (dt <= 0.0) throw ConfigError("uncertainty params: dt must be positive");
    if (domain_area <= 0.0)
        throw ConfigError("uncertainty params: empty domain");
    if (k_s < 0.0 || k_s > 1.0)
        throw ConfigError("uncertainty params: k_s must lie in [0,1]");
    if (r <= 0.0) throw ConfigError("uncertainty params: radius must be positive");
    if (v_sensor <= 0.0)
        throw ConfigError("uncertainty params: sensor speed must be positive");
    UncertaintyParams p;
    p.zeta = zeta;
    p.chi = chi_squared_quantile_2dof(zeta);
    p.k_chi = std::numbers::pi * dt * dt * p.chi / domain_area;
    p.nu = nu;
    p.k_s = k_s;
    p.r = r;
    p.v_sensor = v_sensor;
    return p;
}

/// Hard sensing footprint: 1 where a sensor whose travel time has elapsed
/// covers the cell center within radius r, 0 elsewhere.
inline ScalarField sensor_mask(const std::vector<Point>& positions,
                               const std::vector<Point>& start_positions,
                               double t, double t0,
                               const UncertaintyParams& params,
                               const GridPtr& grid) {
    if (positions.size() != start_positions.size())
        throw ConfigError("sensor_mask: position/start count mismatch");
    const GridSpec& g = *grid;
    ScalarField mask(grid);
    for (std::size_t s = 0; s < positions.size(); ++s) {
        if (!g.in_bounding_box(positions[s]))
            throw OutOfDomainError("sensor_mask: sensor outside bounding box");
        double travel = distance(positions[s], start_positions[s]) / params.v_sensor;
        if (t - t0 < travel) continue;
        // Scan only the cells the disk can touch.
        CellIndex c = g.locate(positions[s]);
        int ri = static_cast<int>(std::ceil(params.r / g.dx())) + 1;
        int rj = static_cast<int>(std::ceil(params.r / g.dy())) + 1;
        for (int j = std::max(0, c.j - rj); j <= std::min(g.ny() - 1, c.j + rj); ++j)
            for (int i = std::max(0, c.i - ri); i <= std::min(g.nx() - 1, c.i + ri); ++i) {
                if (g.is_land(i, j)) continue;
                if (distance(g.cell_center(i, j), positions[s]) <= params.r)
                    mask.at(i, j) = 1.0;
            }
    }
    return mask;
}

/// Extra source terms for the variance step. Empty fields contribute zero.
struct VarianceSources {
    ScalarField diffusion_rate;  // D_h/dt
    double eps = 0.0;            // external variance floor
    ScalarField injection;       // E_k from the Kalman covariance
};

/// One forward-Euler variance step: upwind advection, central diffusion and
/// sources, then the sensing removal (1 - k_s*mask) applied to the updated
/// value. A stationary k_s = 1 sensor therefore zeroes its footprint at the
/// end of every step. The mask may be fractional (smooth footprints).
inline ScalarField step_variance(const ScalarField& var, const VectorField& vel,
                                 const ScalarField& mask,
                                 const VarianceSources& src,
                                 const UncertaintyParams& params, double dt) {
    if (dt <= 0.0) throw ConfigError("step_variance: dt must be positive");
    require_same_grid(var, vel.u);
    require_same_grid(var, mask);
    const GridSpec& g = *var.grid();

    double worst = 0.0;
    for (std::size_t k = 0; k < var.size(); ++k)
        worst = std::max(worst, std::abs(vel.u[k]) / g.dx() +
                                    std::abs(vel.v[k]) / g.dy());
    if (worst * dt > 1.0)
        throw CflViolation("step_variance: upwind CFL " + std::to_string(worst * dt),
                           static_cast<int>(std::ceil(worst * dt)));

    auto value = [&](int i, int j) {
        // Copy ghosts at the domain edges; land carries zero.
        int ii = std::clamp(i, 0, g.nx() - 1);
        int jj = std::clamp(j, 0, g.ny() - 1);
        return g.is_land(ii, jj) ? 0.0 : var.at(ii, jj);
    };

    ScalarField out(var.grid());
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            if (g.is_land(i, j)) continue;
            double c = var.at(i, j);
            double u = vel.u.at(i, j), v = vel.v.at(i, j);
            double adv = (u > 0.0 ? u * (c - value(i - 1, j))
                                  : u * (value(i + 1, j) - c)) / g.dx() +
                         (v > 0.0 ? v * (c - value(i, j - 1))
                                  : v * (value(i, j + 1) - c)) / g.dy();
            double diff =
                params.nu * ((value(i + 1, j) - 2.0 * c + value(i - 1, j)) /
                                 (g.dx() * g.dx()) +
                             (value(i, j + 1) - 2.0 * c + value(i, j - 1)) /
                                 (g.dy() * g.dy()));
            double s = src.eps;
            if (!src.diffusion_rate.empty()) s += src.diffusion_rate.at(i, j);
            if (!src.injection.empty()) s += src.injection.at(i, j);

            double updated = c + dt * (-adv + diff + s);
            double keep = 1.0 - params.k_s * mask.at(i, j);
            out.at(i, j) = std::max(updated * std::max(keep, 0.0), 0.0);
        }
    return out;
}

/// Tracer accumulation from the variance rates of change:
/// q += dt * k_chi^2 * (var_x*dvar_y/dt + var_y*dvar_x/dt), clamped to [0,1].
/// var_x/var_y are the pre-step fields; the rates are post-removal
/// difference quotients, which makes the update the discrete product rule.
inline ScalarField step_tracer(const ScalarField& q, const ScalarField& var_x,
                               const ScalarField& var_y,
                               const ScalarField& dvar_x_dt,
                               const ScalarField& dvar_y_dt,
                               const UncertaintyParams& params, double dt) {
    require_same_grid(q, var_x);
    require_same_grid(q, var_y);
    require_same_grid(q, dvar_x_dt);
    require_same_grid(q, dvar_y_dt);
    const GridSpec& g = *q.grid();
    const double k2 = params.k_chi * params.k_chi;
    ScalarField out(q.grid());
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            if (g.is_land(i, j)) continue;
            double dq = dt * k2 *
                        (var_x.at(i, j) * dvar_y_dt.at(i, j) +
                         var_y.at(i, j) * dvar_x_dt.at(i, j));
            out.at(i, j) = std::clamp(q.at(i, j) + dq, 0.0, 1.0);
        }
    return out;
}

struct CovarianceInjection {
    ScalarField e_kx;
    ScalarField e_ky;
};

/// Per-cell quadratic forms of the Kalman covariance through the reduced
/// basis rows of the horizontal and vertical current components.
inline CovarianceInjection covariance_injection(const Eigen::MatrixXd& cov,
                                                const Eigen::MatrixXd& basis,
                                                const StateLayout& layout,
                                                double gain = 1.0,
                                                int u_field = 0, int v_field = 1) {
    if (cov.rows() != cov.cols() || cov.rows() != basis.cols())
        throw ConfigError("covariance_injection: dimension mismatch");
    if (static_cast<std::size_t>(basis.rows()) != layout.state_size())
        throw ConfigError("covariance_injection: basis does not match layout");
    const GridSpec& g = *layout.grid();
    CovarianceInjection out;
    out.e_kx = ScalarField(layout.grid());
    out.e_ky = ScalarField(layout.grid());
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            if (g.is_land(i, j)) continue;
            auto quad = [&](int field) {
                Eigen::RowVectorXd row =
                    basis.row(static_cast<Eigen::Index>(layout.entry(field, i, j)));
                double val = row * cov * row.transpose();
                if (val < -1e-10)
                    throw NumericalError(
                        "covariance_injection: covariance not positive semidefinite");
                return std::max(val, 0.0) * gain;
            };
            out.e_kx.at(i, j) = quad(u_field);
            out.e_ky.at(i, j) = quad(v_field);
        }
    return out;
}

}  // namespace spillsense
