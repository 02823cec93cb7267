#pragma once

#include <cmath>
#include <memory>
#include <numbers>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "spillsense/field.hpp"
#include "spillsense/grid.hpp"

namespace spillsense {

enum class EdgeType { periodic, inflow, outflow, noslip };

struct EdgeSpec {
    EdgeType type = EdgeType::periodic;
    Vec2 inflow{};  // prescribed velocity, inflow edges only
};

struct BoundarySpec {
    EdgeSpec west, east, south, north;

    static BoundarySpec all_periodic() { return {}; }

    void validate() const {
        auto paired = [](const EdgeSpec& a, const EdgeSpec& b) {
            return (a.type == EdgeType::periodic) == (b.type == EdgeType::periodic);
        };
        if (!paired(west, east) || !paired(south, north))
            throw ConfigError("BoundarySpec: periodic edges must come in opposite pairs");
    }
    bool periodic_x() const { return west.type == EdgeType::periodic; }
    bool periodic_y() const { return south.type == EdgeType::periodic; }
};

namespace detail {

// Velocity value at (i,j) including ghost cells implied by the boundary
// spec. `comp` selects the u (0) or v (1) component for inflow values.
inline double vel_ghost(const ScalarField& f, const GridSpec& g,
                        const BoundarySpec& bc, int comp, int i, int j) {
    const EdgeSpec* edge = nullptr;
    if (i < 0) edge = &bc.west;
    else if (i >= g.nx()) edge = &bc.east;
    else if (j < 0) edge = &bc.south;
    else if (j >= g.ny()) edge = &bc.north;

    if (edge) {
        switch (edge->type) {
            case EdgeType::periodic: {
                int ii = (i + g.nx()) % g.nx();
                int jj = (j + g.ny()) % g.ny();
                return g.is_land(ii, jj) ? 0.0 : f.at(ii, jj);
            }
            case EdgeType::inflow:
                return comp == 0 ? edge->inflow.u : edge->inflow.v;
            case EdgeType::outflow: {
                int ii = std::clamp(i, 0, g.nx() - 1);
                int jj = std::clamp(j, 0, g.ny() - 1);
                return g.is_land(ii, jj) ? 0.0 : f.at(ii, jj);
            }
            case EdgeType::noslip: {
                int ii = std::clamp(i, 0, g.nx() - 1);
                int jj = std::clamp(j, 0, g.ny() - 1);
                return g.is_land(ii, jj) ? 0.0 : -f.at(ii, jj);
            }
        }
    }
    return g.is_land(i, j) ? 0.0 : f.at(i, j);
}

// Pressure-space operators for the projection. The gradient G uses the
// periodic wrap structure on every edge; corrections are zeroed on land by
// the mask M. K = G^T M G is symmetric positive semidefinite and the
// right-hand side G^T M U lies in its range by construction, so a plain
// conjugate-gradient solve converges. Physical edge conditions enter the
// step through the advection/diffusion ghosts, not through the projection.
struct ProjectionOps {
    Eigen::SparseMatrix<double> G;   // (2N) x N gradient
    Eigen::SparseMatrix<double> GT;  // N x (2N)
    Eigen::SparseMatrix<double> K;   // N x N
    Eigen::VectorXd mask;            // 2N, zero on land rows
    int nx = 0, ny = 0;

    static std::shared_ptr<const ProjectionOps> build(const GridSpec& g) {
        auto ops = std::make_shared<ProjectionOps>();
        const int nx = g.nx(), ny = g.ny();
        const auto n = static_cast<Eigen::Index>(g.cell_count());
        ops->nx = nx;
        ops->ny = ny;

        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(4 * g.cell_count());
        for (int j = 0; j < ny; ++j) {
            for (int i = 0; i < nx; ++i) {
                const auto row_x = static_cast<long>(g.idx(i, j));
                const auto row_y = row_x + n;
                const double cx = 1.0 / (2.0 * g.dx());
                const double cy = 1.0 / (2.0 * g.dy());
                trip.emplace_back(row_x, static_cast<long>(g.idx((i + 1) % nx, j)), cx);
                trip.emplace_back(row_x, static_cast<long>(g.idx((i + nx - 1) % nx, j)), -cx);
                trip.emplace_back(row_y, static_cast<long>(g.idx(i, (j + 1) % ny)), cy);
                trip.emplace_back(row_y, static_cast<long>(g.idx(i, (j + ny - 1) % ny)), -cy);
            }
        }
        ops->G.resize(2 * n, n);
        ops->G.setFromTriplets(trip.begin(), trip.end());

        ops->mask = Eigen::VectorXd::Ones(2 * n);
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i)
                if (g.is_land(i, j)) {
                    ops->mask[static_cast<long>(g.idx(i, j))] = 0.0;
                    ops->mask[static_cast<long>(g.idx(i, j)) + n] = 0.0;
                }

        ops->GT = ops->G.transpose();
        Eigen::SparseMatrix<double> MG = ops->mask.asDiagonal() * ops->G;
        ops->K = ops->GT * MG;
        ops->K.makeCompressed();
        return ops;
    }

    // Plain CG on the SPSD system K x = b; b is in range(K) by construction.
    Eigen::VectorXd solve(const Eigen::VectorXd& b, double rel_tol, int max_iters,
                          double* out_rel_res = nullptr) const {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(b.size());
        Eigen::VectorXd r = b;
        Eigen::VectorXd p = r;
        double rr = r.squaredNorm();
        const double b_norm = std::sqrt(rr);
        if (b_norm == 0.0) {
            if (out_rel_res) *out_rel_res = 0.0;
            return x;
        }
        const double stop = rel_tol * b_norm;
        for (int it = 0; it < max_iters; ++it) {
            Eigen::VectorXd Kp = K * p;
            double pKp = p.dot(Kp);
            if (pKp <= 0.0) break;  // numerically exhausted
            double alpha = rr / pKp;
            x += alpha * p;
            r -= alpha * Kp;
            double rr_new = r.squaredNorm();
            if (std::sqrt(rr_new) <= stop) {
                rr = rr_new;
                break;
            }
            p = r + (rr_new / rr) * p;
            rr = rr_new;
        }
        if (out_rel_res) *out_rel_res = std::sqrt(rr) / b_norm;
        return x;
    }
};

}  // namespace detail

/// One stacked fluid layer (current or wind): velocity, pressure, viscosity,
/// forcing and boundary conditions.
struct FluidLayer {
    VectorField velocity;
    ScalarField pressure;
    double viscosity = 1.0;  // m^2/s
    VectorField source;
    BoundarySpec bc;
    double div_tol_rel = 1e-8;  // of the velocity scale

    // Shared across copies; rebuilt lazily when absent.
    std::shared_ptr<const detail::ProjectionOps> projection;

    const GridPtr& grid() const { return velocity.grid(); }
};

inline FluidLayer make_layer(GridPtr grid, double viscosity,
                             BoundarySpec bc = BoundarySpec::all_periodic()) {
    bc.validate();
    if (viscosity <= 0.0) throw ConfigError("FluidLayer: viscosity must be positive");
    FluidLayer layer;
    layer.velocity = VectorField(grid);
    layer.pressure = ScalarField(grid);
    layer.source = VectorField(std::move(grid));
    layer.viscosity = viscosity;
    layer.bc = bc;
    return layer;
}

/// Central-difference divergence with boundary ghosts matching the layer's
/// velocity boundary conditions. This is the operator the projection drives
/// to zero and the one reported by diagnostics.
inline ScalarField divergence(const VectorField& vel, const BoundarySpec& bc) {
    const GridSpec& g = *vel.grid();
    ScalarField d(vel.grid());
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            if (g.is_land(i, j)) continue;
            double due = detail::vel_ghost(vel.u, g, bc, 0, i + 1, j) -
                         detail::vel_ghost(vel.u, g, bc, 0, i - 1, j);
            double dvn = detail::vel_ghost(vel.v, g, bc, 1, i, j + 1) -
                         detail::vel_ghost(vel.v, g, bc, 1, i, j - 1);
            d.at(i, j) = due / (2.0 * g.dx()) + dvn / (2.0 * g.dy());
        }
    return d;
}

/// Projects the velocity field toward the divergence-free space of the
/// wrapped central-difference operator. Returns the max-norm of the
/// remaining divergence under that operator.
inline double project_incompressible(VectorField& vel,
                                     std::shared_ptr<const detail::ProjectionOps>& ops,
                                     ScalarField* pressure_out, double abs_tol,
                                     int max_rounds = 3) {
    const GridSpec& g = *vel.grid();
    if (!ops) ops = detail::ProjectionOps::build(g);
    const auto n = static_cast<Eigen::Index>(g.cell_count());

    if (pressure_out) pressure_out->fill(0.0);
    Eigen::VectorXd uvec(2 * n);
    double max_div = 0.0;
    for (int round = 0; round <= max_rounds; ++round) {
        for (Eigen::Index k = 0; k < n; ++k) {
            uvec[k] = vel.u[static_cast<std::size_t>(k)];
            uvec[k + n] = vel.v[static_cast<std::size_t>(k)];
        }
        // rhs = G^T M U = -div(U); solving K phi = rhs makes the corrected
        // divergence equal the solver residual: div(U - M G phi) = K phi - rhs.
        Eigen::VectorXd rhs = ops->GT * ops->mask.cwiseProduct(uvec);
        max_div = rhs.lpNorm<Eigen::Infinity>();
        if (max_div <= abs_tol || round == max_rounds) return max_div;

        double rel = std::clamp(0.1 * abs_tol / std::max(rhs.norm(), 1e-300), 1e-13, 1e-4);
        Eigen::VectorXd phi = ops->solve(rhs, rel, 4000);
        Eigen::VectorXd corr = ops->mask.cwiseProduct(ops->G * phi);
        for (Eigen::Index k = 0; k < n; ++k) {
            vel.u[static_cast<std::size_t>(k)] -= corr[k];
            vel.v[static_cast<std::size_t>(k)] -= corr[k + n];
        }
        if (pressure_out)
            for (Eigen::Index k = 0; k < n; ++k)
                (*pressure_out)[static_cast<std::size_t>(k)] += phi[k];
    }
    return max_div;
}

/// Advances one layer by a forward-Euler advection-diffusion-source step
/// followed by a pressure projection. Advection uses the conservative
/// (flux) form, which conserves momentum exactly on periodic grids.
inline FluidLayer step_layer(const FluidLayer& layer, double dt) {
    const GridSpec& g = *layer.grid();
    const double h = std::min(g.dx(), g.dy());
    const double speed = layer.velocity.max_speed();
    const double cfl = speed * dt / h;
    if (cfl > 0.9)
        throw CflViolation("step_layer: advective CFL " + std::to_string(cfl),
                           static_cast<int>(std::ceil(cfl / 0.9)));

    FluidLayer next = layer;
    const ScalarField& u = layer.velocity.u;
    const ScalarField& v = layer.velocity.v;
    const BoundarySpec& bc = layer.bc;
    const double nu = layer.viscosity;

    auto uu = [&](int i, int j) { return detail::vel_ghost(u, g, bc, 0, i, j); };
    auto vv = [&](int i, int j) { return detail::vel_ghost(v, g, bc, 1, i, j); };

    for (int j = 0; j < g.ny(); ++j) {
        for (int i = 0; i < g.nx(); ++i) {
            if (g.is_land(i, j)) {
                next.velocity.u.at(i, j) = 0.0;
                next.velocity.v.at(i, j) = 0.0;
                continue;
            }
            double ue = uu(i + 1, j), uw = uu(i - 1, j);
            double un = uu(i, j + 1), us = uu(i, j - 1);
            double ve = vv(i + 1, j), vw = vv(i - 1, j);
            double vn = vv(i, j + 1), vs = vv(i, j - 1);
            double uc = u.at(i, j), vc = v.at(i, j);

            double adv_u = (ue * ue - uw * uw) / (2.0 * g.dx()) +
                           (vn * un - vs * us) / (2.0 * g.dy());
            double adv_v = (ue * ve - uw * vw) / (2.0 * g.dx()) +
                           (vn * vn - vs * vs) / (2.0 * g.dy());
            double lap_u = (ue - 2.0 * uc + uw) / (g.dx() * g.dx()) +
                           (un - 2.0 * uc + us) / (g.dy() * g.dy());
            double lap_v = (ve - 2.0 * vc + vw) / (g.dx() * g.dx()) +
                           (vn - 2.0 * vc + vs) / (g.dy() * g.dy());

            next.velocity.u.at(i, j) =
                uc + dt * (-adv_u + nu * lap_u + layer.source.u.at(i, j));
            next.velocity.v.at(i, j) =
                vc + dt * (-adv_v + nu * lap_v + layer.source.v.at(i, j));
        }
    }

    const double scale = std::max(next.velocity.max_speed(), 1e-12);
    const double abs_tol = layer.div_tol_rel * scale;
    double residual = project_incompressible(next.velocity, next.projection,
                                             &next.pressure, abs_tol);
    if (residual > abs_tol)
        throw SolverError("step_layer: pressure solve stalled at divergence " +
                              std::to_string(residual),
                          residual);
    for (auto& p : next.pressure.data()) p /= dt;  // store as pressure, not dt-scaled potential
    next.velocity.zero_on_land();
    return next;
}

// ---------------------------------------------------------------------------
// Combined drift velocity and turbulent-diffusion correction.
// ---------------------------------------------------------------------------

struct DriftModel {
    double current_factor = 1.0;
    double wind_factor = 0.03;
    double wave_factor = 1.0;
    ScalarField diffusion;     // D_h, m^2/s
    VectorField correction;    // U_d

    static DriftModel constant_diffusion(GridPtr grid, double dh) {
        DriftModel m;
        m.diffusion = ScalarField(grid, dh);
        m.diffusion.zero_on_land();
        m.correction = VectorField(std::move(grid));
        return m;
    }
};

/// U = current_factor*U_c + wind_factor*U_w + wave_factor*U_wave + U_d.
inline VectorField combined_drift(const VectorField& current,
                                  const VectorField& wind,
                                  const VectorField& wave,
                                  const VectorField& correction,
                                  const DriftModel& model) {
    if (current.grid() != wind.grid() || current.grid() != wave.grid() ||
        current.grid() != correction.grid())
        throw GridMismatchError("combined_drift: grids differ");
    VectorField out(current.grid());
    for (std::size_t k = 0; k < out.u.size(); ++k) {
        out.u[k] = model.current_factor * current.u[k] + model.wind_factor * wind.u[k] +
                   model.wave_factor * wave.u[k] + correction.u[k];
        out.v[k] = model.current_factor * current.v[k] + model.wind_factor * wind.v[k] +
                   model.wave_factor * wave.v[k] + correction.v[k];
    }
    return out;
}

/// Random-walk drift correction U_d = grad(D_h); central differences inside,
/// one-sided at the domain edges, zero on land.
inline VectorField diffusion_correction(const ScalarField& dh) {
    const GridSpec& g = *dh.grid();
    VectorField out(dh.grid());
    auto dval = [&](int i, int j) {
        i = std::clamp(i, 0, g.nx() - 1);
        j = std::clamp(j, 0, g.ny() - 1);
        return dh.at(i, j);
    };
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            if (g.is_land(i, j)) continue;
            double span_x = (i == 0 || i == g.nx() - 1) ? g.dx() : 2.0 * g.dx();
            double span_y = (j == 0 || j == g.ny() - 1) ? g.dy() : 2.0 * g.dy();
            out.u.at(i, j) = (dval(i + 1, j) - dval(i - 1, j)) / span_x;
            out.v.at(i, j) = (dval(i, j + 1) - dval(i, j - 1)) / span_y;
        }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic analytic forcing standing in for external current/wind data.
// ---------------------------------------------------------------------------

struct AnalyticFieldSpec {
    Vec2 uniform{};              // m/s
    double rotation_period = 0;  // s; > 0 rotates the uniform vector
    double gyre_amplitude = 0;   // m/s
    int gyre_kx = 1;
    int gyre_ky = 1;
};

struct TidalSpec {
    double amplitude = 0;  // m/s
    double period = 0;     // s
    double phase = 0;      // rad
    Vec2 direction{0, 1};  // unit vector
};

struct SyntheticForcing {
    AnalyticFieldSpec current;
    AnalyticFieldSpec wind;
    TidalSpec tide;
    bool include_tide = false;

    void validate() const {
        if (include_tide && tide.period <= 0)
            throw ConfigError("SyntheticForcing: tidal period must be positive");
    }
};

inline VectorField evaluate_analytic(const AnalyticFieldSpec& spec,
                                     const GridPtr& grid, double t) {
    const GridSpec& g = *grid;
    VectorField out(grid);
    Vec2 uni = spec.uniform;
    if (spec.rotation_period > 0) {
        double th = 2.0 * std::numbers::pi * t / spec.rotation_period;
        uni = {spec.uniform.u * std::cos(th) - spec.uniform.v * std::sin(th),
               spec.uniform.u * std::sin(th) + spec.uniform.v * std::cos(th)};
    }
    const double lx = g.nx() * g.dx();
    const double ly = g.ny() * g.dy();
    const double ax = 2.0 * std::numbers::pi * spec.gyre_kx / lx;
    const double ay = 2.0 * std::numbers::pi * spec.gyre_ky / ly;
    const double x0 = g.origin().x - 0.5 * g.dx();
    const double y0 = g.origin().y - 0.5 * g.dy();
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            if (g.is_land(i, j)) continue;
            Point p = g.cell_center(i, j);
            double su = uni.u, sv = uni.v;
            if (spec.gyre_amplitude != 0) {
                // stream function psi = A/k * sin(ax x) sin(ay y)
                su += spec.gyre_amplitude * std::sin(ax * (p.x - x0)) *
                      std::cos(ay * (p.y - y0));
                sv += -spec.gyre_amplitude * (ax / ay) * std::cos(ax * (p.x - x0)) *
                      std::sin(ay * (p.y - y0));
            }
            out.u.at(i, j) = su;
            out.v.at(i, j) = sv;
        }
    return out;
}

/// Deterministic analytic evaluation of the external current and wind fields
/// at time t. The tidal component exists only when enabled, which is the
/// truth/test asymmetry of the twin experiment.
inline std::pair<VectorField, VectorField> synthesize_forcing(
    const SyntheticForcing& spec, const GridPtr& grid, double t) {
    spec.validate();
    VectorField current = evaluate_analytic(spec.current, grid, t);
    VectorField wind = evaluate_analytic(spec.wind, grid, t);
    if (spec.include_tide && spec.tide.amplitude != 0) {
        double s = spec.tide.amplitude *
                   std::sin(2.0 * std::numbers::pi * t / spec.tide.period +
                            spec.tide.phase);
        const GridSpec& g = *grid;
        for (int j = 0; j < g.ny(); ++j)
            for (int i = 0; i < g.nx(); ++i) {
                if (g.is_land(i, j)) continue;
                current.u.at(i, j) += s * spec.tide.direction.u;
                current.v.at(i, j) += s * spec.tide.direction.v;
            }
    }
    return {std::move(current), std::move(wind)};
}

}  // namespace spillsense
