#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "spillsense/field.hpp"
#include "spillsense/grid.hpp"

namespace spillsense {

struct OilParticle {
    Point position{};
    double volume = 0.0;  // m^3
    bool active = true;
};

/// One stochastic realization of the spill. The engine state travels with
/// the ensemble, so a fixed seed reproduces a trajectory bit for bit.
struct ParticleEnsemble {
    std::vector<OilParticle> particles;
    int realization = 0;
    std::mt19937_64 rng;

    double total_volume() const {
        double s = 0.0;
        for (const auto& p : particles) s += p.volume;
        return s;
    }
    double active_volume() const {
        double s = 0.0;
        for (const auto& p : particles)
            if (p.active) s += p.volume;
        return s;
    }
    std::size_t active_count() const {
        std::size_t n = 0;
        for (const auto& p : particles)
            if (p.active) ++n;
        return n;
    }
};

/// Seeds `count` equal-volume particles at `origin` with a Gaussian spatial
/// scatter of standard deviation `spread` per axis.
inline ParticleEnsemble seed_ensemble(const GridPtr& grid, Point origin,
                                      double total_volume, int count,
                                      double spread, uint64_t seed,
                                      int realization = 0) {
    if (count < 1) throw ConfigError("seed_ensemble: need at least one particle");
    if (total_volume <= 0.0)
        throw ConfigError("seed_ensemble: total volume must be positive");
    ParticleEnsemble ens;
    ens.realization = realization;
    ens.rng.seed(seed);
    ens.particles.reserve(count);
    std::normal_distribution<double> nd(0.0, spread);
    const double vol = total_volume / count;
    for (int k = 0; k < count; ++k) {
        Point p = origin;
        if (spread > 0.0) {
            p.x += nd(ens.rng);
            p.y += nd(ens.rng);
        }
        OilParticle part{p, vol, true};
        if (!grid->in_bounding_box(p)) {
            part.active = false;
        } else {
            CellIndex c = grid->locate(p);
            if (grid->is_land(c.i, c.j)) part.active = false;
        }
        ens.particles.push_back(part);
    }
    return ens;
}

/// One transport step: deterministic drift by the interpolated velocity plus
/// a Gaussian random walk with per-axis variance 2*D_h*dt. Particles leaving
/// the bounding box or landing on a land cell deactivate.
inline ParticleEnsemble advect_particles(const ParticleEnsemble& ens,
                                         const VectorField& vel,
                                         const ScalarField& dh, double dt) {
    if (dt < 0.0) throw ConfigError("advect_particles: negative dt");
    if (vel.grid() != dh.grid())
        throw GridMismatchError("advect_particles: velocity/diffusion grids differ");
    if (dt == 0.0) return ens;

    const GridSpec& g = *vel.grid();
    ParticleEnsemble out = ens;
    std::normal_distribution<double> nd;
    for (auto& p : out.particles) {
        if (!p.active) continue;
        Vec2 u = interpolate(vel, p.position);
        double d = std::max(interpolate(dh, p.position), 0.0);
        double sigma = std::sqrt(2.0 * d * dt);
        Point np = p.position + dt * u;
        if (sigma > 0.0) {
            np.x += sigma * nd(out.rng);
            np.y += sigma * nd(out.rng);
        }
        p.position = np;
        if (!g.in_bounding_box(np)) {
            p.active = false;
            continue;
        }
        CellIndex c = g.locate(np);
        if (g.is_land(c.i, c.j)) p.active = false;
    }
    return out;
}

struct OilProbabilityMap {
    ScalarField prob;      // Eq-style cell probabilities, sums to 1
    int realizations = 1;  // S_T behind this map
};

/// Cell probability of one realization: active volume per cell over total
/// active volume.
inline OilProbabilityMap probability_single(const ParticleEnsemble& ens,
                                            const GridPtr& grid) {
    const double denom = ens.active_volume();
    if (denom <= 0.0)
        throw EmptySpillError("probability_single: no active oil volume");
    OilProbabilityMap map;
    map.prob = ScalarField(grid);
    map.realizations = 1;
    const GridSpec& g = *grid;
    for (const auto& p : ens.particles) {
        if (!p.active) continue;
        CellIndex c = g.locate(p.position);
        map.prob.at(c.i, c.j) += p.volume / denom;
    }
    return map;
}

/// Ensemble mean over realizations; preserves the unit sum.
inline OilProbabilityMap probability_mean(
    const std::vector<OilProbabilityMap>& maps) {
    if (maps.empty())
        throw ConfigError("probability_mean: no realizations supplied");
    OilProbabilityMap out;
    out.prob = ScalarField(maps.front().prob.grid());
    out.realizations = static_cast<int>(maps.size());
    for (const auto& m : maps) {
        require_same_grid(out.prob, m.prob);
        for (std::size_t k = 0; k < out.prob.size(); ++k) out.prob[k] += m.prob[k];
    }
    const double inv = 1.0 / static_cast<double>(maps.size());
    for (auto& x : out.prob.data()) x *= inv;
    return out;
}

/// Presence field P over the map maximum; range [0,1] with the max attained.
inline ScalarField rescale_presence(const OilProbabilityMap& map) {
    const double m = map.prob.max_value();
    if (m <= 0.0) throw EmptySpillError("rescale_presence: all-zero map");
    ScalarField out = map.prob;
    for (auto& x : out.data()) x /= m;
    return out;
}

/// Per-cell Shannon entropy (natural log) of the 3x3 neighborhood after
/// normalizing the nine values to sum 1; zero-sum neighborhoods score 0.
/// The entropy field is min-max normalized to [0,1]; a constant field maps
/// to all zeros. Edge cells use the clipped neighborhood.
inline ScalarField entropy_neighborhood(const ScalarField& presence) {
    const GridSpec& g = *presence.grid();
    ScalarField ent(presence.grid());
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            double sum = 0.0;
            for (int dj = -1; dj <= 1; ++dj)
                for (int di = -1; di <= 1; ++di) {
                    int ii = i + di, jj = j + dj;
                    if (g.in_range(ii, jj)) sum += presence.at(ii, jj);
                }
            if (sum <= 0.0) continue;
            double h = 0.0;
            for (int dj = -1; dj <= 1; ++dj)
                for (int di = -1; di <= 1; ++di) {
                    int ii = i + di, jj = j + dj;
                    if (!g.in_range(ii, jj)) continue;
                    double p = presence.at(ii, jj) / sum;
                    if (p > 0.0) h -= p * std::log(p);
                }
            ent.at(i, j) = h;
        }
    const double lo = ent.min_value();
    const double hi = ent.max_value();
    if (hi - lo <= 0.0) {
        ent.fill(0.0);
        return ent;
    }
    for (auto& x : ent.data()) x = (x - lo) / (hi - lo);
    return ent;
}

}  // namespace spillsense
