/// @file test_oil.cpp
/// @brief Lagrangian oil transport and probability/presence/entropy maps.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "spillsense/oil.hpp"

using namespace spillsense;

namespace {

GridPtr centered_grid(int n, double h) {
    double half = 0.5 * (n - 1) * h;
    return make_grid(n, n, h, h, {-half, -half});
}

}  // namespace

// ============================================================================
// advect_particles
// ============================================================================

TEST_CASE("pure advection shifts particles by U*dt") {
    auto g = centered_grid(41, 1.0);
    VectorField vel(g, 1.0, 0.0);
    ScalarField dh(g, 0.0);
    ParticleEnsemble ens = seed_ensemble(g, {-15.0, 2.0}, 10.0, 50, 0.5, 7u);
    ParticleEnsemble out = advect_particles(ens, vel, dh, 10.0);
    for (std::size_t k = 0; k < ens.particles.size(); ++k) {
        CHECK(out.particles[k].position.x ==
              Catch::Approx(ens.particles[k].position.x + 10.0).margin(1e-12));
        CHECK(out.particles[k].position.y == ens.particles[k].position.y);
    }
}

TEST_CASE("random walk variance matches 2*Dh*dt") {
    auto g = centered_grid(41, 1.0);
    VectorField vel(g);
    ScalarField dh(g, 1.0);
    ParticleEnsemble ens = seed_ensemble(g, {0.0, 0.0}, 1.0, 100000, 0.0, 99u);
    ParticleEnsemble out = advect_particles(ens, vel, dh, 1.0);

    double mean = 0.0, m2 = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < out.particles.size(); ++k) {
        double d = out.particles[k].position.x - ens.particles[k].position.x;
        ++n;
        double delta = d - mean;
        mean += delta / static_cast<double>(n);
        m2 += delta * (d - mean);
    }
    double var = m2 / static_cast<double>(n - 1);
    CHECK(std::abs(var - 2.0) < 0.05);
}

TEST_CASE("zero dt leaves the ensemble untouched") {
    auto g = centered_grid(21, 1.0);
    VectorField vel(g, 3.0, -1.0);
    ScalarField dh(g, 2.0);
    ParticleEnsemble ens = seed_ensemble(g, {0.0, 0.0}, 5.0, 20, 1.0, 3u);
    ParticleEnsemble out = advect_particles(ens, vel, dh, 0.0);
    CHECK(out.rng == ens.rng);
    for (std::size_t k = 0; k < ens.particles.size(); ++k) {
        CHECK(out.particles[k].position.x == ens.particles[k].position.x);
        CHECK(out.particles[k].position.y == ens.particles[k].position.y);
    }
    CHECK_THROWS_AS(advect_particles(ens, vel, dh, -1.0), ConfigError);
}

TEST_CASE("advection is bit-reproducible for a fixed seed") {
    auto g = centered_grid(31, 2.0);
    VectorField vel(g, 0.2, 0.1);
    ScalarField dh(g, 0.5);
    auto run = [&] {
        ParticleEnsemble e = seed_ensemble(g, {1.0, -2.0}, 4.0, 300, 2.0, 2024u);
        for (int k = 0; k < 20; ++k) e = advect_particles(e, vel, dh, 1.0);
        return e;
    };
    ParticleEnsemble a = run(), b = run();
    for (std::size_t k = 0; k < a.particles.size(); ++k) {
        CHECK(a.particles[k].position.x == b.particles[k].position.x);
        CHECK(a.particles[k].position.y == b.particles[k].position.y);
        CHECK(a.particles[k].active == b.particles[k].active);
    }
}

TEST_CASE("particles deactivate off-domain and on land") {
    std::vector<uint8_t> land(9 * 9, 0);
    land[4 * 9 + 4] = 1;  // center cell
    auto g = make_grid(9, 9, 1.0, 1.0, {0.0, 0.0}, land);

    ParticleEnsemble ens;
    ens.rng.seed(1u);
    ens.particles.push_back({{7.8, 4.0}, 1.0, true});  // walks off east edge
    ens.particles.push_back({{2.0, 4.0}, 1.0, true});  // walks onto land
    VectorField vel(g, 1.0, 0.0);
    ScalarField dh(g, 0.0);

    ParticleEnsemble out = advect_particles(ens, vel, dh, 1.0);
    CHECK_FALSE(out.particles[0].active);
    CHECK(out.particles[1].active);  // now at x=3, still water
    out = advect_particles(out, vel, dh, 1.0);
    CHECK_FALSE(out.particles[1].active);  // x=4 is the land cell
}

TEST_CASE("center of mass stays put without drift") {
    auto g = centered_grid(81, 1.0);
    VectorField vel(g);
    ScalarField dh(g, 0.25);
    ParticleEnsemble ens = seed_ensemble(g, {0.0, 0.0}, 1.0, 20000, 0.0, 5150u);
    const int steps = 10;
    for (int k = 0; k < steps; ++k) ens = advect_particles(ens, vel, dh, 1.0);

    double cx = 0.0, cy = 0.0;
    std::size_t n = 0;
    for (const auto& p : ens.particles)
        if (p.active) {
            cx += p.position.x;
            cy += p.position.y;
            ++n;
        }
    cx /= static_cast<double>(n);
    cy /= static_cast<double>(n);
    // Walk variance after `steps` is 2*Dh*dt*steps per axis.
    double se = std::sqrt(2.0 * 0.25 * 1.0 * steps / static_cast<double>(n));
    CHECK(std::abs(cx) < 3.0 * se);
    CHECK(std::abs(cy) < 3.0 * se);
}

TEST_CASE("total volume is conserved while all particles are active") {
    auto g = centered_grid(81, 1.0);
    VectorField vel(g, 0.05, 0.02);
    ScalarField dh(g, 0.1);
    ParticleEnsemble ens = seed_ensemble(g, {0.0, 0.0}, 12.5, 500, 1.0, 11u);
    double v0 = ens.total_volume();
    CHECK(v0 == Catch::Approx(12.5).margin(1e-12));
    for (int k = 0; k < 5; ++k) {
        ens = advect_particles(ens, vel, dh, 1.0);
        if (ens.active_count() == ens.particles.size())
            CHECK(ens.active_volume() == Catch::Approx(v0).margin(1e-12));
    }
}

// ============================================================================
// probability maps
// ============================================================================

TEST_CASE("single-cell ensembles concentrate the probability") {
    auto g = make_grid(5, 5, 1.0, 1.0, {0.0, 0.0});
    ParticleEnsemble ens;
    ens.particles.push_back({{2.1, 3.2}, 0.5, true});
    ens.particles.push_back({{1.9, 2.8}, 1.5, true});
    OilProbabilityMap m = probability_single(ens, g);
    CHECK(m.prob.at(2, 3) == Catch::Approx(1.0).margin(1e-15));
    CHECK(m.prob.sum() == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("volume-weighted cell probabilities") {
    auto g = make_grid(5, 5, 1.0, 1.0, {0.0, 0.0});
    ParticleEnsemble ens;
    ens.particles.push_back({{0.0, 0.0}, 1.0, true});
    ens.particles.push_back({{4.0, 4.0}, 3.0, true});
    OilProbabilityMap m = probability_single(ens, g);
    CHECK(m.prob.at(0, 0) == Catch::Approx(0.25).margin(1e-15));
    CHECK(m.prob.at(4, 4) == Catch::Approx(0.75).margin(1e-15));

    ens.particles[0].active = false;
    ens.particles[1].active = false;
    CHECK_THROWS_AS(probability_single(ens, g), EmptySpillError);
}

TEST_CASE("probability sums to one for random ensembles") {
    auto g = centered_grid(21, 1.0);
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        ParticleEnsemble ens =
            seed_ensemble(g, {0.0, 0.0}, 3.7, 400, 3.0, seed);
        OilProbabilityMap m = probability_single(ens, g);
        CHECK(std::abs(m.prob.sum() - 1.0) < 1e-12);
    }
}

TEST_CASE("mean map equals the pooled per-particle evaluation") {
    auto g = centered_grid(21, 1.0);
    std::vector<ParticleEnsemble> runs;
    std::vector<OilProbabilityMap> maps;
    for (int s = 0; s < 16; ++s) {
        runs.push_back(seed_ensemble(g, {1.0, -1.0}, 2.0, 200, 2.5,
                                     1000u + static_cast<uint64_t>(s), s));
        maps.push_back(probability_single(runs.back(), g));
    }
    OilProbabilityMap mean = probability_mean(maps);
    CHECK(mean.realizations == 16);
    CHECK(mean.prob.sum() == Catch::Approx(1.0).margin(1e-12));

    // Brute-force oracle straight from the particles.
    ScalarField oracle(g);
    for (const auto& run : runs) {
        double act = run.active_volume();
        for (const auto& p : run.particles)
            if (p.active) {
                CellIndex c = g->locate(p.position);
                oracle.at(c.i, c.j) += p.volume / act / 16.0;
            }
    }
    for (std::size_t k = 0; k < oracle.size(); ++k)
        CHECK(std::abs(mean.prob[k] - oracle[k]) < 1e-14);

    OilProbabilityMap one = probability_mean({maps[0]});
    for (std::size_t k = 0; k < one.prob.size(); ++k)
        CHECK(one.prob[k] == maps[0].prob[k]);

    CHECK_THROWS_AS(probability_mean({}), ConfigError);
}

TEST_CASE("presence rescaling") {
    auto g = make_grid(3, 3, 1.0, 1.0, {0.0, 0.0});
    OilProbabilityMap m;
    m.prob = ScalarField(g);
    m.prob.at(0, 0) = 0.1;
    m.prob.at(1, 0) = 0.2;
    m.prob.at(2, 0) = 0.4;
    ScalarField p = rescale_presence(m);
    CHECK(p.at(0, 0) == Catch::Approx(0.25).margin(1e-15));
    CHECK(p.at(1, 0) == Catch::Approx(0.5).margin(1e-15));
    CHECK(p.at(2, 0) == Catch::Approx(1.0).margin(1e-15));

    // Idempotence: rescaling a rescaled map changes nothing.
    OilProbabilityMap m2;
    m2.prob = p;
    ScalarField p2 = rescale_presence(m2);
    for (std::size_t k = 0; k < p.size(); ++k) CHECK(p2[k] == p[k]);

    OilProbabilityMap zero;
    zero.prob = ScalarField(g);
    CHECK_THROWS_AS(rescale_presence(zero), EmptySpillError);
}

// ============================================================================
// entropy_neighborhood
// ============================================================================

namespace {

// Independent direct evaluation used as the oracle.
ScalarField entropy_oracle(const ScalarField& p) {
    const GridSpec& g = *p.grid();
    ScalarField raw(p.grid());
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            std::vector<double> vals;
            for (int dj = -1; dj <= 1; ++dj)
                for (int di = -1; di <= 1; ++di)
                    if (g.in_range(i + di, j + dj))
                        vals.push_back(p.at(i + di, j + dj));
            double s = 0.0;
            for (double v : vals) s += v;
            if (s <= 0.0) continue;
            double h = 0.0;
            for (double v : vals)
                if (v > 0.0) h -= (v / s) * std::log(v / s);
            raw.at(i, j) = h;
        }
    double lo = raw.min_value(), hi = raw.max_value();
    if (hi - lo <= 0.0) {
        raw.fill(0.0);
        return raw;
    }
    for (auto& x : raw.data()) x = (x - lo) / (hi - lo);
    return raw;
}

}  // namespace

TEST_CASE("entropy of an empty map is zero") {
    auto g = make_grid(6, 6, 1.0, 1.0, {0.0, 0.0});
    ScalarField p(g);
    ScalarField e = entropy_neighborhood(p);
    CHECK(e.max_abs() == 0.0);
}

TEST_CASE("entropy matches direct evaluation and spans [0,1]") {
    auto g = make_grid(10, 8, 1.0, 1.0, {0.0, 0.0});
    std::mt19937_64 rng(41u);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    ScalarField p(g);
    for (auto& x : p.data()) x = ud(rng) < 0.4 ? ud(rng) : 0.0;

    ScalarField e = entropy_neighborhood(p);
    ScalarField o = entropy_oracle(p);
    for (std::size_t k = 0; k < e.size(); ++k)
        CHECK(std::abs(e[k] - o[k]) < 1e-14);

    CHECK(e.min_value() == 0.0);
    CHECK(e.max_value() == 1.0);
}

TEST_CASE("concentrated neighborhoods carry no entropy") {
    // A lone occupied cell makes every covering neighborhood a point mass,
    // so the raw entropy is constant zero and min-max collapses to zero.
    auto g = make_grid(7, 7, 1.0, 1.0, {0.0, 0.0});
    ScalarField p(g);
    p.at(3, 3) = 1.0;
    ScalarField e = entropy_neighborhood(p);
    CHECK(e.max_abs() == 0.0);

    // A 2x2 block produces mixed neighborhoods whose entropy peaks where
    // the neighborhood is most even.
    p.at(3, 4) = 1.0;
    p.at(4, 3) = 1.0;
    p.at(4, 4) = 1.0;
    e = entropy_neighborhood(p);
    ScalarField o = entropy_oracle(p);
    for (std::size_t k = 0; k < e.size(); ++k)
        CHECK(std::abs(e[k] - o[k]) < 1e-14);
    CHECK(e.max_value() == 1.0);
}
