#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "hjhom/evolution.hpp"
#include "oracles.hpp"

using namespace hjhom;

namespace {

Grid macro_grid(int n, real extent, int dim = 1) {
    Grid g;
    g.dim = dim;
    g.npts[0] = n;
    g.npts[1] = dim == 2 ? n : 1;
    g.h = extent / n;
    g.origin = {0.0, 0.0};
    g.periodic = true;
    return g;
}

EnvironmentRealization flat_env(real V, real c, int m, int side = 1) {
    EnvironmentSpec es;
    es.dim = 1;
    es.components = m;
    es.side = side;
    es.potential = constant_field(V);
    es.coupling = constant_field(c);
    return realize(es, 4);
}

EnvironmentRealization checker_env(int seed, int m = 2, int side = 2) {
    EnvironmentSpec es;
    es.dim = 1;
    es.components = m;
    es.side = side;
    FieldSpec pot;
    pot.kind = FieldKind::random_checkerboard;
    pot.mean = 1.0;
    pot.amplitude = 0.5;
    pot.cell = 1.0;
    es.potential = pot;
    es.coupling = constant_field(1.0);
    return realize(es, seed);
}

// Hand-built table with H(p, r) = slope_r * r + offset on small axes.
EffectiveHamiltonianTable linear_r_table(real slope_r, real offset) {
    EffectiveHamiltonianTable tab;
    tab.pdim = 1;
    tab.p1 = {-2.0, 0.0, 2.0};
    tab.r = {-4.0, 0.0, 4.0};
    for (std::size_t i1 = 0; i1 < tab.p1.size(); ++i1)
        for (std::size_t ir = 0; ir < tab.r.size(); ++ir)
            tab.value.push_back(slope_r * tab.r[ir] + offset);
    tab.uncertainty.assign(tab.value.size(), 0.0);
    return tab;
}

}  // namespace

//============================================================================
// Coupled system marches
//============================================================================

TEST_CASE("one-sided coupling collapses onto the resting component", "[evolution]") {
    // In a flat medium with zero potential the upper component obeys the
    // scalar decay ODE while the lower one never moves.
    real eps = 0.5, low = 0.0, gap0 = 1.0;
    EvolutionProblem prob;
    prob.model = make_model(ModelKind::quadratic_coupling, 2, 2.0, 1.0);
    prob.env = flat_env(0.0, 1.0, 2);
    prob.eps = eps;
    prob.T = 1.0;
    prob.snapshot_times = {0.25, 0.5, 1.0};
    prob.u0 = VectorGridField::zeros(macro_grid(16, 1.0), 2);
    for (auto& v : prob.u0.comp[0]) v = low + gap0;
    for (auto& v : prob.u0.comp[1]) v = low;

    auto res = evolve_system(prob);
    REQUIRE(res.snapshots.size() == 3);
    oracle::CoupledDecayReference ref{low, gap0, 1.0, 1.0, eps, 0.0};
    for (const auto& snap : res.snapshots) {
        for (real v : snap.comp[1]) CHECK(v == low);  // exactly at rest
        real lo = snap.comp[0][0], hi = snap.comp[0][0];
        for (real v : snap.comp[0]) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        CHECK(hi - lo == 0.0);  // spatially constant data stay constant
        CHECK(snap.comp[0][0] == Catch::Approx(ref.upper(snap.time)).margin(1e-2));
    }
    CHECK(res.history.size() > 2);
    CHECK(res.sup_bound >= low + gap0 - 1e-12);
}

TEST_CASE("constant data in a constant medium drift at the exact rate", "[evolution]") {
    EvolutionProblem prob;
    prob.model = make_model(ModelKind::uncoupled, 1, 2.0, 1.0);
    prob.env = flat_env(1.0, 1.0, 1);  // H(0) = -V = -1, so du/dt = +1
    prob.eps = 0.5;
    prob.T = 0.75;
    prob.snapshot_times = {0.25, 0.75};
    prob.u0 = VectorGridField::zeros(macro_grid(16, 1.0), 1);
    for (auto& v : prob.u0.comp[0]) v = 0.3;
    auto res = evolve_system(prob);
    for (const auto& snap : res.snapshots)
        for (real v : snap.comp[0]) CHECK(v == Catch::Approx(0.3 + snap.time).margin(1e-9));
}

TEST_CASE("adding a constant to all components shifts the march exactly", "[evolution]") {
    EvolutionProblem prob;
    prob.model = make_model(ModelKind::quadratic_coupling, 2, 2.0, 1.0);
    prob.env = checker_env(9);
    prob.eps = 0.5;
    prob.T = 0.25;
    prob.snapshot_times = {0.25};
    Grid g = macro_grid(32, 1.0);
    prob.u0 = VectorGridField::zeros(g, 2);
    for (int i = 0; i < 32; ++i) {
        real x = g.point(i, 0)[0];
        prob.u0.comp[0][i] = std::cos(2 * M_PI * x);
        prob.u0.comp[1][i] = 0.5 * std::sin(2 * M_PI * x);
    }
    auto base = evolve_system(prob);
    for (auto& comp : prob.u0.comp)
        for (auto& v : comp) v += 2.5;
    auto shifted = evolve_system(prob);
    for (int k = 0; k < 2; ++k)
        for (std::size_t n = 0; n < base.snapshots[0].comp[k].size(); ++n)
            CHECK(shifted.snapshots[0].comp[k][n] ==
                  Catch::Approx(base.snapshots[0].comp[k][n] + 2.5).margin(1e-10));
}

TEST_CASE("scalar quadratic march matches the variational oracle", "[evolution]") {
    real extent = 4.0, T = 0.5;
    EvolutionProblem prob;
    prob.model = make_model(ModelKind::uncoupled, 1, 2.0, 1.0);
    prob.env = flat_env(0.0, 1.0, 1);
    prob.eps = 0.5;
    prob.T = T;
    prob.snapshot_times = {T};
    Grid g = macro_grid(128, extent);
    prob.u0 = VectorGridField::zeros(g, 1);
    auto u0fun = [&](double x) { return std::cos(2 * M_PI * x / extent); };
    for (int i = 0; i < g.npts[0]; ++i) prob.u0.comp[0][i] = u0fun(g.point(i, 0)[0]);

    auto res = evolve_system(prob);
    oracle::HopfLax hl{[](double p) { return p * p; }, u0fun, extent};
    real worst = 0;
    for (int i = 0; i < g.npts[0]; ++i) {
        real x = g.point(i, 0)[0];
        worst = std::max(worst, std::abs(res.snapshots[0].comp[0][i] - hl.value(x, T)));
    }
    CHECK(worst <= 0.05);
}

TEST_CASE("pointwise minimum extracts the collapsed initial datum", "[evolution]") {
    Grid g = macro_grid(8, 1.0);
    VectorGridField u0 = VectorGridField::zeros(g, 2);
    for (int i = 0; i < 8; ++i) {
        real x = g.point(i, 0)[0];
        u0.comp[0][i] = x;
        u0.comp[1][i] = -x;
    }
    auto lim = collapse_initial(u0);
    REQUIRE(lim.components() == 1);
    for (int i = 0; i < 8; ++i) {
        real x = g.point(i, 0)[0];
        CHECK(lim.comp[0][i] == std::min(x, -x));
    }
}

//============================================================================
// Lockstep pair march
//============================================================================

TEST_CASE("lockstep pair gaps never expand beyond roundoff", "[evolution]") {
    EvolutionProblem prob;
    prob.model = make_model(ModelKind::quadratic_coupling, 2, 2.0, 1.0);
    prob.env = checker_env(17);
    prob.eps = 0.5;
    prob.T = 0.25;
    prob.snapshot_times = {0.05, 0.1, 0.25};
    Grid g = macro_grid(32, 1.0);
    prob.u0 = VectorGridField::zeros(g, 2);
    VectorGridField v0 = VectorGridField::zeros(g, 2);
    for (int i = 0; i < 32; ++i) {
        real x = g.point(i, 0)[0];
        prob.u0.comp[0][i] = std::cos(2 * M_PI * x);
        prob.u0.comp[1][i] = 0.4 * std::sin(2 * M_PI * x);
        v0.comp[0][i] = prob.u0.comp[0][i] + 0.3 * std::cos(4 * M_PI * x);
        v0.comp[1][i] = prob.u0.comp[1][i] - 0.2 * std::sin(4 * M_PI * x);
    }
    auto rep = evolve_pair_gap(prob, v0);
    CHECK(rep.non_expansive);
    CHECK(rep.gap0 == Catch::Approx(0.3).margin(1e-12));
    REQUIRE(rep.entries.size() == 3);
    for (const auto& e : rep.entries) {
        CHECK(e.gap <= e.bound);
        CHECK(e.bound == Catch::Approx(rep.gap0 + 1e-9 * rep.steps).margin(1e-12));
    }
}

TEST_CASE("a constant offset pair keeps its gap exactly", "[evolution]") {
    EvolutionProblem prob;
    prob.model = make_model(ModelKind::quadratic_coupling, 2, 2.0, 1.0);
    prob.env = checker_env(17);
    prob.eps = 0.5;
    prob.T = 0.2;
    prob.snapshot_times = {0.2};
    Grid g = macro_grid(32, 1.0);
    prob.u0 = VectorGridField::zeros(g, 2);
    for (int i = 0; i < 32; ++i) {
        real x = g.point(i, 0)[0];
        prob.u0.comp[0][i] = std::cos(2 * M_PI * x);
        prob.u0.comp[1][i] = 0.4 * std::sin(2 * M_PI * x);
    }
    VectorGridField v0 = prob.u0;
    for (auto& comp : v0.comp)
        for (auto& v : comp) v += 0.2;
    auto rep = evolve_pair_gap(prob, v0);
    CHECK(rep.non_expansive);
    CHECK(rep.entries.back().gap == Catch::Approx(0.2).margin(1e-10));
}

//============================================================================
// Scalar effective marches
//============================================================================

TEST_CASE("a constant table marches linearly in time", "[evolution]") {
    auto tab = linear_r_table(0.0, 0.7);
    EffectiveEvolutionProblem prob;
    prob.table = &tab;
    prob.T = 1.0;
    prob.snapshot_times = {0.5, 1.0};
    prob.u0 = VectorGridField::zeros(macro_grid(16, 1.0), 1);
    for (auto& v : prob.u0.comp[0]) v = 1.0;
    auto res = evolve_effective(prob);
    REQUIRE(res.snapshots.size() == 2);
    for (const auto& snap : res.snapshots)
        for (real v : snap.comp[0]) CHECK(v == Catch::Approx(1.0 - 0.7 * snap.time).margin(1e-12));
    CHECK(res.lip_t == Catch::Approx(0.7).margin(1e-12));
}

TEST_CASE("a linear value dependence decays exponentially", "[evolution]") {
    auto tab = linear_r_table(1.0, 0.0);  // du/dt = -u
    EffectiveEvolutionProblem prob;
    prob.table = &tab;
    prob.T = 1.0;
    prob.snapshot_times = {1.0};
    prob.safety = 0.02;
    prob.u0 = VectorGridField::zeros(macro_grid(16, 1.0), 1);
    for (auto& v : prob.u0.comp[0]) v = 1.0;
    auto res = evolve_effective(prob);
    for (real v : res.snapshots[0].comp[0])
        CHECK(v == Catch::Approx(std::exp(-1.0)).epsilon(0.015));
}

//============================================================================
// Diagnostics and validation
//============================================================================

TEST_CASE("boundary layer fit tracks the collapse envelope", "[evolution]") {
    real eps = 0.5;
    EvolutionProblem prob;
    prob.model = make_model(ModelKind::quadratic_coupling, 2, 2.0, 1.0);
    prob.env = flat_env(0.0, 1.0, 2);
    prob.eps = eps;
    prob.T = 1.0;
    prob.snapshot_times = {0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0};
    prob.u0 = VectorGridField::zeros(macro_grid(16, 1.0), 2);
    for (auto& v : prob.u0.comp[0]) v = 1.0;
    auto res = evolve_system(prob);
    std::vector<real> lower0(16, 0.0);
    auto fit = boundary_layer_profile(res, lower0, eps);
    oracle::CoupledDecayReference ref{0.0, 1.0, 1.0, 1.0, eps, 0.0};
    REQUIRE(fit.M.size() == res.snapshots.size());
    for (std::size_t j = 0; j < fit.ts.size(); ++j)
        CHECK(fit.M[j] == Catch::Approx(ref.upper(fit.ts[j])).margin(1e-2));
    CHECK(fit.decay_detected);
    CHECK(fit.C2 > 0.0);
    CHECK(std::isfinite(fit.C1));
    CHECK(fit.lower_slack >= 0.0);
    CHECK(std::isfinite(fit.lower_slack));
}

TEST_CASE("scalar data produce no boundary layer", "[evolution]") {
    EvolutionProblem prob;
    prob.model = make_model(ModelKind::uncoupled, 1, 2.0, 1.0);
    prob.env = flat_env(1.0, 1.0, 1);  // du/dt = +1 exactly
    prob.eps = 0.5;
    prob.T = 1.0;
    prob.snapshot_times = {0.25, 0.5, 1.0};
    prob.u0 = VectorGridField::zeros(macro_grid(16, 1.0), 1);
    auto res = evolve_system(prob);
    std::vector<real> lower0(16, 0.0);
    auto fit = boundary_layer_profile(res, lower0, prob.eps);
    CHECK_FALSE(fit.decay_detected);
    for (std::size_t j = 0; j < fit.ts.size(); ++j)
        CHECK(fit.M[j] <= 1.001 * fit.ts[j] + 1e-9);  // M(t) <= C t, C = drift rate 1
}

TEST_CASE("snapshots land on the requested times", "[evolution]") {
    EvolutionProblem prob;
    prob.model = make_model(ModelKind::uncoupled, 1, 2.0, 1.0);
    prob.env = checker_env(29, 1);
    prob.eps = 0.25;
    prob.T = 0.5;
    prob.snapshot_times = {0.1, 0.2, 0.3, 0.5};
    Grid g = macro_grid(32, 1.0);
    prob.u0 = VectorGridField::zeros(g, 1);
    for (int i = 0; i < 32; ++i) prob.u0.comp[0][i] = std::sin(2 * M_PI * g.point(i, 0)[0]);
    auto res = evolve_system(prob);
    REQUIRE(res.snapshots.size() == 4);
    for (std::size_t j = 0; j < 4; ++j)
        CHECK(res.snapshots[j].time == Catch::Approx(prob.snapshot_times[j]).margin(1e-12));
    for (std::size_t j = 1; j < res.history.size(); ++j)
        CHECK(res.history[j].t >= res.history[j - 1].t);
    CHECK(res.dt_min <= res.dt_max);
    CHECK(res.steps > 0);
}

TEST_CASE("malformed marches are rejected with named values", "[evolution]") {
    EvolutionProblem prob;
    prob.model = make_model(ModelKind::uncoupled, 1, 2.0, 1.0);
    prob.env = flat_env(0.0, 1.0, 1);
    prob.eps = 0.3;  // extent 1 over eps*side 0.3 is not whole
    prob.T = 0.5;
    prob.u0 = VectorGridField::zeros(macro_grid(16, 1.0), 1);
    CHECK_THROWS_MATCHES(evolve_system(prob), InvalidSpec,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("whole multiple")));

    prob.eps = 0.5;
    prob.snapshot_times = {0.4, 0.2};
    CHECK_THROWS_MATCHES(evolve_system(prob), InvalidSpec,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("strictly increasing")));

    prob.snapshot_times = {0.2, 0.9};  // beyond T
    CHECK_THROWS_MATCHES(
        evolve_system(prob), InvalidSpec,
        Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("outside")));

    prob.snapshot_times = {};
    prob.safety = 0.0;
    CHECK_THROWS_MATCHES(evolve_system(prob), InvalidSpec,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("safety must be positive")));

    prob.safety = 0.1;
    prob.u0 = VectorGridField::zeros(macro_grid(16, 1.0), 2);
    CHECK_THROWS_MATCHES(
        evolve_system(prob), InvalidSpec,
        Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("components")));
}
