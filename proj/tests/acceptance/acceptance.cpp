// Acceptance gate: ten end-to-end checks, one printed line each. Exit code
// is nonzero when any line fails. Tolerances are pinned here, next to the
// check they guard, so a change in either is visible in review.

#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "hjhom/harness.hpp"

#include "../oracles.hpp"

using namespace hjhom;

namespace {

int failures = 0;

void report(int n, bool pass, const std::string& detail) {
    std::printf("criterion %2d: %s  %s\n", n, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

std::string pct(real x) { return fmt(std::round(x * 1e4) / 1e2) + "%"; }

ExperimentConfig must_normalize(const json& doc) {
    std::vector<std::string> errors;
    ExperimentConfig cfg = normalize_config(doc, errors);
    if (!errors.empty()) {
        std::string msg = "config rejected:";
        for (const auto& e : errors) msg += " " + e;
        throw InvalidSpec(msg);
    }
    return cfg;
}

const Verdict* find_verdict(const ExperimentArtifact& art, const std::string& name) {
    for (const auto& v : art.verdicts)
        if (v.name == name) return &v;
    return nullptr;
}

// The eikonal benchmark medium: H(p, y) = |p|^2 + 1 + cos(2 pi y).
EnvironmentRealization cosine_env() {
    EnvironmentSpec es;
    es.dim = 1;
    es.components = 1;
    es.side = 1;
    FieldSpec pot;
    pot.kind = FieldKind::periodic_cosine;
    pot.mean = 1.0;
    pot.amplitude = 1.0;
    pot.period = 1.0;
    es.potential = pot;
    return realize(es, 3);
}

HamiltonianModel eikonal_model() {
    auto md = make_model(ModelKind::uncoupled, 1, 2.0, 1.0);
    md.potential_weight = {1.0};
    return md;
}

oracle::ScalarQuadraticOracle eikonal_oracle() {
    return {[](double y) { return 1.0 + std::cos(2.0 * M_PI * y); }, 1.0, 1.0};
}

EnvironmentSpec checkerboard_spec(int side, int components = 1) {
    EnvironmentSpec es;
    es.dim = 1;
    es.components = components;
    es.side = side;
    FieldSpec pot;
    pot.kind = FieldKind::random_checkerboard;
    pot.mean = 1.0;
    pot.amplitude = 0.5;
    pot.cell = 1.0;
    es.potential = pot;
    es.coupling = constant_field(1.0);
    return es;
}

//----------------------------------------------------------------------------
// 1. Two-component collapse against the closed-form decay.
//----------------------------------------------------------------------------

void criterion_1() {
    json doc = {{"kind", "collapse-demo"},
                {"seed", 1},
                {"out", "acceptance_runs/collapse"},
                {"environment",
                 {{"dim", 1},
                  {"components", 2},
                  {"side", 1},
                  {"potential", {{"kind", "constant"}, {"mean", 0}}},
                  {"coupling", {{"kind", "constant"}, {"mean", 1}}}}},
                {"model", {{"kind", "quadratic-coupling"}, {"gamma", 2}, {"a", 1}}},
                {"run",
                 {{"eps", json::array({0.2, 0.1, 0.05})},
                  {"T", 1.0},
                  {"snapshots", 20},
                  {"h", 1.0 / 32},
                  {"extent", 1.0},
                  {"u_high", 1.0},
                  {"u_low", 0.0},
                  {"tol", 1e-2}}}};
    auto art = run_experiment(must_normalize(doc));
    std::string detail;
    bool pass = true;
    for (real eps : {0.2, 0.1, 0.05}) {
        const Verdict* v = find_verdict(art, "collapse-error-eps-" + fmt(eps));
        pass = pass && v && v->pass;
    }
    const Verdict* frozen = find_verdict(art, "second-component-frozen");
    pass = pass && frozen && frozen->pass;
    detail = "upper component tracks 1/(1 + t/eps^2) within 1e-2 at eps {0.2, 0.1, 0.05}; " +
             std::string(frozen ? frozen->detail : "frozen verdict missing");
    report(1, pass, detail);
}

//----------------------------------------------------------------------------
// 2. Constant-medium cell problem is exact at every discount.
//----------------------------------------------------------------------------

void criterion_2() {
    EnvironmentSpec es;
    es.dim = 1;
    es.components = 1;
    es.side = 1;
    es.potential = constant_field(0.0);
    auto env = realize(es, 1);
    auto md = make_model(ModelKind::uncoupled, 1, 2.0, 1.0);
    HbarSchedule sch;  // delta 0.2 halved 4 times
    sch.tol = 1e-10;
    auto est = estimate_Hbar(md, env, Point{1.0, 0.0}, 0.0, sch);
    real worst = 0, worst_flat = 0;
    for (real lam : est.lambdas) worst = std::max(worst, std::abs(lam - 1.0));
    for (real f : est.flatness) worst_flat = std::max(worst_flat, f);
    bool pass = worst <= 1e-8 && worst_flat == 0.0;
    report(2, pass,
           "H(p)=|p|^2 at p=1: worst |lambda - 1| = " + fmt(worst) +
               " (tolerance 1e-8), flatness " + fmt(worst_flat) + " (must be exactly 0)");
}

//----------------------------------------------------------------------------
// 3. Periodic eikonal slopes against the quadrature-bisection oracle.
//----------------------------------------------------------------------------

void criterion_3() {
    auto env = cosine_env();
    auto md = eikonal_model();
    auto orc = eikonal_oracle();
    HbarSchedule sch;
    sch.h = 1.0 / 256;
    sch.delta0 = 0.2;
    sch.halvings = 5;
    real worst = 0;
    std::string per_p;
    for (real p : {0.0, 0.5, 1.0, 2.0}) {
        auto est = estimate_Hbar(md, env, Point{p, 0.0}, 0.0, sch);
        real ref = orc.hbar(p);
        real rel = std::abs(est.hbar - ref) / std::abs(ref);
        worst = std::max(worst, rel);
        per_p += (per_p.empty() ? "" : ", ") + fmt(p) + ":" + pct(rel);
    }
    report(3, worst <= 0.02,
           "relative error vs oracle at p {" + per_p + "}, tolerance 2%");
}

//----------------------------------------------------------------------------
// 4 and 5. Metric consistency with the tabulated support function, then the
// property suite on every table built here.
//----------------------------------------------------------------------------

void criteria_4_5(const ExperimentArtifact& convergence_art) {
    auto env = cosine_env();
    auto md = eikonal_model();
    TableAxes axes;
    axes.p1 = linspace(-2.4, 2.4, 25);
    HbarSchedule sch;
    sch.h = 1.0 / 128;
    sch.halvings = 3;
    auto tab = build_table(md, env, axes, sch);

    MetricProblem base;
    base.model = md;
    base.env = env;
    base.hbar_est = 2.0;  // exact flat value of the tabulated curve
    std::vector<Point> dirs{Point{1.0, 0.0}, Point{-1.0, 0.0}};
    std::vector<real> ts{8.0, 16.0, 32.0};
    bool pass4 = true;
    real worst_rel = 0;
    for (real mu : {2.5, 3.0, 4.0}) {
        MetricProblem prob = base;
        prob.mu = mu;
        auto est = estimate_M(prob, dirs, ts);
        auto cons = metric_consistency(est, tab, 0.03);
        for (real rel : cons.rel_discrepancy) worst_rel = std::max(worst_rel, rel);
        pass4 = pass4 && cons.pass;
    }

    // trivial medium: zero potential must give the unit metric
    EnvironmentSpec flat;
    flat.dim = 1;
    flat.components = 1;
    flat.side = 1;
    flat.potential = constant_field(0.0);
    MetricProblem triv;
    triv.model = make_model(ModelKind::uncoupled, 1, 2.0, 1.0);
    triv.env = realize(flat, 1);
    triv.mu = 1.0;
    auto triv_est = estimate_M(triv, dirs, {4.0, 8.0, 16.0});
    real triv_err = 0;
    for (real M : triv_est.M) triv_err = std::max(triv_err, std::abs(M - 1.0));
    bool pass_triv = triv_err <= 0.02;

    report(4, pass4 && pass_triv,
           "fitted metric vs table support function at mu {2.5, 3, 4}: worst gap " +
               pct(worst_rel) + " (tolerance 3%); trivial medium M off by " + pct(triv_err) +
               " (tolerance 2%)");

    // criterion 5: every table built by this suite passes the property checks
    auto rep = check_effective_properties(tab, md, env);
    bool pass5 = rep.all_hold();
    std::string failing;
    for (const auto& c : rep.checks)
        if (!c.holds) failing += " " + c.name;
    int table_verdicts = 0;
    for (const auto& v : convergence_art.verdicts)
        if (v.name.rfind("table-", 0) == 0) {
            ++table_verdicts;
            if (!v.pass) {
                pass5 = false;
                failing += " convergence:" + v.name;
            }
        }
    pass5 = pass5 && table_verdicts > 0;
    report(5, pass5,
           failing.empty()
               ? "convexity, r-monotonicity, coercivity, and Lipschitz checks hold on the "
                 "eikonal table and the convergence-study table"
               : "failing checks:" + failing);
}

//----------------------------------------------------------------------------
// 6. Non-expansion of the lockstep pair march over randomized data.
//----------------------------------------------------------------------------

void criterion_6() {
    auto env = realize(checkerboard_spec(4, 2), 71);
    auto md = make_model(ModelKind::quadratic_coupling, 2, 2.0, 1.0);
    Grid g;
    g.dim = 1;
    g.npts[0] = 32;
    g.npts[1] = 1;
    g.h = 1.0 / 32;
    g.periodic = true;

    std::mt19937_64 rng(2026);
    std::uniform_real_distribution<real> amp(-0.5, 0.5);
    auto random_field = [&](VectorGridField& f) {
        for (auto& comp : f.comp) {
            real a0 = amp(rng), a1 = amp(rng), a2 = amp(rng), ph1 = amp(rng), ph2 = amp(rng);
            for (int i = 0; i < g.npts[0]; ++i) {
                real x = g.point(i, 0)[0];
                comp[i] = a0 + a1 * std::cos(2 * M_PI * x + ph1) +
                          a2 * std::cos(4 * M_PI * x + ph2);
            }
        }
    };

    bool pass = true;
    real worst_excess = 0;
    for (int pair = 0; pair < 20; ++pair) {
        EvolutionProblem prob;
        prob.model = md;
        prob.env = env;
        prob.eps = 0.25;
        prob.T = 0.5;
        prob.snapshot_times = {0.1, 0.2, 0.3, 0.4, 0.5};
        prob.u0 = VectorGridField::zeros(g, 2);
        VectorGridField v0 = VectorGridField::zeros(g, 2);
        random_field(prob.u0);
        random_field(v0);
        auto rep = evolve_pair_gap(prob, v0);  // allowance 1e-9 per step
        pass = pass && rep.non_expansive;
        for (const auto& e : rep.entries) worst_excess = std::max(worst_excess, e.gap - e.bound);
    }
    report(6, pass,
           "20 randomized pairs, gap within initial gap + 1e-9 * steps at every snapshot "
           "(worst excess " +
               fmt(worst_excess) + ")");
}

//----------------------------------------------------------------------------
// 7. Subadditivity and approximate one-homogeneity of the exclusion metric.
//----------------------------------------------------------------------------

void criterion_7() {
    auto env = realize(checkerboard_spec(256), 101);
    MetricProblem base;
    base.model = make_model(ModelKind::uncoupled, 1, 2.0, 1.0);
    base.env = env;
    base.mu = 1.5;
    base.hbar_est = -0.5;

    MetricProblem from0 = base;
    from0.domain_radius = 96;
    auto rep0 = solve_metric(from0);

    int triples = 0, held = 0;
    real worst_excess = -1e9;
    for (real y : {8.0, 16.0, 24.0, 32.0, 40.0}) {
        MetricProblem mid = base;
        mid.exclusion = Point{y, 0.0};
        mid.domain_radius = 40;
        auto repY = solve_metric(mid);
        real lip = std::max(rep0.lipschitz, repY.lipschitz);
        for (int j = 1; j <= 10; ++j) {
            real z = y + 3.0 * j;
            ++triples;
            real lhs = metric_value(rep0, Point{z, 0.0});
            real rhs = metric_value(rep0, Point{y, 0.0}) + metric_value(repY, Point{z, 0.0});
            real slack = 2 * base.h * lip;
            worst_excess = std::max(worst_excess, lhs - rhs - slack);
            if (lhs <= rhs + slack + 1e-9) ++held;
        }
    }
    bool sub_ok = held == triples;

    real r8 = metric_value(rep0, Point{8, 0}) / 8, r16 = metric_value(rep0, Point{16, 0}) / 16;
    real r32 = metric_value(rep0, Point{32, 0}) / 32, r64 = metric_value(rep0, Point{64, 0}) / 64;
    real d8 = std::abs(r16 - r8), d16 = std::abs(r32 - r16), d32 = std::abs(r64 - r32);
    bool homog_ok = d16 < d8 && d32 < d16;

    report(7, sub_ok && homog_ok,
           "triangle inequality held on " + std::to_string(held) + "/" +
               std::to_string(triples) + " triples within 2h*Lip; |m(2t)/2t - m(t)/t| = {" +
               fmt(d8) + ", " + fmt(d16) + ", " + fmt(d32) + "} decreasing over t {8, 16, 32}");
}

//----------------------------------------------------------------------------
// 8. Across-seed spread of the effective slope shrinks with the torus.
//----------------------------------------------------------------------------

void criterion_8() {
    auto md = make_model(ModelKind::uncoupled, 1, 2.0, 1.0);
    HbarSchedule sch;
    sch.h = 1.0 / 32;
    sch.halvings = 3;
    sch.tol = 1e-8;
    std::vector<real> stds;
    std::string detail = "std of Hbar over 8 seeds:";
    for (int L : {16, 32, 64}) {
        std::vector<real> hbars;
        for (std::uint64_t seed = 501; seed < 509; ++seed) {
            auto env = realize(checkerboard_spec(L), seed);
            hbars.push_back(estimate_Hbar(md, env, Point{1.0, 0.0}, 0.0, sch).hbar);
        }
        auto ms = oracle::mean_std(hbars);
        stds.push_back(ms.sd);
        detail += " L=" + std::to_string(L) + ":" + fmt(ms.sd);
    }
    bool pass = stds[0] > stds[1] && stds[1] > stds[2];
    report(8, pass, detail + " (must decrease strictly)");
}

//----------------------------------------------------------------------------
// 9 and 10. Homogenization of the coupled system and its boundary layer.
//----------------------------------------------------------------------------

ExperimentArtifact criteria_9_10() {
    json doc = {
        {"kind", "convergence-study"},
        {"seed", 13},
        {"out", "acceptance_runs/convergence"},
        {"environment",
         {{"dim", 1},
          {"components", 2},
          {"side", 10},
          {"potential",
           {{"kind", "random-checkerboard"}, {"mean", 1.5}, {"amplitude", 0.1}, {"cell", 1}}},
          {"coupling", {{"kind", "constant"}, {"mean", 1}}}}},
        {"model", {{"kind", "quadratic-coupling"}, {"gamma", 2}, {"a", 1}}},
        {"table",
         {{"p1_min", -0.6},
          {"p1_max", 0.6},
          {"p1_count", 13},
          {"delta0", 0.2},
          {"halvings", 3},
          {"h", 1.0 / 64},
          {"safety", 0.4},
          {"tol", 1e-8}}},
        {"run",
         {{"eps", json::array({0.2, 0.1, 0.05})},
          {"T", 1.0},
          {"t0", 0.25},
          {"snapshots", 16},
          {"h", 1.0 / 256},
          {"extent", 4.0},
          {"safety", 0.1},
          {"target_fraction", 0.05},
          {"fit_residual_max", 0.2},
          {"delta", 0.05},
          {"table_seed_offset", 1000}}},
        {"initial", {{"offsets", json::array({1.0, 0.0})}, {"amplitude", 0.1}, {"modes", 1}}},
        {"effective", {{"h", 1.0 / 256}, {"safety", 0.4}}}};
    auto art = run_experiment(must_normalize(doc));

    const Verdict* mono = find_verdict(art, "error-monotone");
    const Verdict* final_err = find_verdict(art, "error-final");
    bool pass9 = mono && mono->pass && final_err && final_err->pass;
    report(9, pass9,
           std::string(mono ? mono->detail : "error-monotone verdict missing") + "; " +
               (final_err ? final_err->detail : "error-final verdict missing") +
               " (tolerance 5% of the effective oscillation)");

    const Verdict* envfit = find_verdict(art, "envelope-fit");
    const Verdict* barrier = find_verdict(art, "lower-barrier-finite");
    bool pass10 = envfit && envfit->pass && barrier && barrier->pass;
    report(10, pass10,
           std::string(envfit ? envfit->detail : "envelope-fit verdict missing") + "; " +
               (barrier ? barrier->detail : "lower-barrier verdict missing"));
    return art;
}

}  // namespace

int main() {
    std::printf("acceptance suite: homogenization laboratory\n");
    struct Step {
        int n;
        void (*fn)();
    };
    // criteria 9/10 run first so their artifact feeds the table checks of 5
    ExperimentArtifact convergence_art;
    try {
        convergence_art = criteria_9_10();
    } catch (const std::exception& e) {
        report(9, false, std::string("exception: ") + e.what());
        report(10, false, "skipped after the exception above");
    }
    const Step steps[] = {{1, criterion_1}, {2, criterion_2}, {3, criterion_3},
                          {6, criterion_6}, {7, criterion_7}, {8, criterion_8}};
    for (const auto& s : steps) {
        try {
            s.fn();
        } catch (const std::exception& e) {
            report(s.n, false, std::string("exception: ") + e.what());
        }
    }
    try {
        criteria_4_5(convergence_art);
    } catch (const std::exception& e) {
        report(4, false, std::string("exception: ") + e.what());
        report(5, false, "skipped after the exception above");
    }
    if (failures) {
        std::printf("acceptance: %d criterion(s) failed\n", failures);
        return 1;
    }
    std::printf("acceptance: all criteria passed\n");
    return 0;
}
