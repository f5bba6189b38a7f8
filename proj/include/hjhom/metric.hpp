#pragma once
// The exclusion-set metric problem and the homogenized metric built from it.
//
// For a level mu above the effective Hamiltonian the system
//
//   -tr(A_k(y) D^2 m_k) + H_k(p + Dm_k, rhat, m_k - m_j, y) = mu
//
// is solved outside a small exclusion set D around a point x, with m = 0 on
// D (the corrector offset of the constructive existence argument is dropped;
// every report records this convention) and a coercivity barrier pinning the
// outer boundary. The normalized values m(t e)/t estimate the homogenized
// metric M_mu(e), which is compared against the support function
//
//   sup { q . e : Hbar(p + q, r) <= mu }
//
// read off an effective Hamiltonian table.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "hjhom/common.hpp"
#include "hjhom/effective.hpp"
#include "hjhom/environment.hpp"
#include "hjhom/grid.hpp"
#include "hjhom/model.hpp"
#include "hjhom/numerics.hpp"

namespace hjhom {

struct MetricProblem {
    HamiltonianModel model;
    EnvironmentRealization env;
    Point p{0, 0};
    real r = 0;
    real mu = 1.0;
    real hbar_est = 0;     // effective Hamiltonian estimate at (p, r)
    real mu_margin = -1;   // negative: use the default 0.1 (1 + |hbar_est|)
    Point exclusion{0, 0};          // center x of the exclusion set
    real exclusion_min_radius = 0;  // floor for the pinned ball in the viscous case
    real domain_radius = 16;        // box [x - R, x + R]^dim
    real h = 0.125;
    real safety = 0.4;
    real tol = 1e-7;
    real slope_margin = 1.2;  // extra factor on the barrier slope
    std::size_t max_iters = 40'000'000;
};

struct MetricSolveReport {
    VectorGridField m;      // solution components on `grid`
    Grid grid;
    real slope = 0;             // barrier cone slope a
    real exclusion_radius = 0;  // 0 means a single pinned node
    real residual = 0;
    std::size_t iters = 0;
    real measurement_radius = 0;  // 0.8 R, the trusted zone away from the outer cap
    real barrier_clearance = 0;   // min of a(|y-x|+1) - m over the trusted zone; > 0 keeps the growth sandwich
    real min_value = 0;           // most negative solution value (growth sandwich, lower end)
    real lipschitz = 0;           // max observed |Dm|
    std::string boundary_note;    // records the zero-boundary-data convention
};

// Reads component k of a metric solution at an arbitrary point.
inline real metric_value(const MetricSolveReport& rep, Point y, int k = 0) {
    return grid_interpolate(rep.grid, rep.m.comp[k], y);
}

// Coercivity-based cone slope: |p + q| beyond this makes every H_k exceed mu.
inline real barrier_slope(const HamiltonianModel& md, const EnvironmentRealization& env, Point p,
                          real r, real mu, real margin) {
    real C1 = *std::min_element(md.a.begin(), md.a.end());
    real C3 = 0;
    for (int k = 0; k < md.components(); ++k)
        C3 = std::max(C3, pos(-md.potential_weight[k]) * env.potential_sup() +
                              md.beta[k] * std::abs(r));
    if (md.kind == ModelKind::quadratic_coupling && md.components() >= 2) {
        real wmin = *std::min_element(md.coupling_weight.begin(), md.coupling_weight.end());
        C3 += pos(wmin * env.coupling_inf()) / 4;
    }
    real gbar = min_gamma(md);
    real pn = std::sqrt(sqr(p[0]) + (env.dim() == 2 ? sqr(p[1]) : 0));
    return margin * (std::pow(pos(mu + C3) / C1, 1.0 / gbar) + pn);
}

inline MetricSolveReport solve_metric(const MetricProblem& prob) {
    const EnvironmentRealization& env = prob.env;
    const HamiltonianModel& md = prob.model;
    {
        auto errs = validate(md, env.components());
        if (!errs.empty()) throw InvalidSpec("solve_metric: " + errs.front());
    }
    if (!(prob.domain_radius > 4 * prob.h))
        throw InvalidSpec("solve_metric: domain radius too small for the grid spacing");
    real margin = prob.mu_margin >= 0 ? prob.mu_margin : 0.1 * (1 + std::abs(prob.hbar_est));
    if (!(prob.mu >= prob.hbar_est + margin))
        throw InvalidSpec("solve_metric: mu=" + fmt(prob.mu) +
                          " is below the estimated effective level " + fmt(prob.hbar_est) +
                          " plus margin " + fmt(margin));

    const int m = env.components();
    Grid g;
    g.dim = env.dim();
    g.h = prob.h;
    g.periodic = false;
    int half = static_cast<int>(std::lround(prob.domain_radius / prob.h));
    g.npts[0] = 2 * half + 1;
    g.npts[1] = g.dim == 2 ? 2 * half + 1 : 1;
    g.origin = {prob.exclusion[0] - half * prob.h,
                g.dim == 2 ? prob.exclusion[1] - half * prob.h : 0};

    // Exclusion set: a single node unless the operator is viscous with
    // growth gamma <= 2, where a point constraint carries no force and a
    // small ball is pinned instead.
    real diff_sup = 0;
    for (int k = 0; k < m; ++k) diff_sup = std::max(diff_sup, env.diffusion_sup(k));
    bool point_ok = diff_sup == 0 || min_gamma(md) > 2;
    real rho = point_ok ? 0.0 : std::max(prob.exclusion_min_radius, 2 * prob.h);

    real a = barrier_slope(md, env, prob.p, prob.r, prob.mu, prob.slope_margin);

    const std::size_t nodes = g.size();
    enum : unsigned char { free_node, excluded, boundary };
    std::vector<unsigned char> role(nodes, free_node);
    std::vector<real> dist(nodes);  // |y - x|
    for (int j = 0; j < g.npts[1]; ++j)
        for (int i = 0; i < g.npts[0]; ++i) {
            std::size_t n = g.index(i, j);
            Point y = g.point(i, j);
            real dx = y[0] - prob.exclusion[0];
            real dy = g.dim == 2 ? y[1] - prob.exclusion[1] : 0;
            dist[n] = std::sqrt(dx * dx + dy * dy);
            bool edge = i == 0 || i == g.npts[0] - 1 ||
                        (g.dim == 2 && (j == 0 || j == g.npts[1] - 1));
            if (dist[n] <= rho + 1e-12) role[n] = excluded;
            else if (edge) role[n] = boundary;
        }

    VectorGridField sol = VectorGridField::zeros(g, m);
    for (int k = 0; k < m; ++k)
        for (std::size_t n = 0; n < nodes; ++n)
            if (role[n] == boundary) sol.comp[k][n] = a * dist[n];

    detail::SampledMedium med = detail::sample_medium(env, g);
    std::vector<real> rhat(m, prob.r);
    std::vector<std::vector<real>> resid(m, std::vector<real>(nodes, 0.0));
    std::vector<std::vector<real>> step(m, std::vector<real>(nodes, 0.0));
    std::vector<OneSidedGradients> grads(m);
    std::array<real, 4> sdiff{};
    real resid_sup = 0;
    std::size_t it = 0;

    // Node-local dissipation and node-local pseudo-time steps (damped
    // nonlinear Jacobi). The cap ring carries an O(R/h) one-sided jump by
    // construction (supersolution data above the true growth); a global
    // alpha would have to cover it, collapsing dt everywhere and flooding
    // the domain with scheme viscosity. Local bounds keep every node's
    // self-relaxation rate at `safety` per sweep instead.
    real Lambda = estimate_bounds(md, env, 1.0).Lambda;

    for (;; ++it) {
        if (it >= prob.max_iters)
            throw SolverFailure("solve_metric: residual still " + fmt(resid_sup) + " after " +
                                std::to_string(it) + " iterations (mu=" + fmt(prob.mu) + ")");

        for (int k = 0; k < m; ++k) one_sided_gradients(sol.comp[k], g, grads[k]);

        real srange = 0;
        for (int k = 0; k < m; ++k)
            for (int i = k + 1; i < m; ++i)
                srange = std::max(srange, sup_abs_diff(sol.comp[k], sol.comp[i]));
        real coup_lip = 0;
        if (md.kind == ModelKind::quadratic_coupling && m >= 2)
            coup_lip = 2 * m * env.coupling_sup() *
                       *std::max_element(md.coupling_weight.begin(), md.coupling_weight.end()) *
                       srange;
        else if (md.kind == ModelKind::exponential_coupling && m >= 2)
            coup_lip = m * env.coupling_sup() *
                       *std::max_element(md.coupling_weight.begin(), md.coupling_weight.end()) *
                       std::exp(std::min(srange, md.exp_clamp));

        resid_sup = 0;
        for (int k = 0; k < m; ++k) {
            const OneSidedGradients& grad = grads[k];
            real gk = md.gamma[k], ak = md.a[k];
            for (int j = 0; j < g.npts[1]; ++j)
                for (int i = 0; i < g.npts[0]; ++i) {
                    std::size_t n = g.index(i, j);
                    if (role[n] != free_node) {
                        resid[k][n] = 0;
                        continue;
                    }
                    const MediumSample& ms = med(k, n);
                    for (int c = 0; c < m; ++c)
                        sdiff[c] = c == k ? 0 : sol.comp[k][n] - sol.comp[c][n];
                    std::array<real, 2> dm{prob.p[0] + grad.minus[0][n],
                                           g.dim == 2 ? prob.p[1] + grad.minus[1][n] : 0};
                    std::array<real, 2> dp{prob.p[0] + grad.plus[0][n],
                                           g.dim == 2 ? prob.p[1] + grad.plus[1][n] : 0};
                    // local state box: per-axis extreme of the two one-sided
                    // slopes; alpha covers |dH/dp| over the box
                    real qbox2 = 0;
                    for (int d = 0; d < g.dim; ++d)
                        qbox2 += sqr(std::max(std::abs(dm[d]), std::abs(dp[d])));
                    real alpha = 1.3 * ak * gk * std::pow(qbox2, 0.5 * (gk - 1));
                    Point q{0.5 * (dm[0] + dp[0]), 0.5 * (dm[1] + dp[1])};
                    real H = evaluate_at(md, g.dim, m, ms, k, q, rhat,
                                         std::span<const real>(sdiff.data(), m));
                    for (int d = 0; d < g.dim; ++d)
                        H -= 0.5 * alpha * (dp[d] - dm[d]);
                    real diff = med.any_diffusion
                                    ? diffusion_term(env, k, sol.comp[k], g, i, j)
                                    : 0;
                    real rd = -diff + H - prob.mu;
                    resid[k][n] = rd;
                    real rate = coup_lip + g.dim * alpha / g.h +
                                2 * Lambda * g.dim / (g.h * g.h);
                    step[k][n] = prob.safety / std::max<real>(rate, 1e-12);
                    resid_sup = std::max(resid_sup, std::abs(rd));
                }
        }
        if (resid_sup < prob.tol * (1 + std::abs(prob.mu))) break;

        for (int k = 0; k < m; ++k)
            for (std::size_t n = 0; n < nodes; ++n)
                if (role[n] == free_node) sol.comp[k][n] -= step[k][n] * resid[k][n];
    }

    MetricSolveReport rep;
    rep.grid = g;
    rep.slope = a;
    rep.exclusion_radius = rho;
    rep.residual = resid_sup;
    rep.iters = it;
    rep.boundary_note = "zero data on the exclusion set (corrector offset omitted)";
    rep.measurement_radius = 0.8 * prob.domain_radius;
    real clearance = std::numeric_limits<real>::infinity(), lo = 0, lip = 0;
    for (int k = 0; k < m; ++k) {
        one_sided_gradients(sol.comp[k], g, grads[k]);
        for (std::size_t n = 0; n < nodes; ++n) {
            lo = std::min(lo, sol.comp[k][n]);
            if (role[n] == free_node && dist[n] <= rep.measurement_radius) {
                clearance = std::min(clearance, a * (dist[n] + 1) - sol.comp[k][n]);
                for (int d = 0; d < g.dim; ++d)
                    lip = std::max({lip, std::abs(grads[k].minus[d][n]),
                                    std::abs(grads[k].plus[d][n])});
            }
        }
    }
    rep.barrier_clearance = clearance;
    rep.min_value = lo;
    rep.lipschitz = lip;
    rep.m = std::move(sol);
    return rep;
}

//============================================================================
// Homogenized metric
//============================================================================

struct HomogenizedMetricEstimate {
    Point p{0, 0};
    real r = 0;
    real mu = 0;
    std::vector<Point> directions;
    std::vector<real> ts;
    std::vector<std::vector<real>> ratio;       // [dir][t] = m(x + t e)/t, component 1
    std::vector<std::vector<real>> cross_disc;  // [dir][t] = max_k |m_k - m_1|(x + t e)/t
    std::vector<real> M;                        // fitted limit per direction
    std::vector<real> fit_residual;             // rms of the 1/t fit
    MetricSolveReport solve;                    // the underlying solution
};

// One metric solve sized to cover max(ts) in every requested direction, then
// ratios m(t e)/t and a linear fit in 1/t per direction:
// m(te)/t = M + b/t captures the O(1) boundary-layer offset near D.
inline HomogenizedMetricEstimate estimate_M(const MetricProblem& base,
                                            const std::vector<Point>& directions,
                                            const std::vector<real>& ts) {
    if (directions.empty() || ts.empty())
        throw InvalidSpec("estimate_M: needs at least one direction and one t");
    for (real t : ts)
        if (!(t > 0)) throw InvalidSpec("estimate_M: t values must be positive");
    MetricProblem prob = base;
    real tmax = *std::max_element(ts.begin(), ts.end());
    prob.domain_radius = std::max(prob.domain_radius, 1.5 * tmax);

    HomogenizedMetricEstimate est;
    est.p = prob.p;
    est.r = prob.r;
    est.mu = prob.mu;
    est.directions = directions;
    est.ts = ts;
    est.solve = solve_metric(prob);
    const int m = prob.env.components();

    for (const Point& e : directions) {
        std::vector<real> ratios, cross;
        for (real t : ts) {
            Point y{prob.exclusion[0] + t * e[0],
                    prob.env.dim() == 2 ? prob.exclusion[1] + t * e[1] : 0};
            real v0 = metric_value(est.solve, y, 0);
            ratios.push_back(v0 / t);
            real cd = 0;
            for (int k = 1; k < m; ++k)
                cd = std::max(cd, std::abs(metric_value(est.solve, y, k) - v0) / t);
            cross.push_back(cd);
        }
        // least squares for ratio = M + b/t
        real n = static_cast<real>(ts.size()), s1 = 0, s2 = 0, t0 = 0, t1 = 0;
        for (std::size_t i = 0; i < ts.size(); ++i) {
            real x = 1.0 / ts[i];
            s1 += x;
            s2 += x * x;
            t0 += ratios[i];
            t1 += x * ratios[i];
        }
        real det = n * s2 - s1 * s1;
        real M, rms = 0;
        if (ts.size() == 1 || std::abs(det) < 1e-300) {
            M = ratios.back();
        } else {
            M = (s2 * t0 - s1 * t1) / det;
            real b = (n * t1 - s1 * t0) / det;
            for (std::size_t i = 0; i < ts.size(); ++i)
                rms += sqr(M + b / ts[i] - ratios[i]);
            rms = std::sqrt(rms / n);
        }
        est.ratio.push_back(std::move(ratios));
        est.cross_disc.push_back(std::move(cross));
        est.M.push_back(M);
        est.fit_residual.push_back(rms);
    }
    return est;
}

struct MetricEnsemble {
    std::vector<std::uint64_t> seeds;
    std::vector<HomogenizedMetricEstimate> per_seed;
    std::vector<std::vector<real>> spread;  // [dir][t] = max-min of ratio across seeds
    std::vector<real> mean_M;               // per direction
};

// Independent realizations of the same environment law; the across-seed
// spread of m(t e)/t at fixed t shrinks as t grows (spatial averaging does
// the ensemble's work). Seeds are independent tasks under the worker budget.
inline MetricEnsemble estimate_M_ensemble(const MetricProblem& base,
                                          const EnvironmentSpec& env_spec,
                                          const std::vector<std::uint64_t>& seeds,
                                          const std::vector<Point>& directions,
                                          const std::vector<real>& ts, int workers = 1) {
    if (seeds.empty()) throw InvalidSpec("estimate_M_ensemble: needs at least one seed");
    MetricEnsemble ens;
    ens.seeds = seeds;
    ens.per_seed.resize(seeds.size());
    parallel_for(seeds.size(), workers, [&](std::size_t si) {
        MetricProblem prob = base;
        prob.env = realize(env_spec, seeds[si]);
        ens.per_seed[si] = estimate_M(prob, directions, ts);
    });
    for (std::size_t d = 0; d < directions.size(); ++d) {
        std::vector<real> sp;
        for (std::size_t ti = 0; ti < ts.size(); ++ti) {
            real lo = ens.per_seed[0].ratio[d][ti], hi = lo;
            for (const auto& est : ens.per_seed) {
                lo = std::min(lo, est.ratio[d][ti]);
                hi = std::max(hi, est.ratio[d][ti]);
            }
            sp.push_back(hi - lo);
        }
        ens.spread.push_back(std::move(sp));
        real mean = 0;
        for (const auto& est : ens.per_seed) mean += est.M[d];
        ens.mean_M.push_back(mean / static_cast<real>(seeds.size()));
    }
    return ens;
}

//============================================================================
// Support function of the effective sublevel set
//============================================================================

// sup { q . y : Hbar(p + q, r) <= mu } from a table. One-dimensional tables
// use exact piecewise-linear crossings; two-dimensional tables subsample
// each cell of the bilinear interpolant. Throws TableRange when the sublevel
// set touches the table boundary (the axes are too narrow to decide).
inline real support_function(const EffectiveHamiltonianTable& tab, Point p, real r, real mu,
                             Point y) {
    auto guard = [&](real edge_value, const char* which) {
        if (edge_value <= mu)
            throw TableRange(std::string("support_function: sublevel set reaches the ") + which +
                             " edge of the table; rebuild with a wider p axis");
    };
    if (tab.pdim == 1) {
        std::vector<real> vals(tab.p1.size());
        for (std::size_t i = 0; i < tab.p1.size(); ++i)
            vals[i] = tab.eval({tab.p1[i], 0}, r);
        guard(vals.front(), "left");
        guard(vals.back(), "right");
        real qlo = 0, qhi = 0;
        bool found = false;
        for (std::size_t i = 0; i + 1 < tab.p1.size(); ++i) {
            real v0 = vals[i], v1 = vals[i + 1];
            real x0 = tab.p1[i], x1 = tab.p1[i + 1];
            if (v0 > mu && v1 > mu) continue;
            // entry and exit points of the sublevel set within this segment
            real lo = v0 <= mu ? x0 : x0 + (mu - v0) / (v1 - v0) * (x1 - x0);
            real hi = v1 <= mu ? x1 : x0 + (mu - v0) / (v1 - v0) * (x1 - x0);
            if (!found) {
                qlo = lo;
                qhi = hi;
                found = true;
            } else {
                qlo = std::min(qlo, lo);
                qhi = std::max(qhi, hi);
            }
        }
        if (!found)
            throw TableRange("support_function: sublevel set is empty at this mu");
        return std::max((qlo - p[0]) * y[0], (qhi - p[0]) * y[0]);
    }

    // two dimensions: subsampled bilinear interpolant
    for (std::size_t i = 0; i < tab.p1.size(); ++i) {
        guard(tab.eval({tab.p1[i], tab.p2.front()}, r), "p2-low");
        guard(tab.eval({tab.p1[i], tab.p2.back()}, r), "p2-high");
    }
    for (std::size_t j = 0; j < tab.p2.size(); ++j) {
        guard(tab.eval({tab.p1.front(), tab.p2[j]}, r), "p1-low");
        guard(tab.eval({tab.p1.back(), tab.p2[j]}, r), "p1-high");
    }
    const int sub = 16;
    real best = -std::numeric_limits<real>::infinity();
    bool found = false;
    for (std::size_t i = 0; i + 1 < tab.p1.size(); ++i)
        for (std::size_t j = 0; j + 1 < tab.p2.size(); ++j)
            for (int a = 0; a <= sub; ++a)
                for (int b = 0; b <= sub; ++b) {
                    real u1 = tab.p1[i] + (tab.p1[i + 1] - tab.p1[i]) * a / sub;
                    real u2 = tab.p2[j] + (tab.p2[j + 1] - tab.p2[j]) * b / sub;
                    if (tab.eval({u1, u2}, r) <= mu) {
                        found = true;
                        best = std::max(best, (u1 - p[0]) * y[0] + (u2 - p[1]) * y[1]);
                    }
                }
    if (!found) throw TableRange("support_function: sublevel set is empty at this mu");
    return best;
}

struct MetricConsistency {
    std::vector<real> fitted;       // M per direction
    std::vector<real> support;      // table support function per direction
    std::vector<real> rel_discrepancy;
    real tolerance = 0;
    bool pass = false;
};

// Compares the fitted homogenized metric against the support function of
// the table sublevel set, direction by direction.
inline MetricConsistency metric_consistency(const HomogenizedMetricEstimate& est,
                                            const EffectiveHamiltonianTable& tab,
                                            real tolerance) {
    MetricConsistency out;
    out.tolerance = tolerance;
    out.pass = true;
    for (std::size_t d = 0; d < est.directions.size(); ++d) {
        real sf = support_function(tab, est.p, est.r, est.mu, est.directions[d]);
        real rel = std::abs(est.M[d] - sf) / std::max<real>(std::abs(sf), 1e-12);
        out.fitted.push_back(est.M[d]);
        out.support.push_back(sf);
        out.rel_discrepancy.push_back(rel);
        if (!(rel <= tolerance)) out.pass = false;
    }
    return out;
}

}  // namespace hjhom
