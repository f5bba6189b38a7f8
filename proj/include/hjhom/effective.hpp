#pragma once
// The discounted cell problem and everything built on it: the vanishing
// discount estimate of the effective Hamiltonian, tabulation over (p, r),
// and structural property checks on finished tables.
//
// For a frozen slope p and value level r the solver relaxes
//
//   delta v_k - tr(A_k(y) D^2 v_k) + H_k(p + Dv_k, rhat, v_k - v_j, y) = 0
//
// to steady state on the periodic torus and reads off -delta v_1(0). Note
// the coupling argument is the plain difference v_k - v_j here; the 1/eps
// scaling belongs to the time-dependent system, not the cell problem.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hjhom/common.hpp"
#include "hjhom/environment.hpp"
#include "hjhom/grid.hpp"
#include "hjhom/model.hpp"
#include "hjhom/numerics.hpp"

namespace hjhom {

//============================================================================
// Cell problem
//============================================================================

struct CellProblem {
    HamiltonianModel model;
    EnvironmentRealization env;
    Point p{0, 0};
    real r = 0;        // frozen value slot rhat = (r, ..., r)
    real delta = 0.1;  // discount, > 0
    real h = 1.0 / 64;
    real safety = 0.4;
    real tol = 1e-8;              // residual factor; see solve_cell
    real flatness_window = 1.0;   // physical window R; radius used is min(R/delta, L/2)
    std::size_t max_iters = 80'000'000;
    const VectorGridField* warm_start = nullptr;
};

struct SolveReport {
    VectorGridField v;
    real lambda = 0;     // -delta * v_1(0)
    real residual = 0;   // final sup-norm scheme residual
    std::size_t iters = 0;
    real flatness = 0;   // sup over the window of |delta v_1(y) - delta v_1(0)|
    real window_lo = 0, window_hi = 0;  // range of -delta v_1 over the window
    real window_radius = 0;
    bool window_saturated = false;  // window clipped to the torus half-period
    real cross_discrepancy = 0;     // delta * max_k sup |v_k - v_1|
};

namespace detail {

// Coefficients sampled once per node so the relaxation loop never touches
// the environment's field machinery.
struct SampledMedium {
    int m = 0;
    std::vector<MediumSample> at;  // [k * nodes + node]
    bool any_diffusion = false;

    const MediumSample& operator()(int k, std::size_t node) const {
        return at[static_cast<std::size_t>(k) * (at.size() / m) + node];
    }
};

inline SampledMedium sample_medium(const EnvironmentRealization& env, const Grid& g,
                                   real micro_scale = 1.0) {
    SampledMedium med;
    med.m = env.components();
    med.at.resize(static_cast<std::size_t>(med.m) * g.size());
    for (int k = 0; k < med.m; ++k)
        for (int j = 0; j < g.npts[1]; ++j)
            for (int i = 0; i < g.npts[0]; ++i) {
                Point x = g.point(i, j);
                Point y{x[0] / micro_scale, x[1] / micro_scale};
                MediumSample s = sample(env, k, y);
                med.at[static_cast<std::size_t>(k) * g.size() + g.index(i, j)] = s;
                if (s.A.xx != 0 || s.A.xy != 0 || s.A.yy != 0) med.any_diffusion = true;
            }
    return med;
}

// tr(A D^2 u) from a presampled diffusion matrix (periodic grids).
inline real diffusion_at(const SymMat& A, const std::vector<real>& u, const Grid& g, int i,
                         int j) {
    if (A.xx == 0 && A.xy == 0 && A.yy == 0) return 0;
    real h2 = g.h * g.h;
    auto at = [&](int a, int b) {
        return u[g.index(g.wrap(a, 0), g.dim == 2 ? g.wrap(b, 1) : 0)];
    };
    real c = u[g.index(i, j)];
    real val = A.xx * (at(i + 1, j) - 2 * c + at(i - 1, j)) / h2;
    if (g.dim == 2) {
        val += A.yy * (at(i, j + 1) - 2 * c + at(i, j - 1)) / h2;
        if (A.xy > 0)
            val += A.xy * (2 * c + at(i + 1, j + 1) + at(i - 1, j - 1) - at(i + 1, j) -
                           at(i - 1, j) - at(i, j + 1) - at(i, j - 1)) /
                   h2;
        else if (A.xy < 0)
            val -= A.xy * (2 * c + at(i + 1, j - 1) + at(i - 1, j + 1) - at(i + 1, j) -
                           at(i - 1, j) - at(i, j + 1) - at(i, j - 1)) /
                   h2;
    }
    return val;
}

}  // namespace detail

// Pseudo-time relaxation with the Lax-Friedrichs Hamiltonian. Two
// accelerations keep small discounts affordable: warm starts passed in by
// the caller, and an exact mean shift every few sweeps (adding a constant c
// to every component changes the residual by exactly delta*c, so the spatial
// mean of the residual can be zeroed in closed form without disturbing the
// fixed point). Stops when the sup-norm scheme residual drops below
// tol * max(delta, 1) * (1 + |lambda|).
inline SolveReport solve_cell(const CellProblem& prob) {
    if (!(prob.delta > 0)) throw InvalidSpec("solve_cell: delta must be positive");
    const EnvironmentRealization& env = prob.env;
    const HamiltonianModel& md = prob.model;
    {
        auto errs = validate(md, env.components());
        if (!errs.empty()) throw InvalidSpec("solve_cell: " + errs.front());
    }
    Grid g = make_periodic_grid(env.dim(), env.side(), prob.h);
    const int m = env.components();
    const std::size_t nodes = g.size();

    VectorGridField v = VectorGridField::zeros(g, m);
    if (prob.warm_start) {
        if (prob.warm_start->grid.size() != nodes ||
            prob.warm_start->components() != m)
            throw InvalidSpec("solve_cell: warm start shaped for a different grid");
        v = *prob.warm_start;
    }

    detail::SampledMedium med = detail::sample_medium(env, g);
    std::vector<real> rhat(m, prob.r);

    // flatness window: nodes within min(R/delta, L/2) of the origin (torus metric)
    real want = prob.flatness_window / prob.delta;
    real radius = std::min(want, env.side() / 2);
    bool saturated_window = want > env.side() / 2;
    std::vector<std::size_t> window;
    for (int j = 0; j < g.npts[1]; ++j)
        for (int i = 0; i < g.npts[0]; ++i) {
            Point y = g.point(i, j);
            real dx = std::min(std::abs(y[0]), env.side() - std::abs(y[0]));
            real dy = g.dim == 2 ? std::min(std::abs(y[1]), env.side() - std::abs(y[1])) : 0;
            if (std::sqrt(dx * dx + dy * dy) <= radius + 1e-12)
                window.push_back(g.index(i, j));
        }

    const real p_base = std::sqrt(sqr(prob.p[0]) + (g.dim == 2 ? sqr(prob.p[1]) : 0));
    DissipationBounds bounds = estimate_bounds(md, env, p_base + 1.0);
    real lambda = -prob.delta * v.comp[0][0];
    std::vector<std::vector<real>> resid(m, std::vector<real>(nodes));
    std::vector<OneSidedGradients> grads(m);
    std::array<real, 4> sdiff{};
    std::size_t it = 0;
    const int shift_every = 25;

    for (;; ++it) {
        if (it >= prob.max_iters)
            throw SolverFailure("solve_cell: residual still " + fmt(sup_abs(resid[0])) +
                                " after " + std::to_string(it) + " iterations (delta=" +
                                fmt(prob.delta) + ", p=" + fmt(prob.p[0]) + ")");

        // one gradient pass per component; alpha tracks the current gradient
        // range with a margin so the scheme stays monotone as v develops
        real qmax = p_base;
        for (int k = 0; k < m; ++k) {
            one_sided_gradients(v.comp[k], g, grads[k]);
            for (int d = 0; d < g.dim; ++d)
                for (std::size_t n = 0; n < nodes; ++n) {
                    real q = std::abs(prob.p[d] + 0.5 * (grads[k].minus[d][n] + grads[k].plus[d][n])) +
                             0.5 * std::abs(grads[k].plus[d][n] - grads[k].minus[d][n]);
                    qmax = std::max(qmax, q);
                }
        }
        DissipationBounds cur = estimate_bounds(md, env, qmax);
        cur.Lambda = bounds.Lambda;

        real srange = 0;
        for (int k = 0; k < m; ++k)
            for (int i = k + 1; i < m; ++i)
                srange = std::max(srange, sup_abs_diff(v.comp[k], v.comp[i]));

        real resid_sup = 0, resid_mean = 0;
        for (int k = 0; k < m; ++k) {
            const OneSidedGradients& grad = grads[k];
            for (int j = 0; j < g.npts[1]; ++j)
                for (int i = 0; i < g.npts[0]; ++i) {
                    std::size_t n = g.index(i, j);
                    const MediumSample& ms = med(k, n);
                    for (int c = 0; c < m; ++c)
                        sdiff[c] = c == k ? 0 : v.comp[k][n] - v.comp[c][n];
                    std::array<real, 2> dm{prob.p[0] + grad.minus[0][n],
                                           g.dim == 2 ? prob.p[1] + grad.minus[1][n] : 0};
                    std::array<real, 2> dp{prob.p[0] + grad.plus[0][n],
                                           g.dim == 2 ? prob.p[1] + grad.plus[1][n] : 0};
                    Point q{0.5 * (dm[0] + dp[0]), 0.5 * (dm[1] + dp[1])};
                    real H = evaluate_at(md, g.dim, m, ms, k, q, rhat,
                                         std::span<const real>(sdiff.data(), m));
                    for (int d = 0; d < g.dim; ++d)
                        H -= 0.5 * cur.alpha[d] * (dp[d] - dm[d]);
                    real diff = med.any_diffusion ? detail::diffusion_at(ms.A, v.comp[k], g, i, j)
                                                  : 0;
                    real rd = prob.delta * v.comp[k][n] - diff + H;
                    resid[k][n] = rd;
                    resid_sup = std::max(resid_sup, std::abs(rd));
                    resid_mean += rd;
                }
        }
        resid_mean /= static_cast<real>(m) * nodes;
        lambda = -prob.delta * v.comp[0][0];

        if (resid_sup < prob.tol * std::max<real>(prob.delta, 1) * (1 + std::abs(lambda))) break;

        if (it % shift_every == 0) {
            real c = resid_mean / prob.delta;
            for (int k = 0; k < m; ++k)
                for (std::size_t n = 0; n < nodes; ++n) v.comp[k][n] -= c;
        } else {
            real coup_lip = 0;
            if (md.kind == ModelKind::quadratic_coupling && m >= 2)
                coup_lip = 2 * m * env.coupling_sup() *
                           *std::max_element(md.coupling_weight.begin(), md.coupling_weight.end()) *
                           srange;
            else if (md.kind == ModelKind::exponential_coupling && m >= 2)
                coup_lip = m * env.coupling_sup() *
                           *std::max_element(md.coupling_weight.begin(), md.coupling_weight.end()) *
                           std::exp(std::min(srange, md.exp_clamp));
            real rate = prob.delta + coup_lip;
            for (int d = 0; d < g.dim; ++d) rate += cur.alpha[d] / g.h;
            rate += 2 * cur.Lambda * g.dim / (g.h * g.h);
            real dt = prob.safety / rate;
            for (int k = 0; k < m; ++k)
                for (std::size_t n = 0; n < nodes; ++n) v.comp[k][n] -= dt * resid[k][n];
        }
    }

    SolveReport rep;
    rep.lambda = lambda;
    rep.residual = 0;
    for (int k = 0; k < m; ++k) rep.residual = std::max(rep.residual, sup_abs(resid[k]));
    rep.iters = it;
    rep.window_radius = radius;
    rep.window_saturated = saturated_window;
    real lo = lambda, hi = lambda, flat = 0;
    for (std::size_t n : window) {
        real val = -prob.delta * v.comp[0][n];
        lo = std::min(lo, val);
        hi = std::max(hi, val);
        flat = std::max(flat, std::abs(val - lambda));
    }
    rep.window_lo = lo;
    rep.window_hi = hi;
    rep.flatness = flat;
    for (int k = 1; k < m; ++k)
        rep.cross_discrepancy =
            std::max(rep.cross_discrepancy, prob.delta * sup_abs_diff(v.comp[k], v.comp[0]));
    rep.v = std::move(v);
    return rep;
}

//============================================================================
// Vanishing-discount estimate
//============================================================================

struct HbarSchedule {
    real delta0 = 0.2;
    int halvings = 4;
    real h = 1.0 / 64;
    real safety = 0.4;
    real tol = 1e-8;
    real flatness_window = 1.0;
    std::size_t max_iters = 80'000'000;
};

struct HbarEstimate {
    real hbar = 0;
    real fit_a = 0, fit_b = 1, fit_rms = 0;  // lambda(delta) ~ hbar + a delta^b
    std::vector<real> deltas, lambdas, flatness;
    std::vector<real> window_lo, window_hi;
    real uncertainty = 0;
    bool low_confidence = false;
    std::size_t iters = 0;
    real cross_discrepancy = 0;  // worst over the schedule
};

// Runs the discount schedule delta0, delta0/2, ... with warm starts, then
// fits lambda(delta) = hbar + a delta^b over b in [0.5, 2].
inline HbarEstimate estimate_Hbar(const HamiltonianModel& md, const EnvironmentRealization& env,
                                  Point p, real r, const HbarSchedule& sch) {
    if (sch.halvings < 0) throw InvalidSpec("estimate_Hbar: halvings must be >= 0");
    HbarEstimate est;
    CellProblem prob;
    prob.model = md;
    prob.env = env;
    prob.p = p;
    prob.r = r;
    prob.h = sch.h;
    prob.safety = sch.safety;
    prob.tol = sch.tol;
    prob.flatness_window = sch.flatness_window;
    prob.max_iters = sch.max_iters;

    VectorGridField carry;
    real prev_delta = 0, prev_lambda = 0;
    for (int j = 0; j <= sch.halvings; ++j) {
        prob.delta = sch.delta0 * std::pow(2.0, -j);
        if (j > 0) {
            // v ~ -hbar/delta + w: move the constant mode to the new discount
            real shift = -prev_lambda * (1.0 / prob.delta - 1.0 / prev_delta);
            for (auto& comp : carry.comp)
                for (auto& x : comp) x += shift;
            prob.warm_start = &carry;
        }
        SolveReport rep = solve_cell(prob);
        est.deltas.push_back(prob.delta);
        est.lambdas.push_back(rep.lambda);
        est.flatness.push_back(rep.flatness);
        est.window_lo.push_back(rep.window_lo);
        est.window_hi.push_back(rep.window_hi);
        est.iters += rep.iters;
        est.cross_discrepancy = std::max(est.cross_discrepancy, rep.cross_discrepancy);
        prev_delta = prob.delta;
        prev_lambda = rep.lambda;
        carry = std::move(rep.v);
        prob.warm_start = nullptr;
    }

    const std::size_t n = est.lambdas.size();
    if (n == 1) {
        est.hbar = est.lambdas[0];
        est.fit_a = 0;
        est.fit_b = 0;
        est.low_confidence = true;
        est.uncertainty = std::abs(est.lambdas[0]) * 0.5 + 1;
        return est;
    }
    real best_rms = std::numeric_limits<real>::infinity();
    for (int bi = 0; bi <= 150; ++bi) {
        real b = 0.5 + 1.5 * bi / 150.0;
        // least squares for (hbar, a) at fixed b
        real s0 = static_cast<real>(n), s1 = 0, s2 = 0, t0 = 0, t1 = 0;
        for (std::size_t i = 0; i < n; ++i) {
            real x = std::pow(est.deltas[i], b);
            s1 += x;
            s2 += x * x;
            t0 += est.lambdas[i];
            t1 += x * est.lambdas[i];
        }
        real det = s0 * s2 - s1 * s1;
        if (std::abs(det) < 1e-300) continue;
        real hb = (s2 * t0 - s1 * t1) / det;
        real a = (s0 * t1 - s1 * t0) / det;
        real rms = 0;
        for (std::size_t i = 0; i < n; ++i)
            rms += sqr(hb + a * std::pow(est.deltas[i], b) - est.lambdas[i]);
        rms = std::sqrt(rms / n);
        if (rms < best_rms) {
            best_rms = rms;
            est.hbar = hb;
            est.fit_a = a;
            est.fit_b = b;
        }
    }
    est.fit_rms = best_rms;
    est.uncertainty = best_rms + 0.25 * std::abs(est.lambdas.back() - est.hbar);
    real scale = 1 + std::abs(est.hbar);
    est.low_confidence =
        best_rms > 0.02 * scale || std::abs(est.lambdas.back() - est.hbar) > 0.2 * scale;
    return est;
}

//============================================================================
// Tables
//============================================================================

struct TableEntryDiagnostics {
    Point p{0, 0};
    real r = 0;
    HbarEstimate est;
};

struct EffectiveHamiltonianTable {
    int pdim = 1;
    std::vector<real> p1, p2, r;  // strictly increasing axes; p2 empty unless pdim == 2
    std::vector<real> value;       // [(ip2 * |p1| + ip1) * |r| + ir]
    std::vector<real> uncertainty;
    std::string model_digest;
    std::uint64_t env_seed = 0;
    real delta0 = 0;
    int halvings = 0;
    real h = 0;
    std::vector<TableEntryDiagnostics> entries;

    std::size_t idx(std::size_t i1, std::size_t i2, std::size_t ir) const {
        return (i2 * p1.size() + i1) * r.size() + ir;
    }

    // Multilinear interpolation; queries must stay inside the axes. A
    // single-node axis means the tabulated value does not depend on that
    // variable (an r axis of {0} for a model with beta = 0), so any query
    // along it is accepted.
    real eval(Point p, real rv) const {
        auto locate = [](const std::vector<real>& ax, real x, const char* name) {
            if (ax.size() == 1) return std::pair<std::size_t, real>{0, 0.0};
            if (x < ax.front() - 1e-12 || x > ax.back() + 1e-12)
                throw TableRange(std::string("table query ") + name + "=" + fmt(x) +
                                 " outside [" + fmt(ax.front()) + ", " + fmt(ax.back()) +
                                 "]; rebuild the table with a wider " + name + " axis");
            auto it = std::upper_bound(ax.begin(), ax.end(), x);
            std::size_t i = std::min<std::size_t>(
                ax.size() - 2, static_cast<std::size_t>(std::max<std::ptrdiff_t>(
                                   0, (it - ax.begin()) - 1)));
            return std::pair<std::size_t, real>{i, (x - ax[i]) / (ax[i + 1] - ax[i])};
        };
        auto [i1, t1] = locate(p1, p[0], "p1");
        auto [ir, tr] = locate(r, rv, "r");
        auto line = [&](std::size_t a, std::size_t b) {
            real v0 = value[idx(a, b, ir)];
            real v1 = r.size() > 1 ? value[idx(a, b, ir + 1)] : v0;
            return v0 * (1 - tr) + v1 * tr;
        };
        if (pdim == 1) {
            real v0 = line(i1, 0);
            real v1 = p1.size() > 1 ? line(i1 + 1, 0) : v0;
            return v0 * (1 - t1) + v1 * t1;
        }
        auto [i2, t2] = locate(p2, p[1], "p2");
        auto plane = [&](std::size_t b) {
            real v0 = line(i1, b);
            real v1 = p1.size() > 1 ? line(i1 + 1, b) : v0;
            return v0 * (1 - t1) + v1 * t1;
        };
        real v0 = plane(i2);
        real v1 = p2.size() > 1 ? plane(i2 + 1) : v0;
        return v0 * (1 - t2) + v1 * t2;
    }

    // Worst finite-difference slopes, used for scheme bounds on table-driven
    // evolutions.
    real lipschitz_p() const {
        real lip = 0;
        auto scan = [&](const std::vector<real>& ax, bool first_axis) {
            for (std::size_t i2 = 0; i2 < std::max<std::size_t>(1, p2.size()); ++i2)
                for (std::size_t i1 = 0; i1 < p1.size(); ++i1)
                    for (std::size_t ir = 0; ir < r.size(); ++ir) {
                        std::size_t along = first_axis ? i1 : i2;
                        if (along + 1 >= ax.size()) continue;
                        std::size_t a = idx(i1, i2, ir);
                        std::size_t b = first_axis ? idx(i1 + 1, i2, ir) : idx(i1, i2 + 1, ir);
                        lip = std::max(lip, std::abs(value[b] - value[a]) /
                                                (ax[along + 1] - ax[along]));
                    }
        };
        scan(p1, true);
        if (pdim == 2) scan(p2, false);
        return lip;
    }

    real lipschitz_r() const {
        if (r.size() < 2) return 0;
        real lip = 0;
        for (std::size_t i2 = 0; i2 < std::max<std::size_t>(1, p2.size()); ++i2)
            for (std::size_t i1 = 0; i1 < p1.size(); ++i1)
                for (std::size_t ir = 0; ir + 1 < r.size(); ++ir)
                    lip = std::max(lip, std::abs(value[idx(i1, i2, ir + 1)] -
                                                 value[idx(i1, i2, ir)]) /
                                            (r[ir + 1] - r[ir]));
        return lip;
    }
};

struct TableAxes {
    std::vector<real> p1, p2, r{0.0};
};

inline std::vector<real> linspace(real lo, real hi, int count) {
    if (count < 1) throw InvalidSpec("linspace: count must be >= 1");
    std::vector<real> v(count);
    if (count == 1) {
        v[0] = lo;
        return v;
    }
    for (int i = 0; i < count; ++i) v[i] = lo + (hi - lo) * i / (count - 1);
    return v;
}

namespace detail {

inline void check_axis(const std::vector<real>& ax, const char* name,
                       std::vector<std::string>& errs) {
    if (ax.empty()) {
        errs.push_back(std::string("table: axis ") + name + " is empty");
        return;
    }
    for (std::size_t i = 0; i + 1 < ax.size(); ++i)
        if (!(ax[i] < ax[i + 1]))
            errs.push_back(std::string("table: axis ") + name + " must be strictly increasing");
}

}  // namespace detail

// One estimate_Hbar run per (p, r) node. Entries are independent, so they
// are distributed over the worker budget; results land in index order and
// the output does not depend on scheduling.
inline EffectiveHamiltonianTable build_table(const HamiltonianModel& md,
                                             const EnvironmentRealization& env,
                                             const TableAxes& axes, const HbarSchedule& sch,
                                             int workers = 1) {
    std::vector<std::string> errs = validate(md, env.components());
    detail::check_axis(axes.p1, "p1", errs);
    detail::check_axis(axes.r, "r", errs);
    if (env.dim() == 2)
        detail::check_axis(axes.p2, "p2", errs);
    else if (!axes.p2.empty())
        errs.push_back("table: p2 axis given for a one-dimensional environment");
    if (!errs.empty()) {
        std::string msg = "build_table:";
        for (const auto& e : errs) msg += "\n  " + e;
        throw InvalidSpec(msg);
    }

    EffectiveHamiltonianTable tab;
    tab.pdim = env.dim();
    tab.p1 = axes.p1;
    tab.p2 = env.dim() == 2 ? axes.p2 : std::vector<real>{};
    tab.r = axes.r;
    tab.model_digest = model_digest(md);
    tab.env_seed = env.seed;
    tab.delta0 = sch.delta0;
    tab.halvings = sch.halvings;
    tab.h = sch.h;
    std::size_t n2 = std::max<std::size_t>(1, tab.p2.size());
    std::size_t total = tab.p1.size() * n2 * tab.r.size();
    tab.value.assign(total, 0.0);
    tab.uncertainty.assign(total, 0.0);
    tab.entries.resize(total);

    parallel_for(total, workers, [&](std::size_t t) {
        std::size_t ir = t % tab.r.size();
        std::size_t ip = t / tab.r.size();
        std::size_t i1 = ip % tab.p1.size();
        std::size_t i2 = ip / tab.p1.size();
        Point p{tab.p1[i1], tab.pdim == 2 ? tab.p2[i2] : 0};
        HbarEstimate est = estimate_Hbar(md, env, p, tab.r[ir], sch);
        std::size_t id = tab.idx(i1, i2, ir);
        tab.value[id] = est.hbar;
        tab.uncertainty[id] = est.uncertainty;
        tab.entries[id] = {p, tab.r[ir], std::move(est)};
    });
    return tab;
}

//============================================================================
// Structural checks on finished tables
//============================================================================

struct PropertyCheck {
    std::string name;
    bool holds = false;
    real worst = 0;     // worst signed violation (positive = bad)
    std::string detail;
};

struct TablePropertyReport {
    std::vector<PropertyCheck> checks;
    bool all_hold() const {
        for (const auto& c : checks)
            if (!c.holds) return false;
        return true;
    }
    const PropertyCheck* find(const std::string& name) const {
        for (const auto& c : checks)
            if (c.name == name) return &c;
        return nullptr;
    }
};

// Convexity in p, monotonicity in r, coercivity in p, and a fitted local
// Lipschitz constant. Estimation noise is absorbed through the stored
// per-entry uncertainties; exact tables (constant media) are checked at
// tolerance 1e-6 / 1e-9.
inline TablePropertyReport check_effective_properties(const EffectiveHamiltonianTable& tab,
                                                      const HamiltonianModel& md,
                                                      const EnvironmentRealization& env) {
    TablePropertyReport rep;
    std::size_t n1 = tab.p1.size(), n2 = std::max<std::size_t>(1, tab.p2.size()),
                nr = tab.r.size();

    // midpoint convexity along p lines (both axes and, in 2-D, the diagonals)
    {
        real worst = 0;
        std::string where;
        auto triple = [&](std::size_t a, std::size_t b, std::size_t c, real pa, real pc) {
            real tol = 1e-6 + tab.uncertainty[a] + 2 * tab.uncertainty[b] + tab.uncertainty[c];
            real defect = tab.value[b] - 0.5 * (tab.value[a] + tab.value[c]);
            if (defect - tol > worst) {
                worst = defect - tol;
                where = "p=" + fmt(pa) + ".." + fmt(pc);
            }
        };
        for (std::size_t ir = 0; ir < nr; ++ir) {
            for (std::size_t i2 = 0; i2 < n2; ++i2)
                for (std::size_t i1 = 0; i1 + 2 < n1; ++i1) {
                    if (std::abs((tab.p1[i1 + 2] - tab.p1[i1 + 1]) -
                                 (tab.p1[i1 + 1] - tab.p1[i1])) > 1e-9)
                        continue;  // midpoint test needs equal spacing
                    triple(tab.idx(i1, i2, ir), tab.idx(i1 + 1, i2, ir), tab.idx(i1 + 2, i2, ir),
                           tab.p1[i1], tab.p1[i1 + 2]);
                }
            if (tab.pdim == 2)
                for (std::size_t i1 = 0; i1 < n1; ++i1)
                    for (std::size_t i2 = 0; i2 + 2 < n2; ++i2) {
                        if (std::abs((tab.p2[i2 + 2] - tab.p2[i2 + 1]) -
                                     (tab.p2[i2 + 1] - tab.p2[i2])) > 1e-9)
                            continue;
                        triple(tab.idx(i1, i2, ir), tab.idx(i1, i2 + 1, ir),
                               tab.idx(i1, i2 + 2, ir), tab.p2[i2], tab.p2[i2 + 2]);
                    }
        }
        rep.checks.push_back({"p-convexity", worst <= 0, worst, where});
    }

    // nondecreasing in r
    {
        real worst = 0;
        std::string where;
        for (std::size_t i2 = 0; i2 < n2; ++i2)
            for (std::size_t i1 = 0; i1 < n1; ++i1)
                for (std::size_t ir = 0; ir + 1 < nr; ++ir) {
                    std::size_t a = tab.idx(i1, i2, ir), b = tab.idx(i1, i2, ir + 1);
                    real tol = 1e-9 + tab.uncertainty[a] + tab.uncertainty[b];
                    real drop = tab.value[a] - tab.value[b] - tol;
                    if (drop > worst) {
                        worst = drop;
                        where = "r=" + fmt(tab.r[ir]) + ".." + fmt(tab.r[ir + 1]);
                    }
                }
        rep.checks.push_back({"r-monotonicity", worst <= 0, worst, where});
    }

    // coercivity with the catalog constants at the table's r range
    {
        real C1 = *std::min_element(md.a.begin(), md.a.end());
        real rmax = std::max(std::abs(tab.r.front()), std::abs(tab.r.back()));
        real C3 = 0;
        for (int k = 0; k < md.components(); ++k)
            C3 = std::max(C3, pos(-md.potential_weight[k]) * env.potential_sup() +
                                  md.beta[k] * rmax);
        if (md.kind == ModelKind::quadratic_coupling && md.components() >= 2) {
            real wmin = *std::min_element(md.coupling_weight.begin(), md.coupling_weight.end());
            C3 += pos(wmin * env.coupling_inf()) / 4;
        }
        real worst = 0;
        std::string where;
        for (std::size_t i2 = 0; i2 < n2; ++i2)
            for (std::size_t i1 = 0; i1 < n1; ++i1)
                for (std::size_t ir = 0; ir < nr; ++ir) {
                    std::size_t id = tab.idx(i1, i2, ir);
                    real pn = std::sqrt(sqr(tab.p1[i1]) +
                                        (tab.pdim == 2 ? sqr(tab.p2[i2]) : 0));
                    real bound = std::numeric_limits<real>::infinity();
                    for (int k = 0; k < md.components(); ++k)
                        bound = std::min(bound, C1 * std::pow(pn, md.gamma[k]) - C3);
                    real gap = bound - tab.value[id] - tab.uncertainty[id] - 1e-9;
                    if (gap > worst) {
                        worst = gap;
                        where = "p1=" + fmt(tab.p1[i1]) + " r=" + fmt(tab.r[ir]);
                    }
                }
        rep.checks.push_back({"p-coercivity", worst <= 0, worst,
                              "C1=" + fmt(C1) + " C3=" + fmt(C3) +
                                  (where.empty() ? "" : " worst at " + where)});
    }

    // fitted local Lipschitz constant in the growth-weighted metric
    {
        real gmax = *std::max_element(md.gamma.begin(), md.gamma.end());
        real c = 0;
        for (std::size_t ir = 0; ir < nr; ++ir)
            for (std::size_t i2 = 0; i2 < n2; ++i2)
                for (std::size_t i1 = 0; i1 + 1 < n1; ++i1) {
                    real pa = std::abs(tab.p1[i1]), pb = std::abs(tab.p1[i1 + 1]);
                    real w = std::pow(1 + pa + pb, gmax - 1) * (tab.p1[i1 + 1] - tab.p1[i1]);
                    c = std::max(c, std::abs(tab.value[tab.idx(i1 + 1, i2, ir)] -
                                             tab.value[tab.idx(i1, i2, ir)]) /
                                        w);
                }
        rep.checks.push_back(
            {"p-lipschitz", std::isfinite(c), c, "fitted constant in the (1+|p|)^(gamma-1) metric"});
    }
    return rep;
}

}  // namespace hjhom
