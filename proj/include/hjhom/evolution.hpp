#pragma once
// Time-dependent solvers. The coupled system at microscopic scale eps,
//
//   d/dt u_k - eps tr(A_k(x/eps) D^2 u_k)
//            + H_k(Du_k, u, (u_k - u_j)/eps, x/eps) = 0,
//
// marches with the explicit monotone scheme on a macro torus, and the scalar
// effective equation
//
//   d/dt u + Hbar(Du, u) = 0
//
// marches with the same scheme driven by a tabulated Hbar. Both honor the
// explicit stability budget; the coupled run adds the coupling stiffness cap
// (the 1/eps^2 reaction is the stiff part, by design).

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hjhom/common.hpp"
#include "hjhom/effective.hpp"
#include "hjhom/environment.hpp"
#include "hjhom/grid.hpp"
#include "hjhom/model.hpp"
#include "hjhom/numerics.hpp"

namespace hjhom {

//============================================================================
// Coupled system
//============================================================================

struct EvolutionProblem {
    HamiltonianModel model;
    EnvironmentRealization env;
    real eps = 0.1;
    VectorGridField u0;  // periodic macro grid; extent a multiple of eps*side
    real T = 1.0;
    std::vector<real> snapshot_times;  // strictly increasing, within [0, T]
    real safety = 0.1;
    std::size_t max_steps = 200'000'000;
};

struct EvolutionHistoryEntry {
    real t = 0;
    real coupling = 0;  // max_{i,j} sup |u_i - u_j| / eps
    real sup = 0;       // max_k sup |u_k|
};

struct EvolutionResult {
    std::vector<VectorGridField> snapshots;      // time stamps set on each
    std::vector<EvolutionHistoryEntry> history;  // stride-subsampled
    real sup_bound = 0;   // max over the run of max_k sup |u_k|
    real dt_min = std::numeric_limits<real>::infinity();
    real dt_max = 0;
    std::size_t steps = 0;
    bool saturated = false;  // exponential coupling hit the clamp
};

namespace detail {

inline void check_snapshot_times(const std::vector<real>& ts, real T) {
    for (std::size_t i = 0; i < ts.size(); ++i) {
        if (ts[i] < -1e-12 || ts[i] > T + 1e-12)
            throw InvalidSpec("snapshot time " + fmt(ts[i]) + " outside [0, " + fmt(T) + "]");
        if (i > 0 && !(ts[i] > ts[i - 1]))
            throw InvalidSpec("snapshot times must be strictly increasing");
    }
}

// Keeps at most `cap` entries by doubling the recording stride.
struct HistoryRecorder {
    std::vector<EvolutionHistoryEntry> entries;
    std::size_t stride = 1, cap = 4096, countdown = 0;

    void push(const EvolutionHistoryEntry& e) {
        if (countdown > 0) {
            --countdown;
            return;
        }
        entries.push_back(e);
        if (entries.size() >= cap) {
            std::vector<EvolutionHistoryEntry> kept;
            kept.reserve(entries.size() / 2 + 1);
            for (std::size_t i = 0; i < entries.size(); i += 2) kept.push_back(entries[i]);
            entries = std::move(kept);
            stride *= 2;
        }
        countdown = stride - 1;
    }
};

// One explicit step of the coupled scheme, shared by the plain march and the
// lockstep pair march of the contraction check. The caller owns gradient
// buffers so two fields can be advanced under identical bounds and dt.
struct SystemStepper {
    const HamiltonianModel& md;
    const EnvironmentRealization& env;
    const Grid& g;
    real eps;
    SampledMedium med;
    real w_max, beta_max;
    int m;
    bool saturated = false;

    SystemStepper(const HamiltonianModel& md_, const EnvironmentRealization& env_,
                  const Grid& g_, real eps_)
        : md(md_),
          env(env_),
          g(g_),
          eps(eps_),
          med(sample_medium(env_, g_, eps_)),
          m(env_.components()) {
        w_max = m >= 2 ? *std::max_element(md.coupling_weight.begin(), md.coupling_weight.end())
                       : 0;
        beta_max = *std::max_element(md.beta.begin(), md.beta.end());
    }


    void gradients(const VectorGridField& u, std::vector<OneSidedGradients>& grads) const {
        grads.resize(m);
        for (int k = 0; k < m; ++k) one_sided_gradients(u.comp[k], g, grads[k]);
    }

    real qmax(const std::vector<OneSidedGradients>& grads) const {
        real q = 0;
        for (int k = 0; k < m; ++k)
            for (int d = 0; d < g.dim; ++d)
                for (std::size_t n = 0; n < g.size(); ++n)
                    q = std::max({q, std::abs(grads[k].minus[d][n]),
                                  std::abs(grads[k].plus[d][n])});
        return q;
    }

    static real srange_of(const VectorGridField& u) {
        real s = 0;
        for (int k = 0; k < u.components(); ++k)
            for (int i = k + 1; i < u.components(); ++i)
                s = std::max(s, sup_abs_diff(u.comp[k], u.comp[i]));
        return s;
    }

    // combined explicit rate: advection + diffusion + coupling + r-slot
    real rate(const DissipationBounds& bounds, real srange) const {
        real r = 0;
        for (int d = 0; d < g.dim; ++d) r += bounds.alpha[d] / g.h;
        r += 2 * eps * bounds.Lambda * g.dim / (g.h * g.h);
        real s_over = srange / eps;
        if (m >= 2) {
            if (md.kind == ModelKind::quadratic_coupling)
                r += 2 * m * env.coupling_sup() * w_max * s_over / eps;
            else if (md.kind == ModelKind::exponential_coupling)
                r += m * env.coupling_sup() * w_max * std::exp(std::min(s_over, md.exp_clamp)) /
                     eps;
        }
        return r + beta_max;
    }

    void apply(const VectorGridField& u, const std::vector<OneSidedGradients>& grads,
               const DissipationBounds& bounds, real dt, VectorGridField& out) {
        std::vector<real> rvec(m);
        std::array<real, 4> sdiff{};
        for (int k = 0; k < m; ++k) {
            const OneSidedGradients& grad = grads[k];
            for (int j = 0; j < g.npts[1]; ++j)
                for (int i = 0; i < g.npts[0]; ++i) {
                    std::size_t n = g.index(i, j);
                    const MediumSample& ms = med(k, n);
                    for (int c = 0; c < m; ++c) {
                        rvec[c] = u.comp[c][n];
                        sdiff[c] = c == k ? 0 : (u.comp[k][n] - u.comp[c][n]) / eps;
                    }
                    std::array<real, 2> dm{grad.minus[0][n],
                                           g.dim == 2 ? grad.minus[1][n] : 0};
                    std::array<real, 2> dp{grad.plus[0][n], g.dim == 2 ? grad.plus[1][n] : 0};
                    Point q{0.5 * (dm[0] + dp[0]), 0.5 * (dm[1] + dp[1])};
                    bool sat = false;
                    real H = evaluate_at(md, g.dim, m, ms, k, q, rvec,
                                         std::span<const real>(sdiff.data(), m), &sat);
                    if (sat) saturated = true;
                    for (int d = 0; d < g.dim; ++d)
                        H -= 0.5 * bounds.alpha[d] * (dp[d] - dm[d]);
                    real diff =
                        med.any_diffusion ? diffusion_at(ms.A, u.comp[k], g, i, j) : 0;
                    out.comp[k][n] = u.comp[k][n] - dt * (-eps * diff + H);
                }
        }
    }
};

inline void check_evolution_problem(const EvolutionProblem& prob) {
    const Grid& g = prob.u0.grid;
    const int m = prob.env.components();
    auto errs = validate(prob.model, m);
    if (!(prob.eps > 0)) errs.push_back("eps must be positive");
    if (!(prob.safety > 0)) errs.push_back("safety must be positive");
    if (prob.T < 0) errs.push_back("horizon must be nonnegative");
    if (prob.u0.components() != m)
        errs.push_back("initial data components do not match the environment");
    if (!g.periodic) errs.push_back("evolution grid must be periodic");
    if (prob.eps > 0)
        for (int d = 0; d < g.dim; ++d) {
            // the medium sampled at x/eps must tile the macro torus exactly
            real ratio = g.npts[d] * g.h / (prob.eps * prob.env.side());
            if (std::abs(ratio - std::round(ratio)) > 1e-9 || std::round(ratio) < 1)
                errs.push_back("grid extent over axis " + std::to_string(d) +
                               " must be a whole multiple of eps times the torus side");
        }
    bool finite = true;
    for (const auto& comp : prob.u0.comp)
        for (real v : comp) finite = finite && std::isfinite(v);
    if (!finite) errs.push_back("initial data must be finite");
    if (!errs.empty()) {
        std::string msg = "evolve_system:";
        for (const auto& e : errs) msg += "\n  " + e;
        throw InvalidSpec(msg);
    }
    check_snapshot_times(prob.snapshot_times, prob.T);
}

}  // namespace detail

inline EvolutionResult evolve_system(const EvolutionProblem& prob) {
    detail::check_evolution_problem(prob);
    const Grid& g = prob.u0.grid;
    const int m = prob.env.components();
    const std::size_t nodes = g.size();

    VectorGridField u = prob.u0;
    VectorGridField unew = u;
    detail::SystemStepper stepper(prob.model, prob.env, g, prob.eps);
    std::vector<OneSidedGradients> grads;
    detail::HistoryRecorder recorder;

    EvolutionResult res;
    real t = 0;
    std::size_t next_snap = 0;
    auto take_snapshot = [&](real at) {
        while (next_snap < prob.snapshot_times.size() &&
               prob.snapshot_times[next_snap] <= at + 1e-12) {
            VectorGridField snap = u;
            snap.time = prob.snapshot_times[next_snap];
            res.snapshots.push_back(std::move(snap));
            ++next_snap;
        }
    };
    auto record = [&](real at) {
        real sup = 0;
        for (int k = 0; k < m; ++k) sup = std::max(sup, sup_abs(u.comp[k]));
        res.sup_bound = std::max(res.sup_bound, sup);
        recorder.push({at, detail::SystemStepper::srange_of(u) / prob.eps, sup});
    };

    take_snapshot(0);
    record(0);

    while (t < prob.T - 1e-12) {
        real srange = detail::SystemStepper::srange_of(u);
        stepper.gradients(u, grads);
        DissipationBounds bounds = estimate_bounds(prob.model, prob.env, stepper.qmax(grads));
        real rate = stepper.rate(bounds, srange);

        real dt = rate > 0 ? prob.safety / rate : std::numeric_limits<real>::infinity();
        real t_stop = next_snap < prob.snapshot_times.size()
                          ? std::min(prob.snapshot_times[next_snap], prob.T)
                          : prob.T;
        dt = std::min(dt, t_stop - t);
        if (!(dt > 0)) break;

        if (rate > 0) {
            real projected = res.steps + (prob.T - t) * rate / prob.safety;
            if (projected > static_cast<real>(prob.max_steps))
                throw SolverFailure("evolve_system: coupling stiffness needs about " +
                                    std::to_string(static_cast<long long>(projected)) +
                                    " steps, over the budget of " +
                                    std::to_string(prob.max_steps));
        }

        stepper.apply(u, grads, bounds, dt, unew);
        std::swap(u, unew);
        t += dt;
        ++res.steps;
        res.dt_min = std::min(res.dt_min, dt);
        res.dt_max = std::max(res.dt_max, dt);

        for (int k = 0; k < m; ++k)
            for (std::size_t n = 0; n < nodes; ++n)
                if (!std::isfinite(u.comp[k][n]))
                    throw SolverFailure("evolve_system: blow-up at step " +
                                        std::to_string(res.steps) + ", t=" + fmt(t));

        record(t);
        take_snapshot(t);
    }
    take_snapshot(prob.T + 1);  // flush anything left by dt rounding
    res.saturated = stepper.saturated;
    res.history = std::move(recorder.entries);
    return res;
}

// Pointwise minimum over components, the initial datum of the limit problem.
inline VectorGridField collapse_initial(const VectorGridField& u0) {
    VectorGridField out = VectorGridField::zeros(u0.grid, 1);
    out.time = u0.time;
    out.comp[0] = u0.comp[0];
    for (int k = 1; k < u0.components(); ++k)
        for (std::size_t n = 0; n < out.comp[0].size(); ++n)
            out.comp[0][n] = std::min(out.comp[0][n], u0.comp[k][n]);
    return out;
}

//============================================================================
// Lockstep pair march
//============================================================================

struct NonExpansionEntry {
    real t = 0;
    real gap = 0;    // sup-norm distance between the two solutions
    real bound = 0;  // initial gap plus the roundoff allowance
};

struct NonExpansionReport {
    real gap0 = 0;
    std::vector<NonExpansionEntry> entries;  // one per snapshot time
    std::size_t steps = 0;
    bool non_expansive = true;
};

// Advances u0 (from prob) and v0 under a common dt and common dissipation
// bounds, so the discrete comparison argument applies exactly and the
// sup-norm gap can only shrink, up to roundoff.
inline NonExpansionReport evolve_pair_gap(const EvolutionProblem& prob,
                                          const VectorGridField& v0,
                                          real roundoff_per_step = 1e-9) {
    detail::check_evolution_problem(prob);
    const Grid& g = prob.u0.grid;
    const int m = prob.env.components();
    if (v0.components() != m || v0.grid.size() != g.size())
        throw InvalidSpec("evolve_pair_gap: second field does not match the first");

    VectorGridField u = prob.u0, v = v0;
    VectorGridField unew = u, vnew = v;
    detail::SystemStepper stepper(prob.model, prob.env, g, prob.eps);
    std::vector<OneSidedGradients> gu, gv;

    NonExpansionReport rep;
    auto gap_of = [&]() {
        real gap = 0;
        for (int k = 0; k < m; ++k) gap = std::max(gap, sup_abs_diff(u.comp[k], v.comp[k]));
        return gap;
    };
    rep.gap0 = gap_of();

    real t = 0;
    std::size_t next_snap = 0;
    auto take = [&](real at) {
        while (next_snap < prob.snapshot_times.size() &&
               prob.snapshot_times[next_snap] <= at + 1e-12) {
            real bound = rep.gap0 + roundoff_per_step * static_cast<real>(rep.steps);
            real gap = gap_of();
            rep.entries.push_back({prob.snapshot_times[next_snap], gap, bound});
            if (gap > bound) rep.non_expansive = false;
            ++next_snap;
        }
    };
    take(0);
    while (t < prob.T - 1e-12) {
        if (rep.steps >= prob.max_steps)
            throw SolverFailure("evolve_pair_gap: step budget exhausted at t=" + fmt(t));
        real srange = std::max(detail::SystemStepper::srange_of(u),
                               detail::SystemStepper::srange_of(v));
        stepper.gradients(u, gu);
        stepper.gradients(v, gv);
        real qmax = std::max(stepper.qmax(gu), stepper.qmax(gv));
        DissipationBounds bounds = estimate_bounds(prob.model, prob.env, qmax);
        real rate = stepper.rate(bounds, srange);
        real dt = rate > 0 ? prob.safety / rate : std::numeric_limits<real>::infinity();
        real t_stop = next_snap < prob.snapshot_times.size()
                          ? std::min(prob.snapshot_times[next_snap], prob.T)
                          : prob.T;
        dt = std::min(dt, t_stop - t);
        if (!(dt > 0)) break;
        stepper.apply(u, gu, bounds, dt, unew);
        stepper.apply(v, gv, bounds, dt, vnew);
        std::swap(u, unew);
        std::swap(v, vnew);
        t += dt;
        ++rep.steps;
        take(t);
    }
    take(prob.T + 1);
    return rep;
}

//============================================================================
// Scalar effective equation
//============================================================================

struct EffectiveEvolutionProblem {
    const EffectiveHamiltonianTable* table = nullptr;
    VectorGridField u0;  // single component
    real T = 1.0;
    std::vector<real> snapshot_times;
    real safety = 0.4;
    real alpha_margin = 1.2;
    std::size_t max_steps = 200'000'000;
};

struct EffectiveEvolutionResult {
    std::vector<VectorGridField> snapshots;
    std::vector<real> lip_x;  // discrete space-Lipschitz constant per snapshot
    real lip_t = 0;           // max |du/dt| observed over the march
    real dt_min = std::numeric_limits<real>::infinity();
    real dt_max = 0;
    std::size_t steps = 0;
};

inline EffectiveEvolutionResult evolve_effective(const EffectiveEvolutionProblem& prob) {
    if (!prob.table) throw InvalidSpec("evolve_effective: no table");
    const EffectiveHamiltonianTable& tab = *prob.table;
    const Grid& g = prob.u0.grid;
    if (prob.u0.components() != 1)
        throw InvalidSpec("evolve_effective: initial data must be scalar");
    if (!g.periodic) throw InvalidSpec("evolve_effective: grid must be periodic");
    if (!(prob.safety > 0)) throw InvalidSpec("evolve_effective: safety must be positive");
    if (tab.pdim != g.dim)
        throw InvalidSpec("evolve_effective: table slope dimension does not match the grid");
    detail::check_snapshot_times(prob.snapshot_times, prob.T);

    const std::size_t nodes = g.size();
    std::vector<real> u = prob.u0.comp[0];
    std::vector<real> unew(u.size());
    OneSidedGradients grad;

    // the interpolant is piecewise linear, so its node slopes are exact bounds
    real alpha = prob.alpha_margin * tab.lipschitz_p();
    real lr = prob.alpha_margin * tab.lipschitz_r();
    real rate = lr;
    for (int d = 0; d < g.dim; ++d) rate += alpha / g.h;

    EffectiveEvolutionResult res;
    real t = 0;
    std::size_t next_snap = 0;
    auto lip_of = [&](const std::vector<real>& f) {
        one_sided_gradients(f, g, grad);
        real lip = 0;
        for (int d = 0; d < g.dim; ++d)
            for (std::size_t n = 0; n < nodes; ++n)
                lip = std::max(lip, std::abs(grad.plus[d][n]));
        return lip;
    };
    auto take_snapshot = [&](real at) {
        while (next_snap < prob.snapshot_times.size() &&
               prob.snapshot_times[next_snap] <= at + 1e-12) {
            VectorGridField snap;
            snap.grid = g;
            snap.time = prob.snapshot_times[next_snap];
            snap.comp.push_back(u);
            res.snapshots.push_back(std::move(snap));
            res.lip_x.push_back(lip_of(u));
            ++next_snap;
        }
    };
    take_snapshot(0);

    while (t < prob.T - 1e-12) {
        if (res.steps >= prob.max_steps)
            throw SolverFailure("evolve_effective: step budget exhausted at t=" + fmt(t));
        real dt = rate > 0 ? prob.safety / rate : std::numeric_limits<real>::infinity();
        real t_stop = next_snap < prob.snapshot_times.size()
                          ? std::min(prob.snapshot_times[next_snap], prob.T)
                          : prob.T;
        dt = std::min(dt, t_stop - t);
        if (!(dt > 0)) break;

        one_sided_gradients(u, g, grad);
        for (int j = 0; j < g.npts[1]; ++j)
            for (int i = 0; i < g.npts[0]; ++i) {
                std::size_t n = g.index(i, j);
                Point q{0.5 * (grad.minus[0][n] + grad.plus[0][n]),
                        g.dim == 2 ? 0.5 * (grad.minus[1][n] + grad.plus[1][n]) : 0};
                real H = tab.eval(q, u[n]);
                for (int d = 0; d < g.dim; ++d)
                    H -= 0.5 * alpha * (grad.plus[d][n] - grad.minus[d][n]);
                unew[n] = u[n] - dt * H;
                res.lip_t = std::max(res.lip_t, std::abs(H));
            }
        std::swap(u, unew);
        t += dt;
        ++res.steps;
        res.dt_min = std::min(res.dt_min, dt);
        res.dt_max = std::max(res.dt_max, dt);
        for (std::size_t n = 0; n < nodes; ++n)
            if (!std::isfinite(u[n]))
                throw SolverFailure("evolve_effective: blow-up at step " +
                                    std::to_string(res.steps));
        take_snapshot(t);
    }
    take_snapshot(prob.T + 1);
    return res;
}

//============================================================================
// Boundary-layer diagnostics
//============================================================================

struct BoundaryLayerFit {
    std::vector<real> ts;  // snapshot times
    std::vector<real> M;   // max_k sup_x (u_k - lower0)
    real C1 = 0, C2 = 0;
    real rel_residual = 0;
    bool decay_detected = false;  // M dips below its initial value somewhere
    real lower_slack = 0;         // fitted C_delta of the lower barrier
    real delta = 0;
};

// Envelope fit M(t) ~ C1 (eps + t + e^{-C2 t/eps}): least squares in C1 on a
// log-spaced C2 scan. Also fits the lower-barrier constant C_delta with
// u_k >= lower0 - delta - C_delta t across all snapshots.
inline BoundaryLayerFit boundary_layer_profile(const EvolutionResult& result,
                                               const std::vector<real>& lower0, real eps,
                                               real delta = 0.05) {
    if (result.snapshots.empty())
        throw InvalidSpec("boundary_layer_profile: no snapshots to measure");
    BoundaryLayerFit fit;
    fit.delta = delta;
    for (const VectorGridField& snap : result.snapshots) {
        real gap = -std::numeric_limits<real>::infinity();
        for (int k = 0; k < snap.components(); ++k)
            for (std::size_t n = 0; n < lower0.size(); ++n)
                gap = std::max(gap, snap.comp[k][n] - lower0[n]);
        fit.ts.push_back(snap.time);
        fit.M.push_back(gap);
    }
    real m0 = fit.M.front(), mmin = m0;
    for (real v : fit.M) mmin = std::min(mmin, v);
    fit.decay_detected = mmin < m0 - 1e-12;

    real best = std::numeric_limits<real>::infinity();
    real msq = 0;
    for (real v : fit.M) msq += sqr(v);
    for (int ci = 0; ci <= 300; ++ci) {
        real c2 = std::pow(10.0, -2.0 + 5.0 * ci / 300.0);
        real num = 0, den = 0;
        for (std::size_t i = 0; i < fit.ts.size(); ++i) {
            real phi = eps + fit.ts[i] + std::exp(-c2 * fit.ts[i] / eps);
            num += fit.M[i] * phi;
            den += phi * phi;
        }
        if (!(den > 0)) continue;
        real c1 = std::max<real>(0, num / den);
        real rss = 0;
        for (std::size_t i = 0; i < fit.ts.size(); ++i) {
            real phi = eps + fit.ts[i] + std::exp(-c2 * fit.ts[i] / eps);
            rss += sqr(fit.M[i] - c1 * phi);
        }
        if (rss < best) {
            best = rss;
            fit.C1 = c1;
            fit.C2 = c2;
        }
    }
    fit.rel_residual = msq > 0 ? std::sqrt(best / msq) : 0;

    real cd = 0;
    for (const VectorGridField& snap : result.snapshots) {
        if (!(snap.time > 0)) continue;
        for (int k = 0; k < snap.components(); ++k)
            for (std::size_t n = 0; n < lower0.size(); ++n)
                cd = std::max(cd, (lower0[n] - delta - snap.comp[k][n]) / snap.time);
    }
    fit.lower_slack = cd;
    return fit;
}

}  // namespace hjhom
