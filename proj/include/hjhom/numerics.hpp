#pragma once
// Monotone finite-difference building blocks: one-sided gradients, the
// Lax-Friedrichs numerical Hamiltonian, the diffusion stencil, and the
// explicit stability bound. Everything here is pointwise and scheme-level;
// time loops live in evolution.hpp / effective.hpp / metric.hpp.

#include <array>
#include <cmath>
#include <vector>

#include "hjhom/common.hpp"
#include "hjhom/environment.hpp"
#include "hjhom/grid.hpp"
#include "hjhom/model.hpp"

namespace hjhom {

// Per-axis bounds feeding the scheme: alpha[d] dominates |dH/dp_d| over the
// anticipated gradient range, Lambda dominates the diffusion matrices.
struct DissipationBounds {
    std::array<real, 2> alpha{0, 0};
    real Lambda = 0;
};

//============================================================================
// One-sided differences
//============================================================================

struct OneSidedGradients {
    std::array<std::vector<real>, 2> minus;  // backward difference per axis
    std::array<std::vector<real>, 2> plus;   // forward difference per axis
};

// At non-periodic edges the missing one-sided difference is copied from the
// interior side, so downstream formulas stay well defined; solvers that pin
// Dirichlet values never read those entries. The out-parameter overload
// reuses buffers across relaxation sweeps.
inline void one_sided_gradients(const std::vector<real>& u, const Grid& g,
                                OneSidedGradients& out) {
    const int nx = g.npts[0], ny = g.npts[1];
    for (int d = 0; d < g.dim; ++d) {
        out.minus[d].resize(u.size());
        out.plus[d].resize(u.size());
    }
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            std::size_t id = g.index(i, j);
            for (int d = 0; d < g.dim; ++d) {
                int lo = d == 0 ? i - 1 : j - 1;
                int hi = d == 0 ? i + 1 : j + 1;
                int n = g.npts[d];
                real um, up;
                if (g.periodic) {
                    um = u[d == 0 ? g.index(g.wrap(lo, 0), j) : g.index(i, g.wrap(lo, 1))];
                    up = u[d == 0 ? g.index(g.wrap(hi, 0), j) : g.index(i, g.wrap(hi, 1))];
                } else {
                    int cl = std::max(lo, 0), ch = std::min(hi, n - 1);
                    um = u[d == 0 ? g.index(cl, j) : g.index(i, cl)];
                    up = u[d == 0 ? g.index(ch, j) : g.index(i, ch)];
                }
                real dm = (u[id] - um) / g.h, dp = (up - u[id]) / g.h;
                bool at_lo = !g.periodic && lo < 0, at_hi = !g.periodic && hi > n - 1;
                out.minus[d][id] = at_lo ? dp : dm;
                out.plus[d][id] = at_hi ? dm : dp;
            }
        }
}

inline OneSidedGradients one_sided_gradients(const std::vector<real>& u, const Grid& g) {
    OneSidedGradients out;
    one_sided_gradients(u, g, out);
    return out;
}

//============================================================================
// Lax-Friedrichs numerical Hamiltonian
//
//   Hhat = H((D- + D+)/2, r, s, y) - sum_d alpha_d (D+_d - D-_d)/2
//
// Monotone in the one-sided slots whenever alpha_d >= sup |dH/dp_d| over the
// gradient range in play.
//============================================================================

inline real numerical_hamiltonian(const HamiltonianModel& md, const EnvironmentRealization& env,
                                  int k, std::array<real, 2> dminus, std::array<real, 2> dplus,
                                  std::span<const real> r, std::span<const real> s, Point y,
                                  const DissipationBounds& bounds, bool* saturated = nullptr) {
    Point q{0.5 * (dminus[0] + dplus[0]), 0.5 * (dminus[1] + dplus[1])};
    real h = evaluate(md, env, k, q, r, s, y, saturated);
    for (int d = 0; d < env.dim(); ++d) h -= 0.5 * bounds.alpha[d] * (dplus[d] - dminus[d]);
    return h;
}

//============================================================================
// Diffusion stencil
//============================================================================

// True when the sign-split 7-point stencil for A is order preserving
// (diagonal dominance of the axis terms over the cross term).
inline bool stencil_positive(const SymMat& A) {
    return std::min(A.xx, A.yy) >= std::abs(A.xy);
}

// tr(A_k(y) D^2 u) at node (i,j): central second differences on each axis
// plus the sign-split 7-point cross stencil for the off-diagonal entry.
// Interior nodes only on non-periodic grids.
inline real diffusion_term(const EnvironmentRealization& env, int k, const std::vector<real>& u,
                           const Grid& g, int i, int j = 0) {
    SymMat A = env.diffusion(k, g.point(i, j));
    if (A.xx == 0 && A.xy == 0 && A.yy == 0) return 0;
    real h2 = g.h * g.h;
    auto at = [&](int a, int b) {
        if (g.periodic) {
            a = g.wrap(a, 0);
            b = g.dim == 2 ? g.wrap(b, 1) : 0;
        }
        return u[g.index(a, b)];
    };
    real c = u[g.index(i, j)];
    real val = A.xx * (at(i + 1, j) - 2 * c + at(i - 1, j)) / h2;
    if (g.dim == 2) {
        val += A.yy * (at(i, j + 1) - 2 * c + at(i, j - 1)) / h2;
        if (A.xy != 0) {
            real cross;
            if (A.xy > 0)
                cross = (2 * c + at(i + 1, j + 1) + at(i - 1, j - 1) - at(i + 1, j) -
                         at(i - 1, j) - at(i, j + 1) - at(i, j - 1)) /
                        (2 * h2);
            else
                cross = -(2 * c + at(i + 1, j - 1) + at(i - 1, j + 1) - at(i + 1, j) -
                          at(i - 1, j) - at(i, j + 1) - at(i, j - 1)) /
                        (2 * h2);
            val += 2 * A.xy * cross;
        }
    }
    return val;
}

//============================================================================
// Stability
//============================================================================

// Largest explicit step for the combined scheme with viscosity scale eps:
//   dt = safety / ( sum_d alpha_d/h  +  2 eps Lambda dim / h^2 ).
inline real stable_dt(const Grid& g, const DissipationBounds& bounds, real eps, real safety) {
    if (!(safety > 0)) throw InvalidSpec("stable_dt: safety must be positive");
    real rate = 0;
    for (int d = 0; d < g.dim; ++d) rate += bounds.alpha[d] / g.h;
    rate += 2 * eps * bounds.Lambda * g.dim / (g.h * g.h);
    if (!(rate > 0))
        throw InvalidSpec("stable_dt: no dissipation (alpha and eps*Lambda all zero)");
    return safety / rate;
}

// Bounds from the catalog closed forms: |dH/dp_d| <= a gamma |p|^{gamma-1}
// over |p| <= p_sup, and Lambda from the analytic field suprema. When the
// cross stencil loses positivity Lambda is inflated by the excess so the
// time step shrinks accordingly.
inline DissipationBounds estimate_bounds(const HamiltonianModel& md,
                                         const EnvironmentRealization& env, real p_sup,
                                         real margin = 1.2) {
    DissipationBounds b;
    real alpha = 0, lambda = 0;
    for (int k = 0; k < env.components(); ++k) {
        real g = md.gamma[k];
        alpha = std::max(alpha, md.a[k] * g * std::pow(std::max<real>(p_sup, 0), g - 1));
        real s2 = sqr(std::max(std::abs(env.spec.sigma.sup()), std::abs(env.spec.sigma.inf())));
        SymMat A{s2 * env.shape[k].xx, s2 * env.shape[k].xy, s2 * env.shape[k].yy};
        real lam = env.diffusion_sup(k);
        if (env.dim() == 2 && !stencil_positive(A))
            lam += std::abs(A.xy) - std::min(A.xx, A.yy);
        lambda = std::max(lambda, lam);
    }
    for (int d = 0; d < env.dim(); ++d) b.alpha[d] = alpha * margin;
    b.Lambda = lambda * margin;
    return b;
}

}  // namespace hjhom
