#pragma once
// Random/periodic coefficient environments on a torus of side L.
//
// Every coefficient (diffusion factor sigma_k, potential V_k, coupling
// weights c_ki) is a stationary field realized from a master seed with
// counter-based hashing: the value attached to a lattice cell is a pure
// function of (seed, stream id, cell index), so realizations are O(1) to
// sample, bit-reproducible, and shifting by a lattice vector is exact.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "hjhom/common.hpp"
#include "hjhom/grid.hpp"

namespace hjhom {

inline constexpr real pi = 3.14159265358979323846;

//============================================================================
// Specification
//============================================================================

enum class FieldKind { constant, periodic_cosine, random_checkerboard, smoothed_bumps };

inline const char* to_string(FieldKind k) {
    switch (k) {
        case FieldKind::constant: return "constant";
        case FieldKind::periodic_cosine: return "periodic-cosine";
        case FieldKind::random_checkerboard: return "random-checkerboard";
        case FieldKind::smoothed_bumps: return "smoothed-bumps";
    }
    return "?";
}

struct FieldSpec {
    FieldKind kind = FieldKind::constant;
    real mean = 0.0;
    real amplitude = 0.0;        // checkerboard takes values mean +- amplitude
    real cell = 1.0;             // lattice cell size for the random kinds
    real period = 1.0;           // wavelength of the cosine kind
    real smoothing_radius = 1.0; // averaging radius (in physical units) for smoothed-bumps

    real sup() const { return kind == FieldKind::constant ? mean : mean + amplitude; }
    real inf() const { return kind == FieldKind::constant ? mean : mean - amplitude; }
};

inline FieldSpec constant_field(real value) {
    FieldSpec f;
    f.mean = value;
    return f;
}

// n: spatial dimension (1 or 2). m: number of system components (<= 4).
// Each component draws its own independent potential/diffusion field from
// the shared role spec; coupling fields are independent per ordered pair.
struct EnvironmentSpec {
    int dim = 1;
    int components = 1;
    real side = 1.0;  // torus side L
    FieldSpec sigma;      // diffusion factor, A_k = sigma_k(y)^2 * shape_k
    FieldSpec potential;  // V_k >= 0
    FieldSpec coupling;   // c_ki >= c_min > 0 when m >= 2
    // Optional constant matrix factor S_k per component: Sigma_k(y) =
    // sigma_k(y) * S_k, so A_k = sigma_k^2 * S_k S_k^T. Row-major dim x dim;
    // empty list means identity for every component.
    std::vector<std::array<real, 4>> diffusion_shape;
};

namespace detail {

inline bool divides(real part, real whole) {
    if (part <= 0) return false;
    real q = whole / part;
    return std::abs(q - std::lround(q)) < 1e-9;
}

inline void validate_field(const std::string& role, const FieldSpec& f, real side,
                           std::vector<std::string>& errs) {
    if (f.amplitude < 0) errs.push_back(role + ": amplitude must be >= 0");
    if (f.kind == FieldKind::periodic_cosine && !divides(f.period, side))
        errs.push_back(role + ": period " + fmt(f.period) + " does not divide the torus side " +
                       fmt(side));
    if (f.kind == FieldKind::random_checkerboard || f.kind == FieldKind::smoothed_bumps) {
        if (!divides(f.cell, side))
            errs.push_back(role + ": cell size " + fmt(f.cell) +
                           " does not divide the torus side " + fmt(side));
    }
    if (f.kind == FieldKind::smoothed_bumps && f.smoothing_radius < 0)
        errs.push_back(role + ": smoothing radius must be >= 0");
}

}  // namespace detail

inline std::vector<std::string> validate(const EnvironmentSpec& spec) {
    std::vector<std::string> errs;
    if (spec.dim != 1 && spec.dim != 2) errs.push_back("environment: dim must be 1 or 2");
    if (spec.components < 1 || spec.components > 4)
        errs.push_back("environment: components must be between 1 and 4");
    if (!(spec.side > 0)) errs.push_back("environment: side must be positive");
    detail::validate_field("sigma", spec.sigma, spec.side, errs);
    detail::validate_field("potential", spec.potential, spec.side, errs);
    if (spec.components >= 2)
        detail::validate_field("coupling", spec.coupling, spec.side, errs);
    if (spec.sigma.kind == FieldKind::random_checkerboard)
        errs.push_back("sigma: requires a Lipschitz kind (constant, periodic-cosine, smoothed-bumps)");
    if (spec.sigma.inf() < -1e-12) errs.push_back("sigma: must be nonnegative (mean >= amplitude)");
    if (spec.potential.inf() < -1e-12)
        errs.push_back("potential: must be nonnegative (mean >= amplitude)");
    if (spec.components >= 2 && !(spec.coupling.inf() > 0))
        errs.push_back("coupling: must be bounded below by a positive constant (mean > amplitude)");
    if (!spec.diffusion_shape.empty() &&
        static_cast<int>(spec.diffusion_shape.size()) != spec.components)
        errs.push_back("diffusion_shape: needs one matrix per component (or none)");
    return errs;
}

//============================================================================
// Realization
//============================================================================

// Symmetric 2x2 (or 1x1) matrix; yy/xy unused in one dimension.
struct SymMat {
    real xx = 0, xy = 0, yy = 0;
};

struct MediumSample {
    SymMat A;                  // diffusion matrix A_k(y)
    real V = 0;                // potential V_k(y)
    std::array<real, 4> c{};   // coupling row c_k.(y); entry k unused
};

namespace detail {

// One realized coefficient field: the spec plus (for random kinds) the
// lattice tables drawn from the hash stream.
struct RoleField {
    FieldSpec spec;
    int N = 0;                 // cells per axis on the torus
    std::array<std::int64_t, 2> off{0, 0};  // shift offset in cell units
    std::vector<real> cells;   // checkerboard value per cell, row-major
    std::vector<real> nodes;   // smoothed value per lattice node (smoothed-bumps)
};

inline std::int64_t floor_div(real x, real cell) {
    return static_cast<std::int64_t>(std::floor(x / cell));
}

inline int wrap_mod(std::int64_t i, int n) {
    std::int64_t r = i % n;
    return static_cast<int>(r < 0 ? r + n : r);
}

}  // namespace detail

struct EnvironmentRealization {
    EnvironmentSpec spec;
    std::uint64_t seed = 0;
    Point shift_total{0, 0};  // accumulated shift, applied to analytic kinds

    std::vector<detail::RoleField> sigma_f;               // [k]
    std::vector<detail::RoleField> potential_f;           // [k]
    std::vector<std::vector<detail::RoleField>> coupling_f;  // [k][i]
    std::vector<SymMat> shape;                // S_k S_k^T per component

    int dim() const { return spec.dim; }
    int components() const { return spec.components; }
    real side() const { return spec.side; }

    real field_value(const detail::RoleField& f, Point y) const {
        switch (f.spec.kind) {
            case FieldKind::constant:
                return f.spec.mean;
            case FieldKind::periodic_cosine: {
                real v = f.spec.amplitude;
                for (int d = 0; d < spec.dim; ++d)
                    v *= std::cos(2 * pi * (y[d] + shift_total[d]) / f.spec.period);
                return f.spec.mean + v;
            }
            case FieldKind::random_checkerboard: {
                int ix = detail::wrap_mod(detail::floor_div(y[0], f.spec.cell) + f.off[0], f.N);
                int iy = spec.dim == 2
                             ? detail::wrap_mod(detail::floor_div(y[1], f.spec.cell) + f.off[1], f.N)
                             : 0;
                return f.cells[static_cast<std::size_t>(iy) * f.N + ix];
            }
            case FieldKind::smoothed_bumps: {
                // multilinear interpolation of the smoothed node values
                real sx = y[0] / f.spec.cell + f.off[0];
                std::int64_t ix = static_cast<std::int64_t>(std::floor(sx));
                real tx = sx - ix;
                int ix0 = detail::wrap_mod(ix, f.N), ix1 = detail::wrap_mod(ix + 1, f.N);
                if (spec.dim == 1) {
                    return f.nodes[ix0] * (1 - tx) + f.nodes[ix1] * tx;
                }
                real sy = y[1] / f.spec.cell + f.off[1];
                std::int64_t iy = static_cast<std::int64_t>(std::floor(sy));
                real ty = sy - iy;
                int iy0 = detail::wrap_mod(iy, f.N), iy1 = detail::wrap_mod(iy + 1, f.N);
                auto at = [&](int a, int b) { return f.nodes[static_cast<std::size_t>(b) * f.N + a]; };
                return (at(ix0, iy0) * (1 - tx) + at(ix1, iy0) * tx) * (1 - ty) +
                       (at(ix0, iy1) * (1 - tx) + at(ix1, iy1) * tx) * ty;
            }
        }
        return 0;
    }

    real sigma(int k, Point y) const { return field_value(sigma_f[k], y); }
    real potential(int k, Point y) const { return field_value(potential_f[k], y); }
    real coupling(int k, int i, Point y) const { return field_value(coupling_f[k][i], y); }

    SymMat diffusion(int k, Point y) const {
        real s2 = sqr(sigma(k, y));
        return {s2 * shape[k].xx, s2 * shape[k].xy, s2 * shape[k].yy};
    }

    // Largest eigenvalue of A_k over the torus (analytic per field kind).
    real diffusion_sup(int k) const {
        real s2 = sqr(std::max(std::abs(sigma_f[k].spec.sup()), std::abs(sigma_f[k].spec.inf())));
        const SymMat& m = shape[k];
        real tr = m.xx + m.yy, det = m.xx * m.yy - m.xy * m.xy;
        real eig = spec.dim == 1 ? m.xx
                                 : 0.5 * (tr + std::sqrt(std::max<real>(0, tr * tr - 4 * det)));
        return s2 * eig;
    }

    real coupling_sup() const { return spec.components >= 2 ? spec.coupling.sup() : 0; }
    real coupling_inf() const { return spec.components >= 2 ? spec.coupling.inf() : 0; }
    real potential_sup() const { return spec.potential.sup(); }

    // Lipschitz constant of the diffusion factor field (per component it is
    // the same bound; exact for cosine, a sharp lattice bound for bumps).
    real sigma_lipschitz() const {
        const FieldSpec& f = spec.sigma;
        switch (f.kind) {
            case FieldKind::constant:
                return 0;
            case FieldKind::periodic_cosine:
                return f.amplitude * 2 * pi / f.period * std::sqrt(static_cast<real>(spec.dim));
            case FieldKind::smoothed_bumps: {
                real worst = 0;
                for (const auto& rf : sigma_f) {
                    for (int b = 0; b < (spec.dim == 2 ? rf.N : 1); ++b)
                        for (int a = 0; a < rf.N; ++a) {
                            std::size_t here = static_cast<std::size_t>(b) * rf.N + a;
                            std::size_t right = static_cast<std::size_t>(b) * rf.N + (a + 1) % rf.N;
                            worst = std::max(worst, std::abs(rf.nodes[here] - rf.nodes[right]));
                            if (spec.dim == 2) {
                                std::size_t up = static_cast<std::size_t>((b + 1) % rf.N) * rf.N + a;
                                worst = std::max(worst, std::abs(rf.nodes[here] - rf.nodes[up]));
                            }
                        }
                }
                return worst / f.cell * spec.dim;
            }
            case FieldKind::random_checkerboard:
                return std::numeric_limits<real>::infinity();
        }
        return 0;
    }
};

inline MediumSample sample(const EnvironmentRealization& env, int k, Point y) {
    MediumSample out;
    out.A = env.diffusion(k, y);
    out.V = env.potential(k, y);
    for (int i = 0; i < env.components(); ++i)
        out.c[i] = (i == k || env.components() < 2) ? 0 : env.coupling(k, i, y);
    return out;
}

namespace detail {

// Stream ids keep the hash streams of distinct fields disjoint.
inline std::uint64_t stream_id(int role, int k, int i) {
    return (static_cast<std::uint64_t>(role) << 8) | (static_cast<std::uint64_t>(k) << 4) |
           static_cast<std::uint64_t>(i);
}

inline RoleField realize_field(const FieldSpec& f, const EnvironmentSpec& spec,
                               std::uint64_t seed, std::uint64_t stream) {
    RoleField rf;
    rf.spec = f;
    if (f.kind != FieldKind::random_checkerboard && f.kind != FieldKind::smoothed_bumps)
        return rf;
    rf.N = static_cast<int>(std::lround(spec.side / f.cell));
    std::size_t rows = spec.dim == 2 ? rf.N : 1;
    std::vector<real> cells(rows * rf.N);
    for (std::size_t b = 0; b < rows; ++b)
        for (int a = 0; a < rf.N; ++a) {
            std::uint64_t h = hash_counter(seed, stream, b * rf.N + a);
            cells[b * rf.N + a] = (h & 1) ? f.mean + f.amplitude : f.mean - f.amplitude;
        }
    if (f.kind == FieldKind::random_checkerboard) {
        rf.cells = std::move(cells);
        return rf;
    }
    // smoothed-bumps: average the checkerboard over a window of cells around
    // each lattice node, then interpolate multilinearly at evaluation time.
    int rs = std::max<int>(1, static_cast<int>(std::lround(f.smoothing_radius / f.cell)));
    rf.nodes.assign(rows * rf.N, 0.0);
    for (std::size_t b = 0; b < rows; ++b)
        for (int a = 0; a < rf.N; ++a) {
            real acc = 0;
            int cnt = 0;
            for (int db = (spec.dim == 2 ? -rs : 0); db < (spec.dim == 2 ? rs : 1); ++db)
                for (int da = -rs; da < rs; ++da) {
                    int ca = wrap_mod(a + da, rf.N);
                    int cb = spec.dim == 2 ? wrap_mod(static_cast<std::int64_t>(b) + db, rf.N) : 0;
                    acc += cells[static_cast<std::size_t>(cb) * rf.N + ca];
                    ++cnt;
                }
            rf.nodes[b * rf.N + a] = acc / cnt;
        }
    return rf;
}

}  // namespace detail

inline EnvironmentRealization realize(const EnvironmentSpec& spec, std::uint64_t seed) {
    auto errs = validate(spec);
    if (!errs.empty()) {
        std::string msg = "invalid environment spec:";
        for (const auto& e : errs) msg += "\n  " + e;
        throw InvalidSpec(msg);
    }
    EnvironmentRealization env;
    env.spec = spec;
    env.seed = seed;
    int m = spec.components;
    env.sigma_f.reserve(m);
    env.potential_f.reserve(m);
    env.coupling_f.assign(m, {});
    for (int k = 0; k < m; ++k) {
        env.sigma_f.push_back(detail::realize_field(spec.sigma, spec, seed, detail::stream_id(0, k, 0)));
        env.potential_f.push_back(
            detail::realize_field(spec.potential, spec, seed, detail::stream_id(1, k, 0)));
        env.coupling_f[k].resize(m);
        for (int i = 0; i < m; ++i)
            if (i != k)
                env.coupling_f[k][i] =
                    detail::realize_field(spec.coupling, spec, seed, detail::stream_id(2, k, i));
    }
    env.shape.resize(m);
    for (int k = 0; k < m; ++k) {
        if (spec.diffusion_shape.empty()) {
            env.shape[k] = {1.0, 0.0, spec.dim == 2 ? 1.0 : 0.0};
        } else {
            const auto& S = spec.diffusion_shape[k];
            if (spec.dim == 1) {
                env.shape[k] = {S[0] * S[0], 0.0, 0.0};
            } else {
                // S S^T for row-major S = [s00 s01; s10 s11]
                env.shape[k] = {S[0] * S[0] + S[1] * S[1], S[0] * S[2] + S[1] * S[3],
                                S[2] * S[2] + S[3] * S[3]};
            }
        }
    }
    return env;
}

// Shift the whole realization by z; each z component must be an integer
// multiple of every lattice cell in use. sample(shift(env,z), k, y) equals
// sample(env, k, y+z) exactly.
inline EnvironmentRealization shift(const EnvironmentRealization& env, Point z) {
    EnvironmentRealization out = env;
    auto shift_field = [&](detail::RoleField& f) {
        if (f.spec.kind != FieldKind::random_checkerboard &&
            f.spec.kind != FieldKind::smoothed_bumps)
            return;
        for (int d = 0; d < env.spec.dim; ++d) {
            real q = z[d] / f.spec.cell;
            if (std::abs(q - std::lround(q)) > 1e-9)
                throw InvalidSpec("shift component " + fmt(z[d]) +
                                  " is not a multiple of the lattice cell " + fmt(f.spec.cell));
            f.off[d] += std::lround(q);
        }
    };
    for (auto& f : out.sigma_f) shift_field(f);
    for (auto& f : out.potential_f) shift_field(f);
    for (auto& row : out.coupling_f)
        for (auto& f : row) shift_field(f);
    for (int d = 0; d < env.spec.dim; ++d) out.shift_total[d] += z[d];
    return out;
}

// Sampled coefficient profiles on an npts^dim grid, one row per point. The
// leading comment line records the construction parameters.
inline void write_environment_csv(const EnvironmentRealization& env, std::ostream& os, int npts) {
    os << "# n=" << env.dim() << " L=" << fmt(env.side()) << " seed=" << env.seed;
    auto put_cell = [&](const char* role, const FieldSpec& f) {
        if (f.kind == FieldKind::random_checkerboard || f.kind == FieldKind::smoothed_bumps)
            os << " " << role << "_cell=" << fmt(f.cell);
    };
    put_cell("sigma", env.spec.sigma);
    put_cell("potential", env.spec.potential);
    put_cell("coupling", env.spec.coupling);
    os << "\n";
    os << "x";
    if (env.dim() == 2) os << ",y";
    for (int k = 0; k < env.components(); ++k) {
        os << ",sigma" << k + 1 << ",V" << k + 1;
        for (int i = 0; i < env.components(); ++i)
            if (i != k) os << ",c" << k + 1 << i + 1;
    }
    os << "\n";
    real h = env.side() / npts;
    int rows = env.dim() == 2 ? npts : 1;
    for (int j = 0; j < rows; ++j)
        for (int i = 0; i < npts; ++i) {
            Point y{i * h, j * h};
            os << fmt(y[0]);
            if (env.dim() == 2) os << "," << fmt(y[1]);
            for (int k = 0; k < env.components(); ++k) {
                os << "," << fmt(env.sigma(k, y)) << "," << fmt(env.potential(k, y));
                for (int l = 0; l < env.components(); ++l)
                    if (l != k) os << "," << fmt(env.coupling(k, l, y));
            }
            os << "\n";
        }
}

}  // namespace hjhom
