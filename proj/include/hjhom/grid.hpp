#pragma once
// Uniform grids in one or two dimensions and the value-semantic field
// containers the solvers operate on.

#include <algorithm>
#include <array>
#include <cstddef>
#include <vector>

#include "hjhom/common.hpp"

namespace hjhom {

using Point = std::array<real, 2>;  // second entry unused when dim == 1

//============================================================================
// Grid
//
// Uniform spacing h on every axis. Periodic grids tile [origin, origin+n*h)
// per axis; non-periodic grids include both end nodes and the boundary ring
// is handled by the solver that owns the field.
//============================================================================

struct Grid {
    int dim = 1;
    std::array<int, 2> npts{1, 1};  // nodes per axis; npts[1]==1 when dim==1
    real h = 1.0;
    Point origin{0.0, 0.0};
    bool periodic = true;

    std::size_t size() const {
        return static_cast<std::size_t>(npts[0]) * static_cast<std::size_t>(npts[1]);
    }

    std::size_t index(int i, int j = 0) const {
        return static_cast<std::size_t>(j) * npts[0] + i;
    }

    Point point(int i, int j = 0) const {
        return {origin[0] + i * h, origin[1] + j * h};
    }

    int wrap(int i, int axis) const {
        int n = npts[axis];
        i %= n;
        return i < 0 ? i + n : i;
    }

    // Extent per axis: the period for periodic grids, the box side otherwise.
    real extent(int axis) const {
        return periodic ? npts[axis] * h : (npts[axis] - 1) * h;
    }
};

inline Grid make_periodic_grid(int dim, real side, real h, Point origin = {0, 0}) {
    Grid g;
    g.dim = dim;
    g.h = h;
    g.origin = origin;
    g.periodic = true;
    int n = static_cast<int>(std::lround(side / h));
    if (n < 4 || std::abs(n * h - side) > 1e-9 * side)
        throw InvalidSpec("grid spacing " + fmt(h) + " does not tile side " + fmt(side));
    g.npts[0] = n;
    g.npts[1] = dim == 2 ? n : 1;
    return g;
}

//============================================================================
// Fields
//============================================================================

// m scalar components sharing one grid. Plain value type: copying a field
// copies its data, so solver snapshots are immutable by construction.
struct VectorGridField {
    Grid grid;
    std::vector<std::vector<real>> comp;  // comp[k][node]
    real time = 0.0;

    int components() const { return static_cast<int>(comp.size()); }

    static VectorGridField zeros(const Grid& g, int m) {
        VectorGridField f;
        f.grid = g;
        f.comp.assign(m, std::vector<real>(g.size(), 0.0));
        return f;
    }
};

// Multilinear interpolation of node values at an arbitrary point. Periodic
// grids wrap; non-periodic grids require the point inside the box.
inline real grid_interpolate(const Grid& g, const std::vector<real>& u, Point x) {
    std::array<int, 2> i0{0, 0}, i1{0, 0};
    std::array<real, 2> t{0, 0};
    for (int d = 0; d < g.dim; ++d) {
        real s = (x[d] - g.origin[d]) / g.h;
        int lo = static_cast<int>(std::floor(s));
        t[d] = s - lo;
        if (g.periodic) {
            i0[d] = g.wrap(lo, d);
            i1[d] = g.wrap(lo + 1, d);
        } else {
            if (s < -1e-9 || s > g.npts[d] - 1 + 1e-9)
                throw TableRange("interpolation point outside the grid box");
            lo = std::clamp(lo, 0, g.npts[d] - 2);
            t[d] = std::clamp(s - lo, 0.0, 1.0);
            i0[d] = lo;
            i1[d] = lo + 1;
        }
    }
    if (g.dim == 1) return u[g.index(i0[0])] * (1 - t[0]) + u[g.index(i1[0])] * t[0];
    return (u[g.index(i0[0], i0[1])] * (1 - t[0]) + u[g.index(i1[0], i0[1])] * t[0]) * (1 - t[1]) +
           (u[g.index(i0[0], i1[1])] * (1 - t[0]) + u[g.index(i1[0], i1[1])] * t[0]) * t[1];
}

inline real sup_abs(const std::vector<real>& v) {
    real s = 0;
    for (real x : v) s = std::max(s, std::abs(x));
    return s;
}

inline real sup_abs_diff(const std::vector<real>& a, const std::vector<real>& b) {
    real s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s = std::max(s, std::abs(a[i] - b[i]));
    return s;
}

inline std::pair<real, real> min_max(const std::vector<real>& v) {
    real lo = v.empty() ? 0 : v[0], hi = lo;
    for (real x : v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    return {lo, hi};
}

}  // namespace hjhom
