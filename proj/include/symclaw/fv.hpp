#pragma once

#include <cmath>
#include <vector>

#include "symclaw/common.hpp"
#include "symclaw/flux.hpp"

namespace symclaw {

inline constexpr int kGhost = 3;

struct BoundarySpec {
    enum Kind { kPeriodic, kDirichlet } kind = kPeriodic;
    // Frozen states for Dirichlet sides: p values in 1D, one p-vector per
    // transverse cell in 2D (the initial condition's boundary ring).
    std::vector<double> lo, hi;
};

/// Cell-averaged state over a structured 1D/2D grid, allocated with a
/// three-cell halo in each active direction. Layout is row-major
/// [y][x][component]; x sweeps stride over contiguous cells.
struct GridField {
    int d = 1, p = 1, nx = 0, ny = 1;
    double dx = 0.0, dy = 0.0;
    BoundarySpec bcx, bcy;
    std::vector<double> data;

    static GridField make1d(int nx, int p, double dx) {
        if (nx < 7) throw Error("GridField: need at least 7 cells per axis");
        GridField f;
        f.d = 1;
        f.p = p;
        f.nx = nx;
        f.dx = dx;
        f.data.assign(static_cast<size_t>((nx + 2 * kGhost)) * static_cast<size_t>(p), 0.0);
        return f;
    }
    static GridField make2d(int nx, int ny, int p, double dx, double dy) {
        if (nx < 7 || ny < 7) throw Error("GridField: need at least 7 cells per axis");
        GridField f;
        f.d = 2;
        f.p = p;
        f.nx = nx;
        f.ny = ny;
        f.dx = dx;
        f.dy = dy;
        f.data.assign(static_cast<size_t>(nx + 2 * kGhost) * static_cast<size_t>(ny + 2 * kGhost) *
                          static_cast<size_t>(p),
                      0.0);
        return f;
    }

    size_t idx(int i, int j = 0) const {
        const int stride = nx + 2 * kGhost;
        const int row = d == 2 ? j + kGhost : 0;
        return (static_cast<size_t>(row) * static_cast<size_t>(stride) +
                static_cast<size_t>(i + kGhost)) *
               static_cast<size_t>(p);
    }
    double* at(int i, int j = 0) { return data.data() + idx(i, j); }
    const double* at(int i, int j = 0) const { return data.data() + idx(i, j); }
    Vec cell(int i, int j = 0) const {
        Vec u(p);
        const double* s = at(i, j);
        for (int c = 0; c < p; ++c) u[c] = s[c];
        return u;
    }
    void set_cell(int i, int j, const Vec& u) {
        double* s = at(i, j);
        for (int c = 0; c < p; ++c) s[c] = u[c];
    }

    /// Total of each conserved component over the interior, times cell volume.
    Vec conserved_total() const {
        const double vol = d == 2 ? dx * dy : dx;
        Vec s(p);
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                const double* u = at(i, j);
                for (int c = 0; c < p; ++c) s[c] += u[c];
            }
        return vol * s;
    }

    bool interior_finite() const {
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                const double* u = at(i, j);
                for (int c = 0; c < p; ++c)
                    if (!std::isfinite(u[c])) return false;
            }
        return true;
    }
};

/// Repopulates the halo: wrap-around copies for periodic axes, the frozen
/// boundary state (all three ghost cells per side) for Dirichlet axes.
inline void fill_ghosts(GridField& f) {
    const int p = f.p;
    for (int j = 0; j < f.ny; ++j) {
        for (int g = 1; g <= kGhost; ++g) {
            double* lo = f.at(-g, j);
            double* hi = f.at(f.nx - 1 + g, j);
            if (f.bcx.kind == BoundarySpec::kPeriodic) {
                const double* src_lo = f.at(f.nx - g, j);
                const double* src_hi = f.at(g - 1, j);
                for (int c = 0; c < p; ++c) lo[c] = src_lo[c];
                for (int c = 0; c < p; ++c) hi[c] = src_hi[c];
            } else {
                const double* s_lo = f.bcx.lo.data() + static_cast<size_t>(f.d == 2 ? j * p : 0);
                const double* s_hi = f.bcx.hi.data() + static_cast<size_t>(f.d == 2 ? j * p : 0);
                for (int c = 0; c < p; ++c) lo[c] = s_lo[c];
                for (int c = 0; c < p; ++c) hi[c] = s_hi[c];
            }
        }
    }
    if (f.d == 2) {
        for (int i = 0; i < f.nx; ++i) {
            for (int g = 1; g <= kGhost; ++g) {
                double* lo = f.at(i, -g);
                double* hi = f.at(i, f.ny - 1 + g);
                if (f.bcy.kind == BoundarySpec::kPeriodic) {
                    const double* src_lo = f.at(i, f.ny - g);
                    const double* src_hi = f.at(i, g - 1);
                    for (int c = 0; c < p; ++c) lo[c] = src_lo[c];
                    for (int c = 0; c < p; ++c) hi[c] = src_hi[c];
                } else {
                    const double* s_lo = f.bcy.lo.data() + static_cast<size_t>(i * p);
                    const double* s_hi = f.bcy.hi.data() + static_cast<size_t>(i * p);
                    for (int c = 0; c < p; ++c) lo[c] = s_lo[c];
                    for (int c = 0; c < p; ++c) hi[c] = s_hi[c];
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// WENO5 reconstruction, written once against a small algebra so the double
// path and the tape path evaluate the identical formula.
// ---------------------------------------------------------------------------

struct ScalarAlg {
    using V = Vec;
    V add(V a, const V& b) const { return a + b; }
    V sub(V a, const V& b) const { return a - b; }
    V mul(V a, const V& b) const {
        for (int i = 0; i < a.n; ++i) a[i] *= b[i];
        return a;
    }
    V scale(double s, V a) const { return s * a; }
    V axpy(double s, V a, const V& b) const {
        for (int i = 0; i < a.n; ++i) a[i] += s * b[i];
        return a;
    }
    V add_const(double s, V a) const {
        for (int i = 0; i < a.n; ++i) a[i] += s;
        return a;
    }
    V square(V a) const {
        for (int i = 0; i < a.n; ++i) a[i] *= a[i];
        return a;
    }
    V recip(V a) const {
        for (int i = 0; i < a.n; ++i) a[i] = 1.0 / a[i];
        return a;
    }
};

/// Left-biased fifth-order WENO value at interface j+1/2 from the stencil
/// (u_{j-2}, .., u_{j+2}), componentwise. Weights use c = (0.1, 0.6, 0.3)
/// and alpha_k = c_k / ((dx)^2 + beta_k)^2.
template <class A>
typename A::V weno5_left(A& alg, const typename A::V s[5], double dx) {
    using V = typename A::V;
    auto lc3 = [&](double c0, const V& a, double c1, const V& b, double c2, const V& c) {
        return alg.axpy(c2, alg.axpy(c1, alg.scale(c0, a), b), c);
    };
    const V p0 = lc3(1.0 / 3.0, s[0], -7.0 / 6.0, s[1], 11.0 / 6.0, s[2]);
    const V p1 = lc3(-1.0 / 6.0, s[1], 5.0 / 6.0, s[2], 1.0 / 3.0, s[3]);
    const V p2 = lc3(1.0 / 3.0, s[2], 5.0 / 6.0, s[3], -1.0 / 6.0, s[4]);

    const V b0 = alg.axpy(0.25, alg.scale(13.0 / 12.0, alg.square(lc3(1, s[0], -2, s[1], 1, s[2]))),
                          alg.square(lc3(1, s[0], -4, s[1], 3, s[2])));
    const V b1 = alg.axpy(0.25, alg.scale(13.0 / 12.0, alg.square(lc3(1, s[1], -2, s[2], 1, s[3]))),
                          alg.square(alg.sub(s[1], s[3])));
    const V b2 = alg.axpy(0.25, alg.scale(13.0 / 12.0, alg.square(lc3(1, s[2], -2, s[3], 1, s[4]))),
                          alg.square(lc3(3, s[2], -4, s[3], 1, s[4])));

    const double dx2 = dx * dx;
    auto alpha = [&](double c, const V& beta) {
        return alg.scale(c, alg.recip(alg.square(alg.add_const(dx2, beta))));
    };
    const V a0 = alpha(0.1, b0);
    const V a1 = alpha(0.6, b1);
    const V a2 = alpha(0.3, b2);
    const V inv = alg.recip(alg.add(alg.add(a0, a1), a2));
    const V q0 = alg.mul(alg.mul(a0, inv), p0);
    const V q1 = alg.mul(alg.mul(a1, inv), p1);
    return alg.add(alg.add(q0, q1), alg.mul(alg.mul(a2, inv), p2));
}

/// Public left-biased reconstruction on plain states. The right-biased value
/// at the same interface is weno5_left on the mirrored stencil.
inline Vec weno5_reconstruct(const Vec stencil[5], double dx) {
    ScalarAlg alg;
    return weno5_left(alg, stencil, dx);
}

// ---------------------------------------------------------------------------
// Semi-discrete residual and time stepping
// ---------------------------------------------------------------------------

/// d/dt u_j = -(1/dx) (F_{j+1/2} - F_{j-1/2}), summed over directions in 2D.
/// `flux(dir, u_minus, u_plus, iface)` is the interface flux. Ghosts are
/// repopulated before the sweeps; only the interior of the result is defined.
template <class Flux>
GridField semidiscrete_rhs(GridField& u, Flux&& flux) {
    fill_ghosts(u);
    GridField rate = u;
    std::fill(rate.data.begin(), rate.data.end(), 0.0);
    ScalarAlg alg;
    const int p = u.p;

    // x sweeps
    {
        const int nf = u.nx + 1;
        std::vector<Vec> f(static_cast<size_t>(nf));
        for (int j = 0; j < u.ny; ++j) {
            for (int i = 0; i <= u.nx; ++i) {
                if (u.bcx.kind == BoundarySpec::kPeriodic && i == u.nx) {
                    f[static_cast<size_t>(i)] = f[0];
                    continue;
                }
                Vec sm[5], sp[5];
                for (int k = 0; k < 5; ++k) {
                    sm[k] = u.cell(i - 3 + k, j);
                    sp[k] = u.cell(i + 2 - k, j);
                }
                const Vec um = weno5_left(alg, sm, u.dx);
                const Vec up = weno5_left(alg, sp, u.dx);
                Vec fi = flux(0, um, up, i);
                if (!all_finite(fi))
                    throw NonFiniteError("non-finite interface flux", -1, 0, i);
                f[static_cast<size_t>(i)] = fi;
            }
            const double inv = 1.0 / u.dx;
            for (int i = 0; i < u.nx; ++i) {
                double* r = rate.at(i, j);
                const Vec& fl = f[static_cast<size_t>(i)];
                const Vec& fr = f[static_cast<size_t>(i + 1)];
                for (int c = 0; c < p; ++c) r[c] -= inv * (fr[c] - fl[c]);
            }
        }
    }

    if (u.d == 2) {
        const int nf = u.ny + 1;
        std::vector<Vec> f(static_cast<size_t>(nf));
        for (int i = 0; i < u.nx; ++i) {
            for (int j = 0; j <= u.ny; ++j) {
                if (u.bcy.kind == BoundarySpec::kPeriodic && j == u.ny) {
                    f[static_cast<size_t>(j)] = f[0];
                    continue;
                }
                Vec sm[5], sp[5];
                for (int k = 0; k < 5; ++k) {
                    sm[k] = u.cell(i, j - 3 + k);
                    sp[k] = u.cell(i, j + 2 - k);
                }
                const Vec um = weno5_left(alg, sm, u.dy);
                const Vec up = weno5_left(alg, sp, u.dy);
                Vec fj = flux(1, um, up, j);
                if (!all_finite(fj))
                    throw NonFiniteError("non-finite interface flux", -1, 1, j);
                f[static_cast<size_t>(j)] = fj;
            }
            const double inv = 1.0 / u.dy;
            for (int j = 0; j < u.ny; ++j) {
                double* r = rate.at(i, j);
                const Vec& fl = f[static_cast<size_t>(j)];
                const Vec& fr = f[static_cast<size_t>(j + 1)];
                for (int c = 0; c < p; ++c) r[c] -= inv * (fr[c] - fl[c]);
            }
        }
    }
    return rate;
}

inline GridField lincomb(double a, const GridField& x, double b, const GridField& y) {
    GridField r = x;
    for (size_t i = 0; i < r.data.size(); ++i) r.data[i] = a * x.data[i] + b * y.data[i];
    return r;
}
inline GridField lincomb(double a, const GridField& x, double b, const GridField& y, double c,
                         const GridField& z) {
    GridField r = x;
    for (size_t i = 0; i < r.data.size(); ++i)
        r.data[i] = a * x.data[i] + b * y.data[i] + c * z.data[i];
    return r;
}

// double overloads so scalar ODEs run through the same stepper
inline double lincomb(double a, double x, double b, double y) { return a * x + b * y; }
inline double lincomb(double a, double x, double b, double y, double c, double z) {
    return a * x + b * y + c * z;
}

/// One TVDRK3 update:
///   z1 = z + dt L(z)
///   z2 = 3/4 z + 1/4 z1 + 1/4 dt L(z1)
///   z' = 1/3 z + 2/3 z2 + 2/3 dt L(z2)
template <class State, class Rhs>
State tvdrk3_step(const State& z, Rhs&& rhs, double dt) {
    State z1 = lincomb(1.0, z, dt, rhs(z));
    State z2 = lincomb(0.75, z, 0.25, z1, 0.25 * dt, rhs(z1));
    return lincomb(1.0 / 3.0, z, 2.0 / 3.0, z2, 2.0 / 3.0 * dt, rhs(z2));
}

/// Rolls the learned law forward; returns steps+1 snapshots including u0.
inline std::vector<GridField> rollout(const FluxNets& nets, const GridField& u0, int steps,
                                      int epoch, double dt) {
    NeuralFlux flux{&nets, epoch, {u0.dx, u0.d == 2 ? u0.dy : u0.dx}, dt};
    std::vector<GridField> traj;
    traj.reserve(static_cast<size_t>(steps) + 1);
    traj.push_back(u0);
    GridField u = u0;
    for (int s = 1; s <= steps; ++s) {
        auto rhs = [&](const GridField& z) {
            GridField zz = z;
            return semidiscrete_rhs(zz, flux);
        };
        try {
            u = tvdrk3_step(u, rhs, dt);
        } catch (const NonFiniteError& e) {
            throw NonFiniteError(e.what(), s, e.axis, e.interface_index);
        }
        if (!u.interior_finite()) throw NonFiniteError("non-finite state after step", s, -1, -1);
        traj.push_back(u);
    }
    return traj;
}

}  // namespace symclaw
