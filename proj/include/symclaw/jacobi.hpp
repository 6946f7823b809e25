#pragma once

#include <algorithm>
#include <cmath>

#include "symclaw/common.hpp"

namespace symclaw {

struct EigSym {
    Vec values;   // ascending
    Mat vectors;  // columns are eigenvectors, vectors(:,k) <-> values[k]
};

namespace detail {
inline double off_diag_norm(const Mat& a) {
    double s = 0;
    for (int i = 0; i < a.n; ++i)
        for (int j = 0; j < a.n; ++j)
            if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
}
inline double frob_norm(const Mat& a) {
    double s = 0;
    for (int i = 0; i < a.n * a.n; ++i) s += a.m[static_cast<size_t>(i)] * a.m[static_cast<size_t>(i)];
    return std::sqrt(s);
}
}  // namespace detail

/// Cyclic Jacobi eigensolver for small symmetric matrices.
/// Sweeps until the off-diagonal norm falls below 1e-14 * ||M||_F, capped at
/// 30 sweeps. Input asymmetry is removed by averaging with the transpose.
inline EigSym jacobi_eigensystem(const Mat& m_in) {
    const int n = m_in.n;
    for (int i = 0; i < n * n; ++i)
        if (!std::isfinite(m_in.m[static_cast<size_t>(i)]))
            throw Error("jacobi_eigensystem: non-finite matrix entry");
    Mat a = symmetrize(m_in);
    Mat q = Mat::identity(n);
    const double scale = detail::frob_norm(a);
    const double tol = 1e-14 * (scale > 0 ? scale : 1.0);

    for (int sweep = 0; sweep < 30; ++sweep) {
        if (detail::off_diag_norm(a) <= tol) break;
        for (int p = 0; p < n - 1; ++p) {
            for (int r = p + 1; r < n; ++r) {
                const double apq = a(p, r);
                if (apq == 0.0) continue;
                const double app = a(p, p);
                const double aqq = a(r, r);
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, r);
                    a(k, p) = c * akp - s * akq;
                    a(k, r) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(r, k);
                    a(p, k) = c * apk - s * aqk;
                    a(r, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double qkp = q(k, p);
                    const double qkq = q(k, r);
                    q(k, p) = c * qkp - s * qkq;
                    q(k, r) = s * qkp + c * qkq;
                }
            }
        }
    }

    EigSym out;
    out.values = Vec(n);
    for (int i = 0; i < n; ++i) out.values[i] = a(i, i);
    out.vectors = q;
    // sort ascending, permuting columns alongside
    for (int i = 0; i < n - 1; ++i) {
        int k = i;
        for (int j = i + 1; j < n; ++j)
            if (out.values[j] < out.values[k]) k = j;
        if (k != i) {
            std::swap(out.values.v[static_cast<size_t>(i)], out.values.v[static_cast<size_t>(k)]);
            for (int r = 0; r < n; ++r) std::swap(out.vectors(r, i), out.vectors(r, k));
        }
    }
    return out;
}

/// Eigenvalues only, ascending.
inline Vec jacobi_eigenvalues(const Mat& m) { return jacobi_eigensystem(m).values; }

/// Spectral radius of B^{1/2} A B^{1/2} for symmetric A and symmetric PSD B.
/// Tiny negative eigenvalues of B (down to -1e-10) are clamped to zero before
/// taking the square root.
inline double wave_speed(const Mat& a, const Mat& b) {
    const int n = a.n;
    const EigSym eb = jacobi_eigensystem(b);
    Mat bh(n);  // B^{1/2} = Q sqrt(L) Q^T
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0;
            for (int k = 0; k < n; ++k) {
                const double lk = std::sqrt(std::max(eb.values[k], 0.0));
                s += eb.vectors(i, k) * lk * eb.vectors(j, k);
            }
            bh(i, j) = s;
        }
    const Mat m = bh * symmetrize(a) * bh;
    const Vec ev = jacobi_eigenvalues(m);
    double rho = 0;
    for (int i = 0; i < n; ++i) rho = std::max(rho, std::abs(ev[i]));
    return rho;
}

}  // namespace symclaw
