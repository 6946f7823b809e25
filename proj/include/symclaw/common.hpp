#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace symclaw {

/// Maximum number of conserved components supported by the small fixed-size
/// state types. All shipped problems have p <= 3.
inline constexpr int kMaxComps = 3;

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised when a rollout or flux evaluation produces a non-finite value.
/// Carries enough location information to find the offending interface.
struct NonFiniteError : Error {
    int step = -1;
    int axis = -1;
    int interface_index = -1;
    NonFiniteError(const std::string& msg, int step_, int axis_, int iface)
        : Error(msg), step(step_), axis(axis_), interface_index(iface) {}
};

/// Raised when the regularized entropy Hessian cannot be inverted.
struct SolveError : Error {
    int axis = -1;
    int interface_index = -1;
    SolveError(const std::string& msg, int axis_, int iface)
        : Error(msg), axis(axis_), interface_index(iface) {}
};

/// Fixed-capacity state vector (one value per conserved component).
struct Vec {
    std::array<double, kMaxComps> v{};
    int n = 0;

    Vec() = default;
    explicit Vec(int n_) : n(n_) {}
    Vec(std::initializer_list<double> xs) {
        n = static_cast<int>(xs.size());
        int i = 0;
        for (double x : xs) v[static_cast<size_t>(i++)] = x;
    }
    double& operator[](int i) { return v[static_cast<size_t>(i)]; }
    double operator[](int i) const { return v[static_cast<size_t>(i)]; }

    friend Vec operator+(Vec a, const Vec& b) {
        for (int i = 0; i < a.n; ++i) a[i] += b[i];
        return a;
    }
    friend Vec operator-(Vec a, const Vec& b) {
        for (int i = 0; i < a.n; ++i) a[i] -= b[i];
        return a;
    }
    friend Vec operator*(double s, Vec a) {
        for (int i = 0; i < a.n; ++i) a[i] *= s;
        return a;
    }
    Vec& operator+=(const Vec& b) {
        for (int i = 0; i < n; ++i) v[static_cast<size_t>(i)] += b[i];
        return *this;
    }
};

inline double dot(const Vec& a, const Vec& b) {
    double s = 0;
    for (int i = 0; i < a.n; ++i) s += a[i] * b[i];
    return s;
}

inline double norm_inf(const Vec& a) {
    double s = 0;
    for (int i = 0; i < a.n; ++i) s = std::max(s, std::abs(a[i]));
    return s;
}

inline double norm2_sq(const Vec& a) { return dot(a, a); }

inline bool all_finite(const Vec& a) {
    for (int i = 0; i < a.n; ++i)
        if (!std::isfinite(a[i])) return false;
    return true;
}

/// Fixed-capacity symmetric-friendly square matrix, row-major.
struct Mat {
    std::array<double, kMaxComps * kMaxComps> m{};
    int n = 0;

    Mat() = default;
    explicit Mat(int n_) : n(n_) {}
    double& operator()(int i, int j) { return m[static_cast<size_t>(i * n + j)]; }
    double operator()(int i, int j) const { return m[static_cast<size_t>(i * n + j)]; }

    static Mat identity(int n_) {
        Mat I(n_);
        for (int i = 0; i < n_; ++i) I(i, i) = 1.0;
        return I;
    }
    friend Mat operator+(Mat a, const Mat& b) {
        for (int i = 0; i < a.n * a.n; ++i) a.m[static_cast<size_t>(i)] += b.m[static_cast<size_t>(i)];
        return a;
    }
    friend Mat operator*(const Mat& a, const Mat& b) {
        Mat c(a.n);
        for (int i = 0; i < a.n; ++i)
            for (int k = 0; k < a.n; ++k) {
                double aik = a(i, k);
                for (int j = 0; j < a.n; ++j) c(i, j) += aik * b(k, j);
            }
        return c;
    }
};

inline Vec matvec(const Mat& a, const Vec& x) {
    Vec y(a.n);
    for (int i = 0; i < a.n; ++i) {
        double s = 0;
        for (int j = 0; j < a.n; ++j) s += a(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

inline Mat symmetrize(const Mat& a) {
    Mat s(a.n);
    for (int i = 0; i < a.n; ++i)
        for (int j = 0; j < a.n; ++j) s(i, j) = 0.5 * (a(i, j) + a(j, i));
    return s;
}

inline double max_abs_asymmetry(const Mat& a) {
    double s = 0;
    for (int i = 0; i < a.n; ++i)
        for (int j = 0; j < a.n; ++j) s = std::max(s, std::abs(a(i, j) - a(j, i)));
    return s;
}

/// Solves the small symmetric system a x = rhs by LDL^T factorization.
/// Returns false when a pivot degenerates (singular matrix).
inline bool solve_sym(const Mat& a, const Vec& rhs, Vec& x) {
    const int n = a.n;
    Mat l(n);
    std::array<double, kMaxComps> d{};
    double scale = 0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) scale = std::max(scale, std::abs(a(i, j)));
    const double tiny = 1e-300 + scale * 1e-150;
    for (int j = 0; j < n; ++j) {
        double dj = a(j, j);
        for (int k = 0; k < j; ++k) dj -= l(j, k) * l(j, k) * d[static_cast<size_t>(k)];
        if (std::abs(dj) <= tiny || !std::isfinite(dj)) return false;
        d[static_cast<size_t>(j)] = dj;
        l(j, j) = 1.0;
        for (int i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k) * d[static_cast<size_t>(k)];
            l(i, j) = s / dj;
        }
    }
    // forward, diagonal, backward sweeps
    Vec y(n);
    for (int i = 0; i < n; ++i) {
        double s = rhs[i];
        for (int k = 0; k < i; ++k) s -= l(i, k) * y[k];
        y[i] = s;
    }
    for (int i = 0; i < n; ++i) y[i] /= d[static_cast<size_t>(i)];
    x = Vec(n);
    for (int i = n - 1; i >= 0; --i) {
        double s = y[i];
        for (int k = i + 1; k < n; ++k) s -= l(k, i) * x[k];
        x[i] = s;
    }
    return true;
}

// Activation kernels shared by the fast evaluators and the tape so both
// paths agree to rounding.
inline double softplus_fn(double x) {
    if (x > 34.0) return x;
    if (x < -34.0) return std::exp(x);
    return std::log1p(std::exp(x));
}
inline double sigmoid_fn(double x) {
    if (x >= 0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}
/// Huber reparameterization used for the quadratic input weights: nonnegative,
/// C^1, with derivative clamp(x, -1, 1).
inline double huber_fn(double x) {
    const double ax = std::abs(x);
    return ax > 1.0 ? ax - 0.5 : 0.5 * x * x;
}
inline double huber_dfn(double x) { return std::clamp(x, -1.0, 1.0); }

}  // namespace symclaw
