#pragma once

#include <array>
#include <cmath>

#include "symclaw/common.hpp"

namespace symclaw {

/// Forward-mode value with K tangent components, used to push seed directions
/// through the reverse sweep of a tape (forward-over-reverse Hessians).
template <int K>
struct Dual {
    double v = 0;
    std::array<double, K> t{};

    Dual() = default;
    Dual(double v_) : v(v_) {}  // NOLINT: implicit by design, constants promote

    static Dual seeded(double v_, int dir) {
        Dual d(v_);
        d.t[static_cast<size_t>(dir)] = 1.0;
        return d;
    }

    Dual& operator+=(const Dual& o) {
        v += o.v;
        for (int i = 0; i < K; ++i) t[static_cast<size_t>(i)] += o.t[static_cast<size_t>(i)];
        return *this;
    }
    friend Dual operator+(Dual a, const Dual& b) { return a += b; }
    friend Dual operator-(Dual a, const Dual& b) {
        a.v -= b.v;
        for (int i = 0; i < K; ++i) a.t[static_cast<size_t>(i)] -= b.t[static_cast<size_t>(i)];
        return a;
    }
    friend Dual operator-(Dual a) {
        a.v = -a.v;
        for (int i = 0; i < K; ++i) a.t[static_cast<size_t>(i)] = -a.t[static_cast<size_t>(i)];
        return a;
    }
    friend Dual operator*(const Dual& a, const Dual& b) {
        Dual r(a.v * b.v);
        for (int i = 0; i < K; ++i)
            r.t[static_cast<size_t>(i)] =
                a.t[static_cast<size_t>(i)] * b.v + a.v * b.t[static_cast<size_t>(i)];
        return r;
    }
    friend Dual operator/(const Dual& a, const Dual& b) {
        const double inv = 1.0 / b.v;
        Dual r(a.v * inv);
        for (int i = 0; i < K; ++i)
            r.t[static_cast<size_t>(i)] =
                (a.t[static_cast<size_t>(i)] - r.v * b.t[static_cast<size_t>(i)]) * inv;
        return r;
    }
};

template <int K>
Dual<K> chain(double fv, double dfv, const Dual<K>& x) {
    Dual<K> r(fv);
    for (int i = 0; i < K; ++i) r.t[static_cast<size_t>(i)] = dfv * x.t[static_cast<size_t>(i)];
    return r;
}

template <int K>
Dual<K> tanh(const Dual<K>& x) {
    const double y = std::tanh(x.v);
    return chain(y, 1.0 - y * y, x);
}
template <int K>
Dual<K> softplus(const Dual<K>& x) {
    return chain(softplus_fn(x.v), sigmoid_fn(x.v), x);
}
template <int K>
Dual<K> sigmoid(const Dual<K>& x) {
    const double s = sigmoid_fn(x.v);
    return chain(s, s * (1.0 - s), x);
}
template <int K>
Dual<K> sqrt(const Dual<K>& x) {
    const double y = std::sqrt(x.v);
    return chain(y, 0.5 / y, x);
}
template <int K>
Dual<K> recip(const Dual<K>& x) {
    const double y = 1.0 / x.v;
    return chain(y, -y * y, x);
}
template <int K>
Dual<K> square(const Dual<K>& x) {
    return chain(x.v * x.v, 2.0 * x.v, x);
}
template <int K>
Dual<K> max0(const Dual<K>& x) {
    return x.v > 0 ? x : Dual<K>(0.0);
}
template <int K>
Dual<K> habs(const Dual<K>& x) {
    return chain(std::abs(x.v), x.v >= 0 ? 1.0 : -1.0, x);
}
template <int K>
Dual<K> huber(const Dual<K>& x) {
    return chain(huber_fn(x.v), huber_dfn(x.v), x);
}
template <int K>
Dual<K> clamp1(const Dual<K>& x) {
    const double in_band = (x.v > -1.0 && x.v < 1.0) ? 1.0 : 0.0;
    return chain(huber_dfn(x.v), in_band, x);
}

// Scalar (double) overloads so templated kernels compile for both types.
inline double chain(double fv, double, double) { return fv; }
inline double recip(double x) { return 1.0 / x; }
inline double square(double x) { return x * x; }
inline double max0(double x) { return x > 0 ? x : 0.0; }
inline double habs(double x) { return std::abs(x); }
inline double softplus(double x) { return softplus_fn(x); }
inline double sigmoid(double x) { return sigmoid_fn(x); }
inline double huber(double x) { return huber_fn(x); }
inline double clamp1(double x) { return huber_dfn(x); }

}  // namespace symclaw
