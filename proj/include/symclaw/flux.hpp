#pragma once

#include <cmath>
#include <functional>

#include "symclaw/common.hpp"
#include "symclaw/jacobi.hpp"
#include "symclaw/networks.hpp"

namespace symclaw {

/// Stabilizer i: epoch-dependent diagonal perturbation magnitude,
/// C1^{epoch-1} with C1 = 0.1. Computed through an integer power of ten so
/// epoch 1 gives exactly 1 and epoch 3 exactly 0.01. Epoch <= 0 selects
/// evaluation mode (no perturbation).
inline double hessian_reg_eps(int epoch) {
    if (epoch <= 0) return 0.0;
    const double denom = std::pow(10.0, static_cast<double>(epoch - 1));
    return std::isfinite(denom) ? 1.0 / denom : 0.0;
}

inline Mat regularize_hessian(const Mat& b, int epoch) {
    Mat r = b;
    const double eps = hessian_reg_eps(epoch);
    for (int i = 0; i < r.n; ++i) r(i, i) += eps;
    return r;
}

/// Stabilizer ii: solve B_reg w = [[v]] and keep w only while
/// ||w||_inf <= 2 ||[[u]]||_inf; otherwise fall back to [[u]], which reduces
/// the dissipation to local Lax-Friedrichs form.
inline Vec stabilized_jump_solve(const Mat& b_reg, const Vec& jump_v, const Vec& jump_u) {
    if (norm_inf(jump_v) == 0.0) return Vec(jump_v.n);
    Vec w;
    if (!solve_sym(b_reg, jump_v, w)) throw SolveError("entropy Hessian solve failed", -1, -1);
    if (norm_inf(w) <= 2.0 * norm_inf(jump_u)) return w;
    return jump_u;
}

/// Stabilizer iii: CFL safeguard, min(lambda, dx/dt) with C_CFL = 1.
inline double clip_wave_speed(double lambda, double dx, double dt) {
    return std::min(lambda, dx / dt);
}

/// Projection part of the entropy-conservative flux (the term added to the
/// arithmetic flux mean). Returns zero when the entropy-variable jump
/// degenerates below the scale-aware threshold.
inline Vec ec_project_term(double jump_phi, const Vec& jump_v, const Vec& sum_f, const Vec& v_bar) {
    const double q = norm2_sq(jump_v);
    const double eps = 1e-12 * (1.0 + norm2_sq(v_bar));
    Vec out(jump_v.n);
    if (q <= eps) return out;
    const double t = jump_phi - 0.5 * dot(jump_v, sum_f);
    const double s = t / q;
    for (int i = 0; i < out.n; ++i) out[i] = s * jump_v[i];
    return out;
}

/// Per-interface bundle of reconstructed states and derived quantities.
struct FluxContext {
    Vec u_minus, u_plus;
    Vec v_minus, v_plus;
    Vec u_bar, v_bar;
    Vec jump_v, jump_u;
    double lambda_max = 0.0;  // clipped
    int epoch = 0;            // <= 0: evaluation mode
    double dx = 1.0, dt = 1.0;
    static constexpr double kC1 = 0.1;
    static constexpr double kCD = 2.0;
    static constexpr double kCCfl = 1.0;
};

/// Assembles a FluxContext from the two reconstructed interface states.
inline FluxContext make_flux_context(const FluxNets& nets, int dir, const Vec& u_minus,
                                     const Vec& u_plus, int epoch, double dx, double dt) {
    FluxContext c;
    c.u_minus = u_minus;
    c.u_plus = u_plus;
    c.v_minus = entropy_variables(nets.eta, u_minus);
    c.v_plus = entropy_variables(nets.eta, u_plus);
    c.u_bar = 0.5 * (u_minus + u_plus);
    c.v_bar = 0.5 * (c.v_minus + c.v_plus);
    c.jump_v = c.v_plus - c.v_minus;
    c.jump_u = u_plus - u_minus;
    c.epoch = epoch;
    c.dx = dx;
    c.dt = dt;
    const Mat a = fcnn_hess(nets.phi[static_cast<size_t>(dir)], c.v_bar).hess;
    const Mat b = icnn_hess(nets.eta, c.u_bar).hess;
    c.lambda_max = clip_wave_speed(wave_speed(a, b), dx, dt);
    return c;
}

/// Entropy-conservative two-point flux: arithmetic flux mean plus the jump
/// projection enforcing [[v]]^T f* = [[phi]].
inline Vec entropy_conservative_flux(const FluxContext& c,
                                     const std::function<Vec(const Vec&)>& flux_fn,
                                     const std::function<double(const Vec&)>& potential_fn) {
    const Vec f_minus = flux_fn(c.u_minus);
    const Vec f_plus = flux_fn(c.u_plus);
    const Vec sum_f = f_minus + f_plus;
    const double jump_phi = potential_fn(c.u_plus) - potential_fn(c.u_minus);
    return 0.5 * sum_f + ec_project_term(jump_phi, c.jump_v, sum_f, c.v_bar);
}

/// Entropy-stable interface flux: entropy-conservative core minus the
/// Rusanov-type dissipation, with the three stabilizers composed in order.
inline Vec entropy_stable_flux(const FluxContext& c, const FluxNets& nets, int dir = 0,
                               int iface = -1) {
    const FcnnParams& phi = nets.phi[static_cast<size_t>(dir)];
    const EvalOut pm = fcnn_grad(phi, c.v_minus);
    const EvalOut pp = fcnn_grad(phi, c.v_plus);
    const Vec sum_f = pm.grad + pp.grad;
    const Vec fstar = 0.5 * sum_f + ec_project_term(pp.value - pm.value, c.jump_v, sum_f, c.v_bar);
    const Mat b = icnn_hess(nets.eta, c.u_bar).hess;
    const Mat b_reg = regularize_hessian(b, c.epoch);
    Vec w;
    try {
        w = stabilized_jump_solve(b_reg, c.jump_v, c.jump_u);
    } catch (const SolveError&) {
        throw SolveError("entropy Hessian solve failed", dir, iface);
    }
    return fstar + (-0.5 * c.lambda_max) * w;
}

/// Fast-path interface flux for rollouts: one call per interface.
struct NeuralFlux {
    const FluxNets* nets;
    int epoch = 0;  // <= 0: evaluation mode
    double dx[2] = {1.0, 1.0};
    double dt = 1.0;

    Vec operator()(int dir, const Vec& u_minus, const Vec& u_plus, int iface) const {
        const IcnnParams& eta = nets->eta;
        const FcnnParams& phi = nets->phi[static_cast<size_t>(dir)];
        const EvalOut em = icnn_grad(eta, u_minus);
        const EvalOut ep = icnn_grad(eta, u_plus);
        const Vec& v_minus = em.grad;
        const Vec& v_plus = ep.grad;
        const EvalOut pm = fcnn_grad(phi, v_minus);
        const EvalOut pp = fcnn_grad(phi, v_plus);
        const Vec u_bar = 0.5 * (u_minus + u_plus);
        const Vec v_bar = 0.5 * (v_minus + v_plus);
        const Vec jump_v = v_plus - v_minus;
        const Vec jump_u = u_plus - u_minus;
        const Vec sum_f = pm.grad + pp.grad;
        const Vec fstar =
            0.5 * sum_f + ec_project_term(pp.value - pm.value, jump_v, sum_f, v_bar);
        const Mat b = icnn_hess(eta, u_bar).hess;
        const Mat a = fcnn_hess(phi, v_bar).hess;
        const double lam = clip_wave_speed(wave_speed(a, b), dx[dir], dt);
        const Mat b_reg = regularize_hessian(b, epoch);
        Vec w;
        try {
            w = stabilized_jump_solve(b_reg, jump_v, jump_u);
        } catch (const SolveError&) {
            throw SolveError("entropy Hessian solve failed", dir, iface);
        }
        return fstar + (-0.5 * lam) * w;
    }

    /// Pointwise learned flux f(u) = grad_v phi(grad_u eta(u)); used by the
    /// conservation and entropy metrics at domain boundaries.
    Vec pointwise(int dir, const Vec& u) const {
        const Vec v = entropy_variables(nets->eta, u);
        return flux_in_entropy_vars(nets->phi[static_cast<size_t>(dir)], v);
    }
};

}  // namespace symclaw
