#pragma once

// Structural invariant suites: entropy conservation, hyperbolicity,
// conservation under rollout, discretization orders, stabilizer behavior.
// Used by the `selftest` command and the acceptance runner.

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "symclaw/dataset.hpp"
#include "symclaw/flux.hpp"
#include "symclaw/fv.hpp"
#include "symclaw/metrics.hpp"
#include "symclaw/problems.hpp"

namespace symclaw::checks {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

namespace detail {

inline Vec rand_state(Rng& rng, int p, double lo = -2, double hi = 2) {
    Vec u(p);
    for (int i = 0; i < p; ++i) u[i] = rng.uniform(lo, hi);
    return u;
}

inline FluxNets rand_nets(Rng& rng, int p) {
    FluxNets n = FluxNets::make(p, 1, {16}, {16, 16});
    init_params(n, rng.next_u64());
    return n;
}

/// Spectral radius by power iteration on M^2 (independent of the Jacobi path).
inline double power_rho(const Mat& m, Rng& rng, int max_iter = 200000) {
    const Mat m2 = m * m;
    Vec y(m.n);
    for (int i = 0; i < m.n; ++i) y[i] = rng.uniform(0.1, 1.0);
    double est = 0;
    int stable = 0;
    for (int it = 0; it < max_iter; ++it) {
        const Vec z = matvec(m2, y);
        const double nz = std::sqrt(norm2_sq(z));
        const double ny = std::sqrt(norm2_sq(y));
        if (nz == 0.0) return 0.0;
        const double next = nz / ny;
        y = (1.0 / nz) * z;
        if (std::abs(next - est) <= 1e-12 * std::max(1.0, next)) {
            if (++stable >= 3) return std::sqrt(next);
        } else {
            stable = 0;
        }
        est = next;
    }
    return std::sqrt(est);
}

}  // namespace detail

/// [[v]]^T f* = [[phi]] over random networks and state pairs, p in {1,2,3}.
inline CheckResult entropy_conservation_identity(int instances = 10000, uint64_t seed = 101) {
    Rng rng(seed);
    double worst = 0;
    for (int k = 0; k < instances; ++k) {
        const int p = 1 + k % 3;
        const FluxNets nets = detail::rand_nets(rng, p);
        const Vec um = detail::rand_state(rng, p);
        const Vec up = detail::rand_state(rng, p);
        const FluxContext c = make_flux_context(nets, 0, um, up, 1, 1.0, 1.0);
        auto flux_fn = [&](const Vec& u) {
            return flux_in_entropy_vars(nets.phi[0], entropy_variables(nets.eta, u));
        };
        auto pot_fn = [&](const Vec& u) {
            return fcnn_eval(nets.phi[0], entropy_variables(nets.eta, u));
        };
        const Vec fstar = entropy_conservative_flux(c, flux_fn, pot_fn);
        const double jphi = pot_fn(up) - pot_fn(um);
        const double resid = std::abs(dot(c.jump_v, fstar) - jphi) / (1.0 + std::abs(jphi));
        worst = std::max(worst, resid);
    }
    std::ostringstream os;
    os << "max residual " << worst << " over " << instances << " instances";
    return {"entropy-conservation identity", worst <= 1e-12, os.str()};
}

/// (a) entropy Hessian PSD; (b) spectral radius via the symmetric similar
/// matrix agrees with power iteration on the nonsymmetric product.
inline CheckResult hyperbolicity(int instances = 1000, uint64_t seed = 202) {
    Rng rng(seed);
    double min_eig = 0, worst_rel = 0;
    for (int k = 0; k < instances; ++k) {
        const int p = 1 + k % 3;
        const FluxNets nets = detail::rand_nets(rng, p);
        const Vec u = detail::rand_state(rng, p);
        const Mat b = icnn_hess(nets.eta, u).hess;
        const Vec be = jacobi_eigenvalues(b);
        min_eig = std::min(min_eig, be[0]);
        const Vec v = entropy_variables(nets.eta, u);
        const Mat a = fcnn_hess(nets.phi[0], v).hess;
        const double rho_sym = wave_speed(a, b);
        const double rho_pi = detail::power_rho(a * b, rng);
        const double rel = std::abs(rho_sym - rho_pi) / std::max(rho_sym, 1e-12);
        if (rho_sym > 1e-10) worst_rel = std::max(worst_rel, rel);
    }
    std::ostringstream os;
    os << "min entropy-Hessian eigenvalue " << min_eig << ", worst spectral-radius mismatch "
       << worst_rel;
    return {"hyperbolicity by construction", min_eig >= -1e-10 && worst_rel <= 1e-6, os.str()};
}

/// Untrained random-parameter rollout on a periodic grid: the conservation
/// remainder stays at rounding level at every step.
inline CheckResult structural_conservation(int n = 128, int steps = 200, uint64_t seed = 303) {
    const Problem pr = get_problem("burgers1d");
    FluxNets nets = make_nets_for(pr, seed);
    Rng rng(seed + 1);
    const GridField ic = pr.sample_ic(rng, n);
    const double dt = 0.005;
    const std::vector<GridField> traj = rollout(nets, ic, steps, 0, dt);
    NeuralFlux flux{&nets, 0, {ic.dx, ic.dx}, dt};
    const std::vector<Vec> rem = conservation_remainder(traj, flux, dt);
    double worst = 0;
    for (const Vec& r : rem) worst = std::max(worst, norm_inf(r));
    std::ostringstream os;
    os << "max remainder " << worst << " over " << steps << " steps";
    return {"structural conservation", worst <= 1e-12, os.str()};
}

/// Observed spatial order of the reconstruction-flux pipeline on smooth
/// linear advection, and temporal order of the integrator on z' = -z.
inline CheckResult discretization_orders() {
    struct AdvectionFlux {
        Vec operator()(int, const Vec& um, const Vec& up, int) const {
            Vec f(1);
            f[0] = 0.5 * (um[0] + up[0]) - 0.5 * (up[0] - um[0]);  // upwind for speed 1
            return f;
        }
    };
    auto rhs_error = [&](int n) {
        GridField u = GridField::make1d(n, 1, 2 * kPi / n);
        for (int i = 0; i < n; ++i) {
            const double xl = i * u.dx, xr = xl + u.dx;
            u.at(i)[0] = (std::cos(xl) - std::cos(xr)) / u.dx;  // exact cell average of sin
        }
        GridField rate = semidiscrete_rhs(u, AdvectionFlux{});
        double err = 0;
        for (int i = 0; i < n; ++i) {
            const double xl = i * u.dx, xr = xl + u.dx;
            const double exact = -(std::sin(xr) - std::sin(xl)) / u.dx;
            err += std::abs(rate.at(i)[0] - exact) * u.dx;
        }
        return err;
    };
    const double e0 = rhs_error(64), e1 = rhs_error(128), e2 = rhs_error(256);
    const double ord_a = std::log2(e0 / e1);
    const double ord_b = std::log2(e1 / e2);

    auto ode_error = [&](double dt) {
        double z = 1.0;
        const int steps = static_cast<int>(std::llround(1.0 / dt));
        for (int s = 0; s < steps; ++s)
            z = tvdrk3_step(z, [](double y) { return -y; }, dt);
        return std::abs(z - std::exp(-1.0));
    };
    const double t0 = ode_error(0.1), t1 = ode_error(0.05), t2 = ode_error(0.025);
    const double tord_a = std::log2(t0 / t1);
    const double tord_b = std::log2(t1 / t2);

    std::ostringstream os;
    os << "spatial orders " << ord_a << ", " << ord_b << "; temporal orders " << tord_a << ", "
       << tord_b;
    const bool pass = ord_a >= 4.5 && ord_b >= 4.5 && std::abs(tord_a - 3.0) <= 0.1 &&
                      std::abs(tord_b - 3.0) <= 0.1;
    return {"discretization orders", pass, os.str()};
}

/// Exact unit behavior of the three training stabilizers.
inline CheckResult stabilizer_units() {
    bool pass = true;
    std::ostringstream os;
    Mat b(2);
    b(0, 0) = 0.3;
    b(0, 1) = -0.1;
    b(1, 0) = -0.1;
    b(1, 1) = 0.7;
    const Mat r1 = regularize_hessian(b, 1);
    const Mat r3 = regularize_hessian(b, 3);
    pass &= r1(0, 0) == b(0, 0) + 1.0 && r1(1, 1) == b(1, 1) + 1.0 && r1(0, 1) == b(0, 1);
    pass &= r3(0, 0) == b(0, 0) + 0.01 && r3(1, 1) == b(1, 1) + 0.01;
    pass &= hessian_reg_eps(1) == 1.0 && hessian_reg_eps(3) == 0.01 && hessian_reg_eps(0) == 0.0;

    pass &= clip_wave_speed(0.5, 1.0, 1.0) == 0.5;
    pass &= clip_wave_speed(5.0, 1.0, 1.0) == 1.0;
    const double dxdt = 2.5;
    pass &= clip_wave_speed(dxdt, 5.0, 2.0) == dxdt;

    // fallback triggers exactly when ||B^-1 [[v]]||_inf > 2 ||[[u]]||_inf
    const Mat eye = Mat::identity(2);
    Vec ju{0.5, -1.0};
    Vec jv_keep{2.0, 1.0};  // inf-norm exactly 2 = 2*1
    const Vec w_keep = stabilized_jump_solve(eye, jv_keep, ju);
    pass &= w_keep[0] == jv_keep[0] && w_keep[1] == jv_keep[1];
    Vec jv_fall{std::nextafter(2.0, 3.0), 1.0};
    const Vec w_fall = stabilized_jump_solve(eye, jv_fall, ju);
    pass &= w_fall[0] == ju[0] && w_fall[1] == ju[1];

    os << (pass ? "all exact" : "mismatch");
    return {"stabilizer unit behavior", pass, os.str()};
}

inline std::vector<CheckResult> selftest_suite() {
    return {
        entropy_conservation_identity(2000),
        hyperbolicity(300),
        structural_conservation(64, 50),
        discretization_orders(),
        stabilizer_units(),
    };
}

}  // namespace symclaw::checks
