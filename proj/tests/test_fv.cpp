#include <catch2/catch_amalgamated.hpp>

#include "support/oracles.hpp"
#include "symclaw/dataset.hpp"
#include "symclaw/fv.hpp"
#include "symclaw/problems.hpp"
#include "symclaw/rng.hpp"

using namespace symclaw;

TEST_CASE("weno5: constant and linear data reproduce exactly") {
    const double dx = 0.1;
    for (double c : {0.0, 1.7, -2.3}) {
        Vec s[5];
        for (auto& v : s) v = Vec{c};
        const Vec r = weno5_reconstruct(s, dx);
        REQUIRE(std::abs(r[0] - c) < 1e-14 * std::max(1.0, std::abs(c)));
    }
    // u_j = j dx: every candidate polynomial evaluates to (j + 1/2) dx
    for (int j : {0, 3, -2}) {
        Vec s[5];
        for (int k = 0; k < 5; ++k) s[k] = Vec{(j - 2 + k) * dx};
        // direct candidate evaluation (independent arithmetic)
        const double p0 = (1.0 / 3) * s[0][0] - (7.0 / 6) * s[1][0] + (11.0 / 6) * s[2][0];
        const double p1 = -(1.0 / 6) * s[1][0] + (5.0 / 6) * s[2][0] + (1.0 / 3) * s[3][0];
        const double p2 = (1.0 / 3) * s[2][0] + (5.0 / 6) * s[3][0] - (1.0 / 6) * s[4][0];
        const double exact = (j + 0.5) * dx;
        REQUIRE(std::abs(p0 - exact) < 1e-13);
        REQUIRE(std::abs(p1 - exact) < 1e-13);
        REQUIRE(std::abs(p2 - exact) < 1e-13);
        const Vec r = weno5_reconstruct(s, dx);
        REQUIRE(std::abs(r[0] - exact) < 1e-13);
    }
}

TEST_CASE("weno5: step data stays bounded and leans on the smooth substencil") {
    const double dx = 0.1;
    Vec s[5] = {Vec{0.0}, Vec{0.0}, Vec{0.0}, Vec{1.0}, Vec{1.0}};
    const Vec r = weno5_reconstruct(s, dx);
    REQUIRE(r[0] >= 0.0);
    REQUIRE(r[0] <= 1.0);
    // direct evaluation of the weight formulas
    const double p0 = 0.0, p1 = 1.0 / 3.0, p2 = 2.0 / 3.0;
    const double linear_blend = 0.1 * p0 + 0.6 * p1 + 0.3 * p2;
    REQUIRE(std::abs(r[0] - p0) < std::abs(linear_blend - p0));
}

TEST_CASE("ghost filling: periodic wrap, frozen dirichlet, idempotence") {
    GridField f = GridField::make1d(8, 1, 0.5);
    for (int i = 0; i < 8; ++i) f.at(i)[0] = i;
    f.bcx.kind = BoundarySpec::kPeriodic;
    fill_ghosts(f);
    REQUIRE(f.at(-1)[0] == 7.0);
    REQUIRE(f.at(-3)[0] == 5.0);
    REQUIRE(f.at(8)[0] == 0.0);
    REQUIRE(f.at(10)[0] == 2.0);

    GridField g = GridField::make1d(8, 2, 0.5);
    g.bcx.kind = BoundarySpec::kDirichlet;
    g.bcx.lo = {3.0, -1.0};
    g.bcx.hi = {5.0, 2.0};
    fill_ghosts(g);
    for (int k = 1; k <= 3; ++k) {
        REQUIRE(g.at(-k)[0] == 3.0);
        REQUIRE(g.at(-k)[1] == -1.0);
        REQUIRE(g.at(7 + k)[0] == 5.0);
        REQUIRE(g.at(7 + k)[1] == 2.0);
    }
    const std::vector<double> snap = g.data;
    fill_ghosts(g);
    REQUIRE(g.data == snap);
}

TEST_CASE("constant fields are exact steady states of the learned law") {
    Rng rng(44);
    for (int rep = 0; rep < 5; ++rep) {
        FluxNets nets = FluxNets::make(1, 1, {12}, {12, 12});
        init_params(nets, rng.next_u64());
        GridField u = GridField::make1d(16, 1, 0.1);
        const double c = rng.uniform(-1, 1);
        for (int i = 0; i < 16; ++i) u.at(i)[0] = c;
        NeuralFlux flux{&nets, 1, {0.1, 0.1}, 0.01};
        GridField rate = semidiscrete_rhs(u, flux);
        for (int i = 0; i < 16; ++i) REQUIRE(rate.at(i)[0] == 0.0);
    }
    // 2D as well
    FluxNets nets2 = FluxNets::make(1, 2, {8}, {8});
    init_params(nets2, 5);
    GridField u2 = GridField::make2d(8, 8, 1, 0.125, 0.125);
    for (int j = 0; j < 8; ++j)
        for (int i = 0; i < 8; ++i) u2.at(i, j)[0] = 0.7;
    NeuralFlux flux2{&nets2, 1, {0.125, 0.125}, 0.01};
    GridField rate2 = semidiscrete_rhs(u2, flux2);
    for (int j = 0; j < 8; ++j)
        for (int i = 0; i < 8; ++i) REQUIRE(rate2.at(i, j)[0] == 0.0);
}

TEST_CASE("periodic rates telescope to zero total") {
    Rng rng(3);
    FluxNets nets = FluxNets::make(2, 1, {12}, {12, 12});
    init_params(nets, 8);
    GridField u = GridField::make1d(32, 2, 2 * kPi / 32);
    for (int i = 0; i < 32; ++i) {
        u.at(i)[0] = 1.0 + 0.3 * std::sin(i * u.dx);
        u.at(i)[1] = 0.2 * std::cos(i * u.dx);
    }
    NeuralFlux flux{&nets, 1, {u.dx, u.dx}, 0.01};
    GridField rate = semidiscrete_rhs(u, flux);
    Vec total(2);
    for (int i = 0; i < 32; ++i)
        for (int c = 0; c < 2; ++c) total[c] += rate.at(i)[c];
    REQUIRE(norm_inf(total) < 1e-13);
}

TEST_CASE("known-flux mode: smooth Burgers rate converges at fifth order") {
    const Problem pr = get_problem("burgers1d");
    auto err_at = [&](int n) {
        GridField u = GridField::make1d(n, 1, 2 * kPi / n);
        for (int i = 0; i < n; ++i) {
            const double xl = i * u.dx, xr = xl + u.dx;
            u.at(i)[0] = (std::cos(xl) - std::cos(xr)) / u.dx + 1.5;  // positive => upwind bias
        }
        GridField rate = semidiscrete_rhs(u, KnownFlux{&pr});
        double err = 0;
        for (int i = 0; i < n; ++i) {
            const double xl = i * u.dx, xr = xl + u.dx;
            auto pointflux = [](double x) {
                const double v = std::sin(x) + 1.5;
                return 0.5 * v * v;
            };
            const double exact = -(pointflux(xr) - pointflux(xl)) / u.dx;
            err += std::abs(rate.at(i)[0] - exact) * u.dx;
        }
        return err;
    };
    const double e0 = err_at(64), e1 = err_at(128), e2 = err_at(256);
    REQUIRE(std::log2(e0 / e1) >= 4.5);
    REQUIRE(std::log2(e1 / e2) >= 4.5);
}

TEST_CASE("tvdrk3: fixed point, linear stability polynomial, third order") {
    GridField z = GridField::make1d(8, 1, 0.1);
    for (int i = 0; i < 8; ++i) z.at(i)[0] = std::sin(i);
    auto zero_rhs = [](const GridField& f) {
        GridField r = f;
        std::fill(r.data.begin(), r.data.end(), 0.0);
        return r;
    };
    const GridField z2 = tvdrk3_step(z, zero_rhs, 0.1);
    for (int i = 0; i < 8; ++i) REQUIRE(z2.at(i)[0] == z.at(i)[0]);

    // z' = -z for one step of dt = 0.1 equals the stage polynomial
    // 1 + x + x^2/2 + x^3/6 at x = -0.1
    const double x = -0.1;
    const double expected = 1.0 + x + x * x / 2.0 + x * x * x / 6.0;
    const double got = tvdrk3_step(1.0, [](double y) { return -y; }, 0.1);
    REQUIRE(std::abs(got - expected) < 1e-15);

    auto ode_error = [&](double dt) {
        double y = 1.0;
        const int steps = static_cast<int>(std::llround(1.0 / dt));
        for (int s = 0; s < steps; ++s) y = tvdrk3_step(y, [](double w) { return -w; }, dt);
        return std::abs(y - std::exp(-1.0));
    };
    const double t0 = ode_error(0.1), t1 = ode_error(0.05), t2 = ode_error(0.025);
    REQUIRE(std::abs(std::log2(t0 / t1) - 3.0) <= 0.1);
    REQUIRE(std::abs(std::log2(t1 / t2) - 3.0) <= 0.1);
}

TEST_CASE("discrete conservation under full steps with arbitrary parameters") {
    Rng rng(21);
    for (int rep = 0; rep < 3; ++rep) {
        FluxNets nets = FluxNets::make(1, 1, {12}, {12, 12});
        init_params(nets, rng.next_u64());
        const Problem pr = get_problem("burgers1d");
        Rng icrng(rep + 100);
        GridField u = pr.sample_ic(icrng, 32);
        const double dt = 0.005;
        NeuralFlux flux{&nets, 1, {u.dx, u.dx}, dt};
        const Vec before = u.conserved_total();
        for (int s = 0; s < 20; ++s) {
            auto rhs = [&](const GridField& f) {
                GridField ff = f;
                return semidiscrete_rhs(ff, flux);
            };
            u = tvdrk3_step(u, rhs, dt);
            REQUIRE(std::abs(u.conserved_total()[0] - before[0]) < 1e-13);
        }
    }
}

TEST_CASE("rollout edge cases") {
    const Problem pr = get_problem("burgers1d");
    FluxNets nets = make_nets_for(pr, 0);
    GridField ic = pr.test_ic(16);

    // zero steps: just the initial state
    const auto traj0 = rollout(nets, ic, 0, 1, 0.005);
    REQUIRE(traj0.size() == 1);

    // zero networks on a constant state: exactly constant trajectory
    FluxNets zero = FluxNets::make(1, 1, {8}, {8});
    GridField cst = GridField::make1d(16, 1, ic.dx);
    for (int i = 0; i < 16; ++i) cst.at(i)[0] = 0.42;
    const auto traj = rollout(zero, cst, 5, 1, 0.005);
    for (const GridField& f : traj)
        for (int i = 0; i < 16; ++i) REQUIRE(f.at(i)[0] == 0.42);
}

TEST_CASE("2d semidiscrete rate sums to zero on periodic grids") {
    FluxNets nets = FluxNets::make(1, 2, {8}, {8, 8});
    init_params(nets, 15);
    const Problem pr = get_problem("burgers2d");
    Rng rng(2);
    GridField u = pr.sample_ic(rng, 16, 16);
    NeuralFlux flux{&nets, 1, {u.dx, u.dy}, 0.001};
    GridField rate = semidiscrete_rhs(u, flux);
    double total = 0;
    for (int j = 0; j < 16; ++j)
        for (int i = 0; i < 16; ++i) total += rate.at(i, j)[0];
    REQUIRE(std::abs(total) < 1e-12);
}
