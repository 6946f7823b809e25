#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "support/oracles.hpp"
#include "symclaw/jacobi.hpp"
#include "symclaw/networks.hpp"
#include "symclaw/rng.hpp"
#include "symclaw/tape.hpp"

using namespace symclaw;

namespace {
Vec rand_state(Rng& rng, int p, double lo = -2, double hi = 2) {
    Vec u(p);
    for (int i = 0; i < p; ++i) u[i] = rng.uniform(lo, hi);
    return u;
}
}  // namespace

TEST_CASE("potential network evaluation basics") {
    FcnnParams f = FcnnParams::make(2, {8});
    REQUIRE(fcnn_eval(f, Vec{0.3, -0.2}) == 0.0);  // all-zero weights

    // single tanh unit, identity output weight
    FcnnParams g = FcnnParams::make(1, {1});
    g.W[0](0, 0) = 1.0;
    g.W[1](0, 0) = 1.0;
    for (double x : {-1.5, -0.2, 0.0, 0.7, 2.0})
        REQUIRE(fcnn_eval(g, Vec{x}) == std::tanh(x));

    REQUIRE_THROWS_AS(fcnn_eval(g, Vec{1.0, 2.0}), Error);
}

TEST_CASE("seed-0 evaluations match the straight-line reference") {
    FluxNets nets = FluxNets::make(2, 1, {16}, {16, 16});
    init_params(nets, 0);
    Rng rng(9);
    for (int rep = 0; rep < 50; ++rep) {
        const Vec v = rand_state(rng, 2);
        const std::vector<double> vv{v[0], v[1]};
        REQUIRE(oracles::rel_err(fcnn_eval(nets.phi[0], v),
                                 oracles::fcnn_reference(nets.phi[0], vv)) < 1e-13);
        REQUIRE(oracles::rel_err(icnn_eval(nets.eta, v), oracles::icnn_reference(nets.eta, vv)) <
                1e-13);
    }
    const Vec probe{0.1, 0.2};
    REQUIRE(oracles::rel_err(fcnn_eval(nets.phi[0], probe),
                             oracles::fcnn_reference(nets.phi[0], {0.1, 0.2})) < 1e-14);
}

TEST_CASE("huber reparameterization values") {
    REQUIRE(huber_fn(2.0) == 1.5);
    REQUIRE(huber_fn(-2.0) == 1.5);
    REQUIRE(huber_fn(0.5) == 0.125);
    REQUIRE(huber_fn(1.0) == 0.5);
}

TEST_CASE("quadratic entropy special case") {
    // zero hidden stack, huber(Ws) = 1/2 diagonal, Wl = 0: eta = 0.5 |u|^2
    IcnnParams e = IcnnParams::make(3, {8});
    std::fill(e.Ws.begin(), e.Ws.end(), 1.0);
    Rng rng(4);
    for (int rep = 0; rep < 20; ++rep) {
        const Vec u = rand_state(rng, 3);
        REQUIRE(std::abs(icnn_eval(e, u) - 0.5 * norm2_sq(u)) < 1e-15);
        const Vec v = entropy_variables(e, u);
        for (int i = 0; i < 3; ++i) REQUIRE(v[i] == u[i]);
    }
    // zero network: zero entropy variables, zero flux
    IcnnParams z = IcnnParams::make(2, {8});
    const Vec v0 = entropy_variables(z, Vec{0.4, -0.9});
    REQUIRE(v0[0] == 0.0);
    REQUIRE(v0[1] == 0.0);
    FcnnParams f0 = FcnnParams::make(2, {8});
    const Vec g0 = flux_in_entropy_vars(f0, Vec{0.4, -0.9});
    REQUIRE(g0[0] == 0.0);
    REQUIRE(g0[1] == 0.0);
}

TEST_CASE("convexity probe and gradient monotonicity") {
    Rng rng(12);
    for (int inst = 0; inst < 10; ++inst) {
        const int p = 1 + inst % 3;
        FluxNets nets = FluxNets::make(p, 1, {8}, {12, 12});
        init_params(nets, rng.next_u64());
        for (int rep = 0; rep < 100; ++rep) {
            const Vec u1 = rand_state(rng, p);
            const Vec u2 = rand_state(rng, p);
            const double lam = rng.uniform01();
            const Vec mid = lam * u1 + (1 - lam) * u2;
            REQUIRE(icnn_eval(nets.eta, mid) <=
                    lam * icnn_eval(nets.eta, u1) + (1 - lam) * icnn_eval(nets.eta, u2) + 1e-10);
            const Vec dv = entropy_variables(nets.eta, u1) - entropy_variables(nets.eta, u2);
            REQUIRE(dot(dv, u1 - u2) >= -1e-10);
        }
    }
}

TEST_CASE("projection clamps and is idempotent") {
    FluxNets nets = FluxNets::make(2, 1, {8}, {8});
    Rng rng(3);
    for (Dense* w : {&nets.eta.Wz[0], &nets.eta.Wout})
        for (double& x : w->a) x = rng.uniform(-1, 1);
    nets.eta.Wz[0](0, 0) = -0.3;
    nets.eta.Wz[0](1, 0) = 0.7;
    FluxNets once = nets;
    project_icnn(once);
    REQUIRE(once.eta.Wz[0](0, 0) == 0.0);
    REQUIRE(once.eta.Wz[0](1, 0) == 0.7);
    for (double x : once.eta.Wout.a) REQUIRE(x >= 0.0);
    FluxNets twice = once;
    project_icnn(twice);
    REQUIRE(flatten(twice) == flatten(once));
    // untouched parameters stay bit-identical
    REQUIRE(once.eta.Wx[0].a == nets.eta.Wx[0].a);
    REQUIRE(once.phi[0].W[0].a == nets.phi[0].W[0].a);
}

TEST_CASE("entropy Hessian is positive semidefinite for any projected parameters") {
    Rng rng(31);
    for (int inst = 0; inst < 60; ++inst) {
        const int p = 1 + inst % 3;
        FluxNets nets = FluxNets::make(p, 1, {8}, {12, 12});
        init_params(nets, rng.next_u64());
        // random post-init drift, then re-project as the optimizer would
        for (auto* buf : param_buffers(nets))
            for (double& x : *buf) x += rng.uniform(-0.5, 0.5);
        project_icnn(nets);
        for (int rep = 0; rep < 20; ++rep) {
            const Vec u = rand_state(rng, p, -3, 3);
            const Mat h = icnn_hess(nets.eta, u).hess;
            REQUIRE(jacobi_eigenvalues(h)[0] >= -1e-10);
        }
    }
}

TEST_CASE("potential Hessian is symmetric and the flux Jacobian spectrum is real") {
    Rng rng(77);
    for (int rep = 0; rep < 100; ++rep) {
        const int p = 1 + rep % 3;
        FluxNets nets = FluxNets::make(p, 1, {12}, {12, 12});
        init_params(nets, rng.next_u64());
        const Vec u = rand_state(rng, p);
        const Vec v = entropy_variables(nets.eta, u);

        // raw asymmetry of the analytic Hessian before symmetrization
        ad::ScalarFn fn = [&](ad::Tape& t, ad::NodeId x) {
            TapeNets tn = TapeNets::emit_leaves(t, nets, nullptr);
            return tn.fcnn_value(t, 0, x);
        };
        std::vector<double> vv(static_cast<size_t>(p));
        for (int i = 0; i < p; ++i) vv[static_cast<size_t>(i)] = v[i];
        ad::Tape t;
        const ad::NodeId in = t.input(p);
        t.set(in, vv);
        TapeNets tn = TapeNets::emit_leaves(t, nets, nullptr);
        const ad::NodeId g = tn.potential_and_flux(t, 0, in).second;
        Mat raw(p);
        for (int i = 0; i < p; ++i) {
            const ad::NodeId gi = t.slice(g, i, 1);
            const ad::NodeId row = t.grad_nodes(gi, std::span<const ad::NodeId>(&in, 1))[0];
            t.forward();
            const auto rv = t.val(row);
            for (int j = 0; j < p; ++j) raw(i, j) = rv[j];
        }
        REQUIRE(max_abs_asymmetry(raw) <= 1e-12);

        // product eigensystem: symmetric-similar route vs power iteration
        const Mat a = fcnn_hess(nets.phi[0], v).hess;
        const Mat b = icnn_hess(nets.eta, u).hess;
        const double rho_sym = wave_speed(a, b);
        const double rho_pi = oracles::power_iteration_rho(a * b);
        if (rho_sym > 1e-10)
            REQUIRE(std::abs(rho_sym - rho_pi) / rho_sym < 1e-6);
    }
}

TEST_CASE("initialization gives finite outputs and a well-conditioned entropy Hessian") {
    Rng rng(1);
    for (uint64_t seed : {0ULL, 1ULL, 42ULL}) {
        FluxNets nets = FluxNets::make(2, 1, {64, 64, 64}, {64, 64});
        init_params(nets, seed);
        for (int rep = 0; rep < 10; ++rep) {
            const Vec u = rand_state(rng, 2, -3, 3);
            REQUIRE(std::isfinite(icnn_eval(nets.eta, u)));
            REQUIRE(std::isfinite(fcnn_eval(nets.phi[0], u)));
            const Vec eig = jacobi_eigenvalues(icnn_hess(nets.eta, u).hess);
            REQUIRE(eig[0] >= -1e-10);
            REQUIRE(eig[eig.n - 1] >= 0.9);  // Ws = 1 keeps curvature near identity
        }
    }
}

TEST_CASE("fast evaluators agree with the tape") {
    Rng rng(8);
    for (int rep = 0; rep < 30; ++rep) {
        const int p = 1 + rep % 3;
        FluxNets nets = FluxNets::make(p, 1, {16}, {16, 16});
        init_params(nets, rng.next_u64());
        const Vec u = rand_state(rng, p);
        std::vector<double> uu(static_cast<size_t>(p));
        for (int i = 0; i < p; ++i) uu[static_cast<size_t>(i)] = u[i];

        ad::ScalarFn fn = [&](ad::Tape& t, ad::NodeId x) {
            TapeNets tn = TapeNets::emit_leaves(t, nets, nullptr);
            return tn.icnn_value(t, x);
        };
        const std::vector<double> gt = ad::grad(fn, uu);
        const Mat ht = ad::hessian(fn, uu);
        const EvalOut fast = icnn_hess(nets.eta, u);
        for (int i = 0; i < p; ++i)
            REQUIRE(std::abs(fast.grad[i] - gt[static_cast<size_t>(i)]) <
                    1e-13 * std::max(1.0, std::abs(gt[static_cast<size_t>(i)])));
        for (int i = 0; i < p; ++i)
            for (int j = 0; j < p; ++j)
                REQUIRE(std::abs(fast.hess(i, j) - ht(i, j)) <
                        1e-12 * std::max(1.0, std::abs(ht(i, j))));
    }
}

TEST_CASE("checkpoint round-trip preserves parameters bit-exactly") {
    namespace fs = std::filesystem;
    const std::string dir = (fs::temp_directory_path() / "symclaw_ckpt_test").string();
    fs::create_directories(dir);
    FluxNets nets = FluxNets::make(2, 2, {16}, {16, 16});
    init_params(nets, 1234);
    save_checkpoint(nets, dir + "/ck.json", {"shallow_water", 7, 0.123});
    CheckpointMeta meta;
    FluxNets back = load_checkpoint(dir + "/ck.json", &meta);
    REQUIRE(flatten(back) == flatten(nets));
    REQUIRE(meta.epoch == 7);
    REQUIRE(back.p == 2);
    REQUIRE(back.d == 2);

    // the blob is the flat serialization order: the first weight matrix of
    // the first direction's potential leads, row-major
    std::ifstream bs(dir + "/ck.bin", std::ios::binary);
    std::vector<double> head(8);
    bs.read(reinterpret_cast<char*>(head.data()), 8 * sizeof(double));
    for (int i = 0; i < 8; ++i) REQUIRE(head[static_cast<size_t>(i)] == nets.phi[0].W[0].a[static_cast<size_t>(i)]);
}

TEST_CASE("jacobi eigensolver basics") {
    Mat eye = Mat::identity(2);
    const Vec e1 = jacobi_eigenvalues(eye);
    REQUIRE(e1[0] == 1.0);
    REQUIRE(e1[1] == 1.0);

    Mat m(2);
    m(0, 0) = 2;
    m(0, 1) = 1;
    m(1, 0) = 1;
    m(1, 1) = 2;
    const Vec e2 = jacobi_eigenvalues(m);
    REQUIRE(std::abs(e2[0] - 1.0) < 1e-14);
    REQUIRE(std::abs(e2[1] - 3.0) < 1e-14);

    Rng rng(6);
    for (int rep = 0; rep < 50; ++rep) {
        Mat a(3);
        for (int i = 0; i < 3; ++i)
            for (int j = i; j < 3; ++j) a(i, j) = a(j, i) = rng.uniform(-2, 2);
        const EigSym es = jacobi_eigensystem(a);
        // reconstruct from eigenpairs
        Mat rec(3);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0;
                for (int k = 0; k < 3; ++k) s += es.vectors(i, k) * es.values[k] * es.vectors(j, k);
                rec(i, j) = s;
            }
        double scale = 0, err = 0;
        for (int i = 0; i < 9; ++i) {
            scale = std::max(scale, std::abs(a.m[static_cast<size_t>(i)]));
            err = std::max(err, std::abs(a.m[static_cast<size_t>(i)] - rec.m[static_cast<size_t>(i)]));
        }
        REQUIRE(err <= 1e-12 * std::max(1.0, scale));
    }

    Mat bad(2);
    bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_AS(jacobi_eigenvalues(bad), Error);
}

TEST_CASE("wave speed: identities and the scalar case") {
    REQUIRE(wave_speed(Mat::identity(2), Mat::identity(2)) == 1.0);
    Rng rng(19);
    for (int rep = 0; rep < 50; ++rep) {
        Mat a(1), b(1);
        a(0, 0) = rng.uniform(-3, 3);
        b(0, 0) = rng.uniform(0.1, 3);
        REQUIRE(std::abs(wave_speed(a, b) - std::abs(a(0, 0) * b(0, 0))) < 1e-14);
    }
    // random PSD B, symmetric A: agree with power iteration on AB
    for (int rep = 0; rep < 100; ++rep) {
        const int p = 2 + rep % 2;
        Mat a(p), c(p);
        for (int i = 0; i < p; ++i)
            for (int j = i; j < p; ++j) a(i, j) = a(j, i) = rng.uniform(-2, 2);
        for (int i = 0; i < p; ++i)
            for (int j = 0; j < p; ++j) c(i, j) = rng.uniform(-1, 1);
        Mat b(p);  // C^T C is PSD
        for (int i = 0; i < p; ++i)
            for (int j = 0; j < p; ++j) {
                double s = 0;
                for (int k = 0; k < p; ++k) s += c(k, i) * c(k, j);
                b(i, j) = s;
            }
        const double rho = wave_speed(a, b);
        const double rho_pi = oracles::power_iteration_rho(a * b);
        if (rho > 1e-10) REQUIRE(std::abs(rho - rho_pi) / rho < 1e-8);
    }
}
