#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "symclaw/dataset.hpp"
#include "symclaw/metrics.hpp"
#include "symclaw/problems.hpp"

using namespace symclaw;

TEST_CASE("periodic conservation remainder is structural") {
    const Problem pr = get_problem("burgers1d");
    FluxNets nets = make_nets_for(pr, 5);
    Rng rng(2);
    const GridField ic = pr.sample_ic(rng, 64);
    const double dt = 0.005;
    const auto traj = rollout(nets, ic, 50, 0, dt);
    NeuralFlux flux{&nets, 0, {ic.dx, ic.dx}, dt};
    for (const Vec& r : conservation_remainder(traj, flux, dt))
        REQUIRE(norm_inf(r) <= 1e-12);
}

TEST_CASE("constant dirichlet run: remainder at rounding level") {
    Problem pr = get_problem("shallow_water");
    FluxNets nets = make_nets_for(pr, 7);
    GridField u = GridField::make1d(32, 2, pr.dx_for(32));
    for (int i = 0; i < 32; ++i) {
        u.at(i)[0] = 2.0;
        u.at(i)[1] = 0.5;
    }
    pr.freeze_boundary(u);
    const double dt = 0.002;
    const auto traj = rollout(nets, u, 30, 0, dt);
    NeuralFlux flux{&nets, 0, {u.dx, u.dx}, dt};
    for (const Vec& r : conservation_remainder(traj, flux, dt))
        REQUIRE(norm_inf(r) <= 1e-13);
}

TEST_CASE("entropy remainder: zero at the start, zero for static zero-flux runs") {
    const Problem pr = get_problem("burgers1d");
    FluxNets nets = make_nets_for(pr, 1);
    Rng rng(8);
    const GridField ic = pr.sample_ic(rng, 32);
    const auto traj = rollout(nets, ic, 5, 0, 0.005);
    const EntropyRemainder er = entropy_remainder(traj, nets, 0.005);
    REQUIRE(er.literal[0] == 0.0);
    REQUIRE(er.variant[0] == 0.0);

    // zero-flux network on a constant state: every entry stays zero
    FluxNets zero = FluxNets::make(1, 1, {8}, {8});
    GridField cst = GridField::make1d(16, 1, 0.1);
    for (int i = 0; i < 16; ++i) cst.at(i)[0] = 0.3;
    const auto ctraj = rollout(zero, cst, 5, 1, 0.01);
    const EntropyRemainder cz = entropy_remainder(ctraj, zero, 0.01);
    for (double v : cz.literal) REQUIRE(std::abs(v) < 1e-14);
    for (double v : cz.variant) REQUIRE(std::abs(v) < 1e-14);
}

TEST_CASE("relative L1 error basics") {
    GridField a = GridField::make1d(16, 1, 0.1);
    for (int i = 0; i < 16; ++i) a.at(i)[0] = 1.0 + i;
    const std::vector<GridField> ta{a}, tb{a};
    REQUIRE(relative_l1_error(ta, tb)[0] == 0.0);

    GridField z = a;
    std::fill(z.data.begin(), z.data.end(), 0.0);
    const std::vector<GridField> tz{z};
    REQUIRE(relative_l1_error(tz, ta)[0] == 1.0);

    GridField s = a;
    for (int i = 0; i < 16; ++i) s.at(i)[0] *= 1.1;
    const std::vector<GridField> ts{s};
    REQUIRE(std::abs(relative_l1_error(ts, ta)[0] - 0.1) < 1e-13);

    GridField other = GridField::make1d(8, 1, 0.2);
    const std::vector<GridField> to{other};
    REQUIRE_THROWS_AS(relative_l1_error(to, ta), Error);
}

TEST_CASE("report emission: metadata-only, full precision round-trip, profiles") {
    namespace fs = std::filesystem;
    const std::string dir = (fs::temp_directory_path() / "symclaw_report").string();
    fs::remove_all(dir);

    EvalReport empty;
    empty.problem = "burgers1d";
    emit_report(empty, dir);
    REQUIRE(fs::exists(dir + "/report.json"));
    REQUIRE(!fs::exists(dir + "/error.csv"));

    EvalReport rep;
    rep.problem = "burgers1d";
    rep.dt = 0.005;
    rep.times = {0.0, 1.0, 2.0, 3.0};
    rep.conservation = {{0.0, 1.0 / 3.0, 2e-16, 0.12345678901234567}};
    rep.entropy.literal = {0.0, -0.25, -0.5, -1.0};
    rep.entropy.variant = {0.0, -0.2, -0.4, -0.9};
    rep.error = {0.0, 0.01, 0.02, 0.04};
    GridField prof = GridField::make1d(8, 1, 0.7853981633974483);
    for (int i = 0; i < 8; ++i) prof.at(i)[0] = std::sin((i + 0.5) * prof.dx);
    for (double t : {1.0, 2.0, 3.0}) rep.profiles.emplace_back(t, prof);
    emit_report(rep, dir);
    for (const char* f : {"conservation_u1.csv", "entropy.csv", "entropy_variant.csv", "error.csv",
                          "profile_t1.csv", "profile_t2.csv", "profile_t3.csv"})
        REQUIRE(fs::exists(dir + "/" + f));

    // parse back, full precision
    std::ifstream is(dir + "/conservation_u1.csv");
    std::string header, line;
    std::getline(is, header);
    REQUIRE(header == "t,value");
    std::vector<double> vals;
    while (std::getline(is, line)) {
        const auto comma = line.find(',');
        vals.push_back(std::stod(line.substr(comma + 1)));
    }
    REQUIRE(vals.size() == 4u);
    REQUIRE(vals[1] == 1.0 / 3.0);
    REQUIRE(vals[3] == 0.12345678901234567);

    std::ifstream ps(dir + "/profile_t2.csv");
    std::getline(ps, header);
    REQUIRE(header == "x,u1");
}

TEST_CASE("emitted series are deterministic for a fixed checkpoint and data") {
    const Problem pr = get_problem("burgers1d");
    FluxNets nets = make_nets_for(pr, 42);
    const GridField ic = pr.test_ic(32);
    const auto t1 = rollout(nets, ic, 10, 0, 0.005);
    const auto t2 = rollout(nets, ic, 10, 0, 0.005);
    NeuralFlux flux{&nets, 0, {ic.dx, ic.dx}, 0.005};
    const auto c1 = conservation_remainder(t1, flux, 0.005);
    const auto c2 = conservation_remainder(t2, flux, 0.005);
    for (size_t l = 0; l < c1.size(); ++l) REQUIRE(c1[l][0] == c2[l][0]);
    const auto e1 = entropy_remainder(t1, nets, 0.005);
    const auto e2 = entropy_remainder(t2, nets, 0.005);
    REQUIRE(e1.literal == e2.literal);
    REQUIRE(e1.variant == e2.variant);
}

TEST_CASE("dirichlet remainder is discretization-limited once waves reach the boundary") {
    // a dam-break profile right next to the boundary: the learned-flux
    // boundary integral no longer telescopes exactly, so the remainder rises
    // above rounding level but stays at quadrature-error scale
    Problem pr = get_problem("shallow_water");
    FluxNets nets = make_nets_for(pr, 13);
    GridField u = GridField::make1d(32, 2, pr.dx_for(32));
    for (int i = 0; i < 32; ++i) {
        u.at(i)[0] = i < 3 ? 3.0 : 1.0;  // jump three cells from the left edge
        u.at(i)[1] = 0.0;
    }
    pr.freeze_boundary(u);
    const double dt = 0.002;
    const auto traj = rollout(nets, u, 100, 0, dt);
    NeuralFlux flux{&nets, 0, {u.dx, u.dx}, dt};
    const auto rem = conservation_remainder(traj, flux, dt);
    double worst = 0;
    for (const Vec& r : rem) worst = std::max(worst, norm_inf(r));
    REQUIRE(worst > 1e-14);
    REQUIRE(worst < 1e-3);
}
