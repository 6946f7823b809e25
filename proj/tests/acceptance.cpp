// Acceptance suite: one structural or end-to-end criterion per entry, each
// printing a single pass/fail line. Select with --criterion N or run all.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "symclaw/checks.hpp"
#include "symclaw/dataset.hpp"
#include "symclaw/metrics.hpp"
#include "symclaw/train.hpp"

using namespace symclaw;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

std::string tmp_dir(const std::string& name) {
    namespace fs = std::filesystem;
    const fs::path p = fs::temp_directory_path() / ("symclaw_accept_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

// criterion 5 instance: see tests/test_train.cpp for the construction notes
FluxNets fd_nets(uint64_t seed) {
    FluxNets nets = FluxNets::make(1, 1, {8}, {8});
    init_params(nets, seed);
    std::fill(nets.eta.Ws.begin(), nets.eta.Ws.end(), 0.8);
    Rng r(seed + 99);
    for (int k = 0; k < 8; ++k) {
        nets.phi[0].W[0](k, 0) = r.uniform(0.18, 0.22);
        nets.phi[0].b[0][static_cast<size_t>(k)] = r.uniform(1.25, 1.45);
        nets.phi[0].W[1](0, k) = r.uniform(-4.4, -3.6);
    }
    double cb = 0;
    for (int k = 0; k < 8; ++k)
        cb -= nets.phi[0].W[1](0, k) * std::tanh(nets.phi[0].b[0][static_cast<size_t>(k)]);
    nets.phi[0].b[1][0] = cb;
    return nets;
}

Outcome c1_entropy_identity() {
    const checks::CheckResult r = checks::entropy_conservation_identity(10000);
    return {r.pass, r.detail};
}

Outcome c2_hyperbolicity() {
    const checks::CheckResult r = checks::hyperbolicity(1000);
    return {r.pass, r.detail};
}

Outcome c3_structural_conservation() {
    const checks::CheckResult r = checks::structural_conservation(128, 200);
    return {r.pass, r.detail};
}

Outcome c4_orders() {
    const checks::CheckResult r = checks::discretization_orders();
    return {r.pass, r.detail};
}

Outcome c5_gradient() {
    FluxNets nets = fd_nets(11);
    const Problem pr = get_problem("burgers1d");
    Rng rng(12);
    const GridField ic = pr.sample_ic(rng, 16);
    std::vector<std::vector<GridField>> windows;
    std::vector<GridField> window = reference_solve(pr, ic, 0.005, 1);
    const std::vector<double> means{0.8};
    Rng nrng(77);
    inject_noise(window, 0.15, means, nrng);
    windows.push_back(std::move(window));
    const double dt = 10.0;

    auto [loss, grads] = loss_gradient(nets, windows, 1, dt);
    const std::vector<double> g = flatten(grads);
    double gmax = 0;
    for (double v : g) gmax = std::max(gmax, std::abs(v));
    const double h = 1e-4;
    auto pbufs = param_buffers(nets);
    size_t flat = 0;
    double worst = 0;
    for (auto* buf : pbufs)
        for (size_t i = 0; i < buf->size(); ++i, ++flat) {
            const double orig = (*buf)[i];
            (*buf)[i] = orig + h;
            const double lp = recurrent_loss(nets, windows, 1, dt);
            (*buf)[i] = orig - h;
            const double lm = recurrent_loss(nets, windows, 1, dt);
            (*buf)[i] = orig;
            const double fd = (lp - lm) / (2 * h);
            const double denom = std::max({std::abs(fd), std::abs(g[flat]), 1e-3 * gmax});
            worst = std::max(worst, std::abs(g[flat] - fd) / denom);
        }
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "worst relative gradient error %.3g over %zu parameters (loss %.4g)", worst,
                  flat, loss);
    return {std::isfinite(loss) && worst <= 1e-5, buf};
}

struct BurgersRun {
    TrainResult res;
    double val_loss = 0, final_err = 0, worst_cons = 0, worst_entropy = -1;
    bool finite = true;
};

BurgersRun desk_burgers(double xi, const std::string& tag) {
    const std::string dir = tmp_dir(tag);
    Problem pr = get_problem("burgers1d");
    const int n = 128;
    const TrajectoryDataset ds = make_dataset(pr, n, 0.005, 20, 20, 20, 40, xi, 2024);
    TrainConfig cfg = config_for(pr);
    cfg.epochs = 50;
    cfg.n_traj = 20;
    cfg.batch_size = 2;
    cfg.seed = 1;
    BurgersRun out;
    out.res = train(ds, cfg, dir);
    if (out.res.aborted) {
        out.finite = false;
        return out;
    }
    out.val_loss = out.res.best_val;

    FluxNets nets = load_checkpoint(dir + "/best.json");
    const GridField ic = pr.test_ic(n);
    const int steps = 200;  // t = 1.0 at dt = 0.005
    const std::vector<GridField> pred = rollout(nets, ic, steps, 0, 0.005);
    const std::vector<GridField> ref = reference_solve(pr, ic, 0.005, steps);
    out.final_err = relative_l1_error(pred, ref).back();
    NeuralFlux flux{&nets, 0, {ic.dx, ic.dx}, 0.005};
    for (const Vec& r : conservation_remainder(pred, flux, 0.005))
        out.worst_cons = std::max(out.worst_cons, norm_inf(r));
    const EntropyRemainder er = entropy_remainder(pred, nets, 0.005);
    for (double v : er.variant) out.worst_entropy = std::max(out.worst_entropy, v);
    return out;
}

Outcome c6_burgers_training() {
    const BurgersRun r = desk_burgers(0.0, "c6");
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "val loss %.4g, error at t=1 %.4g, max entropy remainder %.3g", r.val_loss,
                  r.final_err, r.worst_entropy);
    const bool pass =
        r.finite && r.val_loss < 0.05 && r.final_err <= 0.10 && r.worst_entropy <= 1e-8;
    return {pass, buf};
}

Outcome c7_noise_robustness() {
    const BurgersRun r = desk_burgers(0.5, "c7");
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "completed %s, max conservation %.3g, max entropy remainder %.3g",
                  r.finite ? "cleanly" : "with failure", r.worst_cons, r.worst_entropy);
    const bool pass = r.finite && r.worst_cons <= 1e-12 && r.worst_entropy <= 1e-8;
    return {pass, buf};
}

Outcome c8_shallow_water() {
    const std::string dir = tmp_dir("c8");
    Problem pr = get_problem("shallow_water");
    const int n = 128;
    const TrajectoryDataset ds = make_dataset(pr, n, 0.005, 20, 20, 30, 40, 0.0, 5150);
    TrainConfig cfg = config_for(pr);
    cfg.epochs = 30;
    cfg.n_traj = 30;
    cfg.batch_size = 10;
    cfg.seed = 1;
    const TrainResult res = train(ds, cfg, dir);
    if (res.aborted) return {false, "training aborted: " + res.abort_reason};

    FluxNets nets = load_checkpoint(dir + "/best.json");
    const GridField ic = pr.test_ic(n);
    const int steps = 150;  // t = 0.75 at dt = 0.005
    const std::vector<GridField> pred = rollout(nets, ic, steps, 0, 0.005);
    NeuralFlux flux{&nets, 0, {ic.dx, ic.dx}, 0.005};
    double worst_cons = 0;
    for (const Vec& r : conservation_remainder(pred, flux, 0.005))
        worst_cons = std::max(worst_cons, norm_inf(r));
    double worst_entropy = -1;
    const EntropyRemainder er = entropy_remainder(pred, nets, 0.005);
    for (double v : er.variant) worst_entropy = std::max(worst_entropy, v);
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "val loss %.4g, max conservation %.3g, max entropy remainder %.3g", res.best_val,
                  worst_cons, worst_entropy);
    return {worst_cons <= 1e-11 && worst_entropy <= 1e-8, buf};
}

Outcome c9_stabilizers() {
    const checks::CheckResult r = checks::stabilizer_units();
    return {r.pass, r.detail};
}

Outcome c10_burgers2d_smoke() {
    const std::string dir = tmp_dir("c10");
    Problem pr = get_problem("burgers2d");
    const int n = 32;
    const TrajectoryDataset ds = make_dataset(pr, n, 0.001, 20, 20, 5, 40, 0.0, 77);
    TrainConfig cfg = config_for(pr);
    cfg.epochs = 5;
    cfg.n_traj = 5;
    cfg.batch_size = 2;
    cfg.seed = 1;
    const TrainResult res = train(ds, cfg, dir);
    if (res.aborted) return {false, "training aborted: " + res.abort_reason};

    FluxNets nets = load_checkpoint(dir + "/final.json");
    const GridField ic = pr.test_ic(n, n);
    const std::vector<GridField> pred = rollout(nets, ic, 100, 0, 0.001);
    NeuralFlux flux{&nets, 0, {ic.dx, ic.dy}, 0.001};
    double worst_cons = 0;
    for (const Vec& r : conservation_remainder(pred, flux, 0.001))
        worst_cons = std::max(worst_cons, norm_inf(r));
    char buf[200];
    std::snprintf(buf, sizeof(buf), "final train loss %.4g, max conservation %.3g",
                  res.final_train, worst_cons);
    return {std::isfinite(res.final_train) && worst_cons <= 1e-11, buf};
}

struct Criterion {
    int id;
    const char* name;
    Outcome (*fn)();
};

const Criterion kCriteria[] = {
    {1, "entropy-conservation identity", c1_entropy_identity},
    {2, "hyperbolicity by construction", c2_hyperbolicity},
    {3, "structural conservation under untrained rollout", c3_structural_conservation},
    {4, "reconstruction and integrator orders", c4_orders},
    {5, "recurrent-loss gradient vs finite differences", c5_gradient},
    {6, "desk-scale Burgers training", c6_burgers_training},
    {7, "noise robustness at xi = 0.5", c7_noise_robustness},
    {8, "desk-scale shallow-water training", c8_shallow_water},
    {9, "stabilizer unit behavior", c9_stabilizers},
    {10, "2d Burgers training smoke", c10_burgers2d_smoke},
};

}  // namespace

int main(int argc, char** argv) {
    int only = -1;
    for (int i = 1; i < argc - 1; ++i)
        if (std::strcmp(argv[i], "--criterion") == 0) only = std::atoi(argv[i + 1]);
    int failures = 0;
    for (const Criterion& c : kCriteria) {
        if (only > 0 && c.id != only) continue;
        const auto tic = std::chrono::steady_clock::now();
        Outcome o{false, "exception"};
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o.detail = std::string("exception: ") + e.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - tic).count();
        std::printf("[%s] C%d %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", c.id, c.name,
                    o.detail.c_str(), secs);
        std::fflush(stdout);
        if (!o.pass) ++failures;
    }
    return failures;
}
