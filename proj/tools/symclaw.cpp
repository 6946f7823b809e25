// Command-line front end: dataset generation, training, evaluation, and the
// structural selftest suite.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "symclaw/checks.hpp"
#include "symclaw/dataset.hpp"
#include "symclaw/metrics.hpp"
#include "symclaw/train.hpp"

using namespace symclaw;

namespace {

int run_gen(const std::string& problem, int traj, double noise, uint64_t seed,
            const std::string& out, int n, double dt, int L, int L_train, int n_val, double g) {
    Problem pr = get_problem(problem);
    if (g > 0) pr.g = g;
    if (n <= 0) n = pr.n_default;
    if (dt <= 0) dt = pr.dt_default;
    if (L <= 0) L = pr.L_default;
    if (L_train <= 0) L_train = pr.L_train_default;
    if (traj <= 0) traj = pr.n_traj_default;
    const TrajectoryDataset ds = make_dataset(pr, n, dt, L, L_train, traj, n_val, noise, seed);
    save_dataset(ds, out);
    std::printf("wrote %d training + %d validation windows to %s\n", ds.N_traj, ds.n_val(),
                out.c_str());
    return 0;
}

int run_train(const std::string& data_dir, const std::string& config_path,
              const std::string& out) {
    const TrajectoryDataset ds = load_dataset(data_dir);
    const Problem pr = get_problem(ds.problem);
    TrainConfig cfg = config_for(pr);
    cfg.n_traj = ds.N_traj;
    if (!config_path.empty()) cfg = load_config(config_path, cfg);
    const TrainResult res = train(ds, cfg, out);
    if (res.aborted) {
        std::cerr << "training aborted: " << res.abort_reason << "\n";
        return 1;
    }
    std::printf("best validation loss %.6g at epoch %d (checkpoints in %s)\n", res.best_val,
                res.best_epoch, out.c_str());
    return 0;
}

int run_eval(const std::string& checkpoint, const std::string& problem, double tfinal,
             const std::string& out, int n, double dt, std::vector<double> snapshots) {
    const Problem pr = get_problem(problem);
    if (n <= 0) n = pr.n_default;
    if (dt <= 0) dt = pr.dt_default;
    CheckpointMeta meta;
    FluxNets nets = load_checkpoint(checkpoint, &meta);
    if (nets.p != pr.p || nets.d != pr.d)
        throw Error("checkpoint dimensions do not match problem " + problem);

    const int steps = static_cast<int>(std::llround(tfinal / dt));
    const GridField ic = pr.test_ic(n, n);
    const std::vector<GridField> ref = reference_solve(pr, ic, dt, steps);
    const std::vector<GridField> pred = rollout(nets, ic, steps, 0, dt);

    EvalReport rep;
    rep.problem = problem;
    rep.checkpoint_id = checkpoint;
    rep.dt = dt;
    rep.xlo = pr.xlo;
    rep.ylo = pr.ylo;
    for (int l = 0; l <= steps; ++l) rep.times.push_back(l * dt);
    NeuralFlux flux{&nets, 0, {ic.dx, pr.d == 2 ? ic.dy : ic.dx}, dt};
    const std::vector<Vec> cons = conservation_remainder(pred, flux, dt);
    rep.conservation.assign(static_cast<size_t>(pr.p), {});
    for (const Vec& r : cons)
        for (int c = 0; c < pr.p; ++c) rep.conservation[static_cast<size_t>(c)].push_back(r[c]);
    rep.entropy = entropy_remainder(pred, nets, dt);
    rep.error = relative_l1_error(pred, ref);
    if (snapshots.empty()) snapshots.push_back(tfinal);
    for (double t : snapshots) {
        int l = static_cast<int>(std::llround(t / dt));
        l = std::min(std::max(l, 0), steps);
        rep.profiles.emplace_back(l * dt, pred[static_cast<size_t>(l)]);
    }
    emit_report(rep, out);
    std::printf("final relative L1 error %.6g; report in %s\n", rep.error.back(), out.c_str());
    return 0;
}

int run_selftest() {
    int failures = 0;
    for (const checks::CheckResult& r : checks::selftest_suite()) {
        std::printf("[%s] %s: %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
        if (!r.pass) ++failures;
    }
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"learning hyperbolic conservation laws with entropy-stable schemes"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen", "generate a trajectory dataset");
    std::string g_problem, g_out;
    int g_traj = 0, g_n = 0, g_L = 0, g_Lt = 0, g_val = 40;
    double g_noise = 0, g_dt = 0, g_g = 0;
    uint64_t g_seed = 0;
    gen->add_option("--problem", g_problem, "problem id")->required();
    gen->add_option("--traj", g_traj, "number of training trajectories");
    gen->add_option("--noise", g_noise, "noise coefficient xi");
    gen->add_option("--seed", g_seed, "random seed");
    gen->add_option("--out", g_out, "output directory")->required();
    gen->add_option("--n", g_n, "cells per axis");
    gen->add_option("--dt", g_dt, "time step");
    gen->add_option("--L", g_L, "total steps per trajectory");
    gen->add_option("--L-train", g_Lt, "window length");
    gen->add_option("--val", g_val, "validation windows");
    gen->add_option("--g", g_g, "shallow-water gravity");

    auto* tr = app.add_subcommand("train", "train on a generated dataset");
    std::string t_data, t_config, t_out;
    tr->add_option("--data", t_data, "dataset directory")->required();
    tr->add_option("--config", t_config, "JSON training config");
    tr->add_option("--out", t_out, "output directory")->required();

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint against the reference");
    std::string e_ckpt, e_problem, e_out;
    double e_tfinal = 1.0, e_dt = 0;
    int e_n = 0;
    std::vector<double> e_snapshots;
    ev->add_option("--checkpoint", e_ckpt, "checkpoint JSON path")->required();
    ev->add_option("--problem", e_problem, "problem id")->required();
    ev->add_option("--tfinal", e_tfinal, "final time")->required();
    ev->add_option("--out", e_out, "output directory")->required();
    ev->add_option("--n", e_n, "cells per axis");
    ev->add_option("--dt", e_dt, "time step");
    ev->add_option("--snapshot", e_snapshots, "profile snapshot times");

    auto* st = app.add_subcommand("selftest", "run the structural invariant suites");

    CLI11_PARSE(app, argc, argv);
    try {
        if (gen->parsed())
            return run_gen(g_problem, g_traj, g_noise, g_seed, g_out, g_n, g_dt, g_L, g_Lt, g_val,
                           g_g);
        if (tr->parsed()) return run_train(t_data, t_config, t_out);
        if (ev->parsed())
            return run_eval(e_ckpt, e_problem, e_tfinal, e_out, e_n, e_dt, e_snapshots);
        if (st->parsed()) return run_selftest();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
