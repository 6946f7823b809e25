// Minimal end-to-end usage: generate a tiny dataset, train briefly, and roll
// the learned law forward.

#include <cstdio>

#include "symclaw/dataset.hpp"
#include "symclaw/metrics.hpp"
#include "symclaw/train.hpp"

int main() {
    using namespace symclaw;
    const Problem pr = get_problem("burgers1d");
    const TrajectoryDataset ds = make_dataset(pr, 32, 0.005, 5, 5, 4, 2, 0.0, 7);

    TrainConfig cfg = config_for(pr);
    cfg.epochs = 3;
    cfg.n_traj = 4;
    cfg.batch_size = 2;
    const TrainResult res = train(ds, cfg, "demo_out");

    FluxNets nets = load_checkpoint("demo_out/best.json");
    const std::vector<GridField> traj = rollout(nets, pr.test_ic(32), 20, 0, 0.005);
    NeuralFlux flux{&nets, 0, {traj[0].dx, traj[0].dx}, 0.005};
    const std::vector<Vec> cons = conservation_remainder(traj, flux, 0.005);
    std::printf("best val %.4g, conservation remainder at t=0.1: %.3g\n", res.best_val,
                cons.back()[0]);
    return 0;
}
