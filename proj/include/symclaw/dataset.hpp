#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "symclaw/problems.hpp"

namespace symclaw {

/// Classical reference flux: arithmetic mean plus local Lax-Friedrichs
/// dissipation with the true local maximum wave speed.
struct KnownFlux {
    const Problem* prob;
    Vec operator()(int dir, const Vec& u_minus, const Vec& u_plus, int) const {
        const Vec fm = prob->flux(dir, u_minus);
        const Vec fp = prob->flux(dir, u_plus);
        const double lam = std::max(prob->max_speed(dir, u_minus), prob->max_speed(dir, u_plus));
        Vec f(u_minus.n);
        for (int c = 0; c < f.n; ++c)
            f[c] = 0.5 * (fm[c] + fp[c]) - 0.5 * lam * (u_plus[c] - u_minus[c]);
        return f;
    }
};

/// Maximum CFL number of the field under the true wave speeds.
inline double true_cfl(const Problem& pr, const GridField& u, double dt) {
    double worst = 0;
    for (int j = 0; j < u.ny; ++j)
        for (int i = 0; i < u.nx; ++i) {
            const Vec c = u.cell(i, j);
            double s = pr.max_speed(0, c) / u.dx;
            if (u.d == 2) s += pr.max_speed(1, c) / u.dy;
            worst = std::max(worst, s * dt);
        }
    return worst;
}

/// Solves the true law with WENO5 + Rusanov + TVDRK3, checking the CFL
/// condition before every step. Returns steps+1 snapshots.
inline std::vector<GridField> reference_solve(const Problem& pr, const GridField& ic, double dt,
                                              int steps) {
    KnownFlux flux{&pr};
    std::vector<GridField> traj;
    traj.reserve(static_cast<size_t>(steps) + 1);
    traj.push_back(ic);
    GridField u = ic;
    for (int s = 1; s <= steps; ++s) {
        const double cfl = true_cfl(pr, u, dt);
        if (cfl > 1.0 + 1e-12)
            throw Error("reference_solve: CFL violated at step " + std::to_string(s) +
                        " (cfl=" + std::to_string(cfl) + ")");
        auto rhs = [&](const GridField& z) {
            GridField zz = z;
            return semidiscrete_rhs(zz, flux);
        };
        u = tvdrk3_step(u, rhs, dt);
        if (!u.interior_finite())
            throw NonFiniteError("reference_solve: non-finite state", s, -1, -1);
        traj.push_back(u);
    }
    return traj;
}

struct TrajectoryDataset {
    std::string problem;
    int p = 1, d = 1;
    std::vector<int> n;        // cells per axis
    std::vector<double> dxv;   // cell size per axis
    double dt = 0;
    int L = 0, L_train = 0;
    int N_traj = 0;  // training windows; entries beyond are validation
    double xi = 0, g = 1.0;
    uint64_t seed = 0;
    std::vector<int> window_starts;             // length N_traj + n_val
    std::vector<double> component_abs_means;    // per component, noise scale
    std::vector<std::vector<GridField>> windows;  // [k][0..L_train]

    int n_val() const { return static_cast<int>(windows.size()) - N_traj; }
};

/// Adds i.i.d. standard-normal perturbations scaled by xi * abs_mean[c] to
/// every stored sample of the window (including the start).
inline void inject_noise(std::vector<GridField>& window, double xi,
                         std::span<const double> abs_means, Rng& rng) {
    if (xi == 0.0) return;
    for (GridField& f : window)
        for (int j = 0; j < f.ny; ++j)
            for (int i = 0; i < f.nx; ++i) {
                double* u = f.at(i, j);
                for (int c = 0; c < f.p; ++c)
                    u[c] += xi * abs_means[static_cast<size_t>(c)] * rng.normal();
            }
}

/// Generates N_traj training windows plus n_val validation windows:
/// sample an initial condition, solve the true law for L steps, slice a
/// window of L_train+1 snapshots at a uniformly sampled start, then perturb
/// with noise. Each trajectory owns an RNG stream derived from (seed, k).
inline TrajectoryDataset make_dataset(const Problem& pr, int nx, double dt, int L, int L_train,
                                      int N_traj, int n_val, double xi, uint64_t seed) {
    if (L_train > L) throw Error("make_dataset: L_train must not exceed L");
    TrajectoryDataset ds;
    ds.problem = pr.id;
    ds.p = pr.p;
    ds.d = pr.d;
    ds.n = pr.d == 2 ? std::vector<int>{nx, nx} : std::vector<int>{nx};
    ds.dxv = pr.d == 2 ? std::vector<double>{pr.dx_for(nx), pr.dy_for(nx)}
                       : std::vector<double>{pr.dx_for(nx)};
    ds.dt = dt;
    ds.L = L;
    ds.L_train = L_train;
    ds.N_traj = N_traj;
    ds.xi = xi;
    ds.g = pr.g;
    ds.seed = seed;

    const int total = N_traj + n_val;
    for (int k = 0; k < total; ++k) {
        Rng rng = Rng::stream(seed, static_cast<uint64_t>(k));
        const GridField ic = pr.sample_ic(rng, nx, nx);
        const std::vector<GridField> traj = reference_solve(pr, ic, dt, L);
        int start = 0;
        if (L > L_train)
            start = static_cast<int>(rng.uniform01() * (L - L_train + 1));
        if (start > L - L_train) start = L - L_train;
        ds.window_starts.push_back(start);
        std::vector<GridField> win(traj.begin() + start, traj.begin() + start + L_train + 1);
        ds.windows.push_back(std::move(win));
    }

    ds.component_abs_means.assign(static_cast<size_t>(pr.p), 0.0);
    size_t count = 0;
    for (const auto& win : ds.windows)
        for (const GridField& f : win)
            for (int j = 0; j < f.ny; ++j)
                for (int i = 0; i < f.nx; ++i) {
                    const double* u = f.at(i, j);
                    for (int c = 0; c < pr.p; ++c)
                        ds.component_abs_means[static_cast<size_t>(c)] += std::abs(u[c]);
                    ++count;
                }
    for (double& m : ds.component_abs_means) m /= static_cast<double>(count);

    for (int k = 0; k < total; ++k) {
        Rng rng = Rng::stream(seed ^ 0x517CC1B727220A95ULL, static_cast<uint64_t>(k));
        inject_noise(ds.windows[static_cast<size_t>(k)], xi, ds.component_abs_means, rng);
        // ghosts freeze to the (noisy) window start, matching the rollout
        for (GridField& f : ds.windows[static_cast<size_t>(k)]) pr.freeze_boundary(f);
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Serialization: manifest.json plus one little-endian float64 blob per
// window, layout [time][cell row-major][component].
// ---------------------------------------------------------------------------

inline void save_dataset(const TrajectoryDataset& ds, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json j;
    j["problem"] = ds.problem;
    j["p"] = ds.p;
    j["d"] = ds.d;
    j["n"] = ds.n;
    j["dx"] = ds.dxv;
    j["dt"] = ds.dt;
    j["L"] = ds.L;
    j["L_train"] = ds.L_train;
    j["N_traj"] = ds.N_traj;
    j["xi"] = ds.xi;
    j["g"] = ds.g;
    j["seed"] = ds.seed;
    j["window_starts"] = ds.window_starts;
    j["component_abs_means"] = ds.component_abs_means;
    j["reference_solver"] = "weno5-rusanov-tvdrk3";
    {
        std::ofstream os(dir + "/manifest.json");
        if (!os) throw Error("cannot write manifest in " + dir);
        os << j.dump(2) << "\n";
    }
    for (size_t k = 0; k < ds.windows.size(); ++k) {
        std::ofstream os(dir + "/traj_" + std::to_string(k) + ".f64", std::ios::binary);
        if (!os) throw Error("cannot write trajectory file in " + dir);
        for (const GridField& f : ds.windows[k])
            for (int jj = 0; jj < f.ny; ++jj)
                for (int i = 0; i < f.nx; ++i)
                    os.write(reinterpret_cast<const char*>(f.at(i, jj)),
                             static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(f.p)));
    }
}

inline TrajectoryDataset load_dataset(const std::string& dir) {
    std::ifstream is(dir + "/manifest.json");
    if (!is) throw Error("cannot read " + dir + "/manifest.json");
    nlohmann::json j;
    is >> j;
    TrajectoryDataset ds;
    ds.problem = j.at("problem").get<std::string>();
    ds.p = j.at("p").get<int>();
    ds.d = j.at("d").get<int>();
    ds.n = j.at("n").get<std::vector<int>>();
    ds.dxv = j.at("dx").get<std::vector<double>>();
    ds.dt = j.at("dt").get<double>();
    ds.L = j.at("L").get<int>();
    ds.L_train = j.at("L_train").get<int>();
    ds.N_traj = j.at("N_traj").get<int>();
    ds.xi = j.at("xi").get<double>();
    ds.g = j.at("g").get<double>();
    ds.seed = j.at("seed").get<uint64_t>();
    ds.window_starts = j.at("window_starts").get<std::vector<int>>();
    ds.component_abs_means = j.at("component_abs_means").get<std::vector<double>>();

    Problem pr = get_problem(ds.problem);
    pr.g = ds.g;
    const int total = static_cast<int>(ds.window_starts.size());
    const int nx = ds.n[0];
    const int ny = ds.d == 2 ? ds.n[1] : 1;
    const size_t per_snap = static_cast<size_t>(nx) * static_cast<size_t>(ny) *
                            static_cast<size_t>(ds.p);
    for (int k = 0; k < total; ++k) {
        std::ifstream bs(dir + "/traj_" + std::to_string(k) + ".f64", std::ios::binary);
        if (!bs) throw Error("missing trajectory file traj_" + std::to_string(k) + ".f64");
        std::vector<GridField> win;
        for (int l = 0; l <= ds.L_train; ++l) {
            GridField f = ds.d == 2 ? GridField::make2d(nx, ny, ds.p, ds.dxv[0], ds.dxv[1])
                                    : GridField::make1d(nx, ds.p, ds.dxv[0]);
            f.bcx.kind = pr.bc;
            f.bcy.kind = pr.bc;
            std::vector<double> buf(per_snap);
            bs.read(reinterpret_cast<char*>(buf.data()),
                    static_cast<std::streamsize>(per_snap * sizeof(double)));
            if (static_cast<size_t>(bs.gcount()) != per_snap * sizeof(double))
                throw Error("trajectory file truncated: traj_" + std::to_string(k));
            size_t q = 0;
            for (int jj = 0; jj < ny; ++jj)
                for (int i = 0; i < nx; ++i)
                    for (int c = 0; c < ds.p; ++c) f.at(i, jj)[c] = buf[q++];
            win.push_back(std::move(f));
        }
        for (GridField& f : win) pr.freeze_boundary(f);
        ds.windows.push_back(std::move(win));
    }
    return ds;
}

}  // namespace symclaw
