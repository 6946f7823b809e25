#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "symclaw/flux.hpp"
#include "symclaw/fv.hpp"

namespace symclaw {

/// Net boundary influx of the learned flux (right-endpoint value per step):
/// F_a - F_b in 1D, the ring sum weighted by face length in 2D. Periodic axes
/// contribute nothing (shared boundary).
inline Vec boundary_influx(const GridField& u, const NeuralFlux& flux) {
    Vec s(u.p);
    if (u.bcx.kind == BoundarySpec::kDirichlet) {
        for (int j = 0; j < u.ny; ++j) {
            const Vec fa = flux.pointwise(0, u.cell(0, j));
            const Vec fb = flux.pointwise(0, u.cell(u.nx - 1, j));
            const double w = u.d == 2 ? u.dy : 1.0;
            for (int c = 0; c < u.p; ++c) s[c] += w * (fa[c] - fb[c]);
        }
    }
    if (u.d == 2 && u.bcy.kind == BoundarySpec::kDirichlet) {
        for (int i = 0; i < u.nx; ++i) {
            const Vec fa = flux.pointwise(1, u.cell(i, 0));
            const Vec fb = flux.pointwise(1, u.cell(i, u.ny - 1));
            for (int c = 0; c < u.p; ++c) s[c] += u.dx * (fa[c] - fb[c]);
        }
    }
    return s;
}

/// Conservation remainder per component and stored time: the drift of the
/// conserved totals corrected by the accumulated boundary flux integrals.
inline std::vector<Vec> conservation_remainder(const std::vector<GridField>& traj,
                                               const NeuralFlux& flux, double dt) {
    std::vector<Vec> out;
    if (traj.empty()) return out;
    const Vec total0 = traj[0].conserved_total();
    Vec acc(traj[0].p);
    out.push_back(Vec(traj[0].p));
    for (size_t l = 1; l < traj.size(); ++l) {
        acc += boundary_influx(traj[l], flux);
        const Vec total = traj[l].conserved_total();
        Vec r(traj[0].p);
        for (int c = 0; c < r.n; ++c) r[c] = std::abs(total[c] - total0[c] - dt * acc[c]);
        out.push_back(r);
    }
    return out;
}

struct EntropyRemainder {
    std::vector<double> literal;  // transcribed as written: no spatial difference in the flux term
    std::vector<double> variant;  // boundary difference of the numerical entropy flux G = v^T f - phi
};

inline double total_entropy(const GridField& u, const IcnnParams& eta) {
    double s = 0;
    for (int j = 0; j < u.ny; ++j)
        for (int i = 0; i < u.nx; ++i) s += icnn_eval(eta, u.cell(i, j));
    return s;
}

/// Numerical entropy flux G(u) = v^T f(u) - phi(v) at a single state.
inline double entropy_flux_g(const FluxNets& nets, int dir, const Vec& u) {
    const Vec v = entropy_variables(nets.eta, u);
    const EvalOut pot = fcnn_grad(nets.phi[static_cast<size_t>(dir)], v);
    return dot(v, pot.grad) - pot.value;
}

inline EntropyRemainder entropy_remainder(const std::vector<GridField>& traj, const FluxNets& nets,
                                          double dt) {
    EntropyRemainder out;
    if (traj.empty()) return out;
    const GridField& u0 = traj[0];
    const double vol = u0.d == 2 ? u0.dx * u0.dy : u0.dx;
    const double ent0 = total_entropy(u0, nets.eta);
    double literal_acc = 0;  // sum over steps of sum_j v^T f
    double variant_acc = 0;  // sum over steps of (G_a - G_b)
    out.literal.push_back(0.0);
    out.variant.push_back(0.0);
    for (size_t l = 1; l < traj.size(); ++l) {
        const GridField& u = traj[l];
        for (int j = 0; j < u.ny; ++j)
            for (int i = 0; i < u.nx; ++i) {
                const Vec c = u.cell(i, j);
                const Vec v = entropy_variables(nets.eta, c);
                for (int dir = 0; dir < u.d; ++dir)
                    literal_acc +=
                        dot(v, flux_in_entropy_vars(nets.phi[static_cast<size_t>(dir)], v));
            }
        if (u.bcx.kind == BoundarySpec::kDirichlet) {
            for (int j = 0; j < u.ny; ++j) {
                const double w = u.d == 2 ? u.dy : 1.0;
                variant_acc += w * (entropy_flux_g(nets, 0, u.cell(0, j)) -
                                    entropy_flux_g(nets, 0, u.cell(u.nx - 1, j)));
            }
        }
        if (u.d == 2 && u.bcy.kind == BoundarySpec::kDirichlet) {
            for (int i = 0; i < u.nx; ++i)
                variant_acc += u.dx * (entropy_flux_g(nets, 1, u.cell(i, 0)) -
                                       entropy_flux_g(nets, 1, u.cell(i, u.ny - 1)));
        }
        const double dent = total_entropy(u, nets.eta) - ent0;
        out.literal.push_back(vol * dent - dt * literal_acc);
        out.variant.push_back(vol * dent - dt * variant_acc);
    }
    return out;
}

/// ||pred - ref||_1 / ||ref||_1 per stored time over the interior.
inline std::vector<double> relative_l1_error(const std::vector<GridField>& pred,
                                             const std::vector<GridField>& ref) {
    if (pred.size() != ref.size()) throw Error("relative_l1_error: trajectory length mismatch");
    std::vector<double> out;
    for (size_t l = 0; l < pred.size(); ++l) {
        const GridField& a = pred[l];
        const GridField& b = ref[l];
        if (a.nx != b.nx || a.ny != b.ny || a.p != b.p)
            throw Error("relative_l1_error: grid mismatch");
        double num = 0, den = 0;
        for (int j = 0; j < a.ny; ++j)
            for (int i = 0; i < a.nx; ++i) {
                const double* pa = a.at(i, j);
                const double* pb = b.at(i, j);
                for (int c = 0; c < a.p; ++c) {
                    num += std::abs(pa[c] - pb[c]);
                    den += std::abs(pb[c]);
                }
            }
        out.push_back(num / den);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Report emission
// ---------------------------------------------------------------------------

struct EvalReport {
    std::string problem = "custom";
    std::string checkpoint_id;
    double xi = 0;
    double dt = 0;
    std::vector<double> times;                     // strictly increasing
    std::vector<std::vector<double>> conservation; // [component][time]
    EntropyRemainder entropy;
    std::vector<double> error;
    // solution snapshots to emit as profile CSVs
    std::vector<std::pair<double, GridField>> profiles;
    double xlo = 0, ylo = 0;
};

namespace detail {
inline std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}
inline std::string fmt_time(double t) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%g", t);
    return buf;
}
inline void write_series(const std::string& path, const std::vector<double>& ts,
                         const std::vector<double>& vs) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path);
    os << "t,value\n";
    for (size_t i = 0; i < ts.size(); ++i) os << fmt17(ts[i]) << "," << fmt17(vs[i]) << "\n";
}
}  // namespace detail

/// Writes one CSV per metric plus profile snapshots, and a metadata document.
inline void emit_report(const EvalReport& rep, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    {
        nlohmann::json j;
        j["problem"] = rep.problem;
        j["checkpoint"] = rep.checkpoint_id;
        j["xi"] = rep.xi;
        j["dt"] = rep.dt;
        j["times"] = rep.times.size();
        std::ofstream os(out_dir + "/report.json");
        if (!os) throw Error("cannot write report.json in " + out_dir);
        os << j.dump(2) << "\n";
    }
    for (size_t c = 0; c < rep.conservation.size(); ++c)
        if (!rep.times.empty())
            detail::write_series(out_dir + "/conservation_u" + std::to_string(c + 1) + ".csv",
                                 rep.times, rep.conservation[c]);
    if (!rep.times.empty() && !rep.entropy.literal.empty()) {
        detail::write_series(out_dir + "/entropy.csv", rep.times, rep.entropy.literal);
        detail::write_series(out_dir + "/entropy_variant.csv", rep.times, rep.entropy.variant);
    }
    if (!rep.times.empty() && !rep.error.empty())
        detail::write_series(out_dir + "/error.csv", rep.times, rep.error);
    for (const auto& [t, f] : rep.profiles) {
        std::ofstream os(out_dir + "/profile_t" + detail::fmt_time(t) + ".csv");
        if (!os) throw Error("cannot write profile in " + out_dir);
        os << (f.d == 2 ? "x,y" : "x");
        for (int c = 0; c < f.p; ++c) os << ",u" << c + 1;
        os << "\n";
        for (int j = 0; j < f.ny; ++j)
            for (int i = 0; i < f.nx; ++i) {
                os << detail::fmt17(rep.xlo + (i + 0.5) * f.dx);
                if (f.d == 2) os << "," << detail::fmt17(rep.ylo + (j + 0.5) * f.dy);
                const double* u = f.at(i, j);
                for (int c = 0; c < f.p; ++c) os << "," << detail::fmt17(u[c]);
                os << "\n";
            }
    }
}

}  // namespace symclaw
