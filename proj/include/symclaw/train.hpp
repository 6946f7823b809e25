#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "symclaw/dataset.hpp"
#include "symclaw/flux.hpp"
#include "symclaw/fv.hpp"
#include "symclaw/metrics.hpp"
#include "symclaw/problems.hpp"
#include "symclaw/tape.hpp"

namespace symclaw {

struct TrainConfig {
    int epochs = 200;
    int n_traj = 200;
    int batch_size = 5;
    double peak_lr = 5e-3;
    double init_div = 10.0;
    double final_div = 1e3;
    double warmup_frac = 0.1;
    double beta1 = 0.9, beta2 = 0.999, eps_adam = 1e-8;
    int validation_count = 40;
    uint64_t seed = 0;
};

inline TrainConfig config_for(const Problem& pr) {
    TrainConfig c;
    c.epochs = pr.epochs_default;
    c.n_traj = pr.n_traj_default;
    c.batch_size = pr.batch_default;
    c.warmup_frac = pr.warmup_frac;
    return c;
}

inline TrainConfig load_config(const std::string& path, TrainConfig c) {
    std::ifstream is(path);
    if (!is) throw Error("cannot read config " + path);
    nlohmann::json j;
    is >> j;
    c.epochs = j.value("epochs", c.epochs);
    c.n_traj = j.value("n_traj", c.n_traj);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.peak_lr = j.value("peak_lr", c.peak_lr);
    c.init_div = j.value("init_div", c.init_div);
    c.final_div = j.value("final_div", c.final_div);
    c.warmup_frac = j.value("warmup_frac", c.warmup_frac);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps_adam = j.value("eps_adam", c.eps_adam);
    c.validation_count = j.value("validation_count", c.validation_count);
    c.seed = j.value("seed", c.seed);
    return c;
}

/// One-cycle cosine schedule: cosine ramp from peak/init_div to peak over the
/// warmup fraction, then cosine decay from peak to peak/final_div.
inline double lr_schedule(long step, long total_steps, const TrainConfig& cfg) {
    const double lo = cfg.peak_lr / cfg.init_div;
    const double fin = cfg.peak_lr / cfg.final_div;
    const long warm = std::max<long>(1, std::lround(cfg.warmup_frac * static_cast<double>(total_steps)));
    if (step < warm) {
        const double s = static_cast<double>(step) / static_cast<double>(warm);
        return lo + (cfg.peak_lr - lo) * 0.5 * (1.0 - std::cos(kPi * s));
    }
    const long rest = std::max<long>(1, total_steps - warm);
    const double s = static_cast<double>(step - warm) / static_cast<double>(rest);
    return fin + (cfg.peak_lr - fin) * 0.5 * (1.0 + std::cos(kPi * s));
}

struct AdamState {
    FluxNets m, v;
    long t = 0;
    explicit AdamState(const FluxNets& proto) : m(zeros_like(proto)), v(zeros_like(proto)) {}
};

/// Standard Adam with bias correction; the convexity projection is applied
/// after every update.
inline void adam_step(FluxNets& params, FluxNets& grads, AdamState& st, double lr,
                      const TrainConfig& cfg) {
    st.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
    auto pb = param_buffers(params);
    auto gb = param_buffers(grads);
    auto mb = param_buffers(st.m);
    auto vb = param_buffers(st.v);
    for (size_t k = 0; k < pb.size(); ++k) {
        std::vector<double>& p = *pb[k];
        const std::vector<double>& g = *gb[k];
        std::vector<double>& m = *mb[k];
        std::vector<double>& v = *vb[k];
        for (size_t i = 0; i < p.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps_adam);
        }
    }
    project_icnn(params);
}

// ---------------------------------------------------------------------------
// Taped step graph: the full TVDRK3 step of the learned law built once as a
// static graph, replayed per time step with fresh leaf values. Backprop
// through a window chains per-step reverse sweeps (adjoints of the incoming
// state flow to the previous step).
// ---------------------------------------------------------------------------

struct TapeAlg {
    ad::Tape* t;
    using V = ad::NodeId;
    V add(V a, V b) const { return t->add(a, b); }
    V sub(V a, V b) const { return t->sub(a, b); }
    V mul(V a, V b) const { return t->mul(a, b); }
    V scale(double s, V a) const { return t->scale(s, a); }
    V axpy(double s, V a, V b) const { return t->axpy(s, a, b); }  // a + s*b
    V add_const(double s, V a) const { return t->add_const(s, a); }
    V square(V a) const { return t->square(a); }
    V recip(V a) const { return t->recip(a); }
};

class StepGraph {
public:
    StepGraph(FluxNets& nets, FluxNets& grads, const GridField& proto, double dt)
        : nets_(&nets), proto_(proto), dt_(dt) {
        p_ = proto.p;
        nx_ = proto.nx;
        ny_ = proto.d == 2 ? proto.ny : 1;
        dims_ = proto.d;
        tape_.ctx.reg_eps = 0.0;
        tape_.ctx.wave_speed = [this](int dir, const double* b_mat, const double* vbar, int p) {
            Mat b(p);
            for (int i = 0; i < p * p; ++i) b.m[static_cast<size_t>(i)] = b_mat[i];
            Vec vb(p);
            for (int i = 0; i < p; ++i) vb[i] = vbar[i];
            const Mat a = fcnn_hess(nets_->phi[static_cast<size_t>(dir)], vb).hess;
            const double dxd = dir == 0 ? proto_.dx : proto_.dy;
            return clip_wave_speed(wave_speed(a, b), dxd, dt_);
        };
        tn_ = TapeNets::emit_leaves(tape_, nets, &grads);
        build();
    }

    void set_reg_epoch(int epoch) { tape_.ctx.reg_eps = hessian_reg_eps(epoch); }

    /// Forward pass over a window; returns the loss numerator
    /// sum_{l>=1} sum_j ||u_hat - u||_1. Each step's execution state is
    /// snapshotted so the reverse sweeps replay without re-running forward,
    /// unless the series would exceed the memory budget, in which case the
    /// backward pass recomputes each step from the stored states instead.
    double forward_window(const std::vector<GridField>& window) {
        const int L = static_cast<int>(window.size()) - 1;
        states_.assign(1, extract_interior(window[0]));
        ad::TapeState probe;
        tape_.save_state(probe);
        use_snapshots_ =
            probe.vals.size() * sizeof(double) * static_cast<size_t>(L) < snapshot_budget_;
        snaps_.assign(use_snapshots_ ? static_cast<size_t>(L) + 1 : 0, {});
        bind_boundary(window[0]);
        double num = 0;
        for (int l = 1; l <= L; ++l) {
            bind_state(states_.back());
            bind_data(window[static_cast<size_t>(l)]);
            tape_.forward();
            const double ln = tape_.first(loss_);
            if (!std::isfinite(ln)) throw_nonfinite(l);
            num += ln;
            states_.push_back(extract_out());
            if (use_snapshots_) tape_.save_state(snaps_[static_cast<size_t>(l)]);
        }
        return num;
    }

    /// Reverse sweeps for the window last passed through forward_window;
    /// parameter adjoints are scaled by `seed` (1/denominator) and
    /// accumulated into the gradient buffers registered at construction.
    void backward_window(const std::vector<GridField>& window, double seed) {
        const int L = static_cast<int>(states_.size()) - 1;
        std::vector<double> delta(static_cast<size_t>(nx_ * ny_ * p_), 0.0);
        std::vector<double> delta_prev(delta.size());
        for (int l = L; l >= 1; --l) {
            if (use_snapshots_) {
                tape_.restore_state(snaps_[static_cast<size_t>(l)]);
            } else {
                bind_state(states_[static_cast<size_t>(l - 1)]);
                bind_data(window[static_cast<size_t>(l)]);
                tape_.forward();
            }
            tape_.zero_adjoints();
            tape_.seed_adjoint(loss_, std::span<const double>(&seed, 1));
            for (int cell = 0; cell < nx_ * ny_; ++cell)
                tape_.seed_adjoint(u_out_[static_cast<size_t>(cell)],
                                   std::span<const double>(delta.data() + cell * p_,
                                                           static_cast<size_t>(p_)));
            tape_.run_reverse();
            for (int cell = 0; cell < nx_ * ny_; ++cell) {
                const std::span<double> a = tape_.adj(u_in_[static_cast<size_t>(cell)]);
                for (int c = 0; c < p_; ++c) delta_prev[static_cast<size_t>(cell * p_ + c)] = a[c];
            }
            std::swap(delta, delta_prev);
        }
    }

    ad::Tape& tape() { return tape_; }

private:
    ad::Tape tape_;
    TapeNets tn_;
    FluxNets* nets_;
    GridField proto_;
    double dt_;
    int p_ = 1, nx_ = 0, ny_ = 1, dims_ = 1;

    std::vector<ad::NodeId> u_in_, data_in_, u_out_;
    std::vector<ad::NodeId> bcx_lo_, bcx_hi_, bcy_lo_, bcy_hi_;  // per transverse cell
    ad::NodeId loss_ = ad::kNil;
    struct FluxRecord {
        int dir, iface;
        ad::NodeId node;
    };
    std::vector<FluxRecord> flux_nodes_;
    std::vector<std::vector<double>> states_;
    std::vector<ad::TapeState> snaps_;
    bool use_snapshots_ = true;
    size_t snapshot_budget_ = size_t{6} << 30;  // fall back to recompute past 6 GB

    int cells() const { return nx_ * ny_; }

    std::vector<double> extract_interior(const GridField& f) const {
        std::vector<double> s(static_cast<size_t>(cells() * p_));
        size_t q = 0;
        for (int j = 0; j < ny_; ++j)
            for (int i = 0; i < nx_; ++i) {
                const double* u = f.at(i, j);
                for (int c = 0; c < p_; ++c) s[q++] = u[c];
            }
        return s;
    }
    std::vector<double> extract_out() {
        std::vector<double> s(static_cast<size_t>(cells() * p_));
        for (int cell = 0; cell < cells(); ++cell) {
            const std::span<double> v = tape_.val(u_out_[static_cast<size_t>(cell)]);
            for (int c = 0; c < p_; ++c) s[static_cast<size_t>(cell * p_ + c)] = v[c];
        }
        return s;
    }
    void bind_state(const std::vector<double>& s) {
        for (int cell = 0; cell < cells(); ++cell)
            tape_.set(u_in_[static_cast<size_t>(cell)],
                      std::span<const double>(s.data() + cell * p_, static_cast<size_t>(p_)));
    }
    void bind_data(const GridField& f) {
        for (int j = 0; j < ny_; ++j)
            for (int i = 0; i < nx_; ++i)
                tape_.set(data_in_[static_cast<size_t>(j * nx_ + i)],
                          std::span<const double>(f.at(i, j), static_cast<size_t>(p_)));
    }
    void bind_boundary(const GridField& f) {
        if (f.bcx.kind == BoundarySpec::kDirichlet)
            for (int j = 0; j < ny_; ++j) {
                tape_.set(bcx_lo_[static_cast<size_t>(j)],
                          std::span<const double>(f.bcx.lo.data() + j * p_, static_cast<size_t>(p_)));
                tape_.set(bcx_hi_[static_cast<size_t>(j)],
                          std::span<const double>(f.bcx.hi.data() + j * p_, static_cast<size_t>(p_)));
            }
        if (dims_ == 2 && f.bcy.kind == BoundarySpec::kDirichlet)
            for (int i = 0; i < nx_; ++i) {
                tape_.set(bcy_lo_[static_cast<size_t>(i)],
                          std::span<const double>(f.bcy.lo.data() + i * p_, static_cast<size_t>(p_)));
                tape_.set(bcy_hi_[static_cast<size_t>(i)],
                          std::span<const double>(f.bcy.hi.data() + i * p_, static_cast<size_t>(p_)));
            }
    }
    [[noreturn]] void throw_nonfinite(int step) {
        // arena still holds the failing forward's values; locate the first bad flux
        for (const FluxRecord& fr : flux_nodes_) {
            const std::span<double> v = tape_.val(fr.node);
            for (int c = 0; c < p_; ++c)
                if (!std::isfinite(v[c]))
                    throw NonFiniteError("non-finite interface flux in rollout", step, fr.dir,
                                         fr.iface);
        }
        throw NonFiniteError("non-finite state in rollout", step, -1, -1);
    }

    ad::NodeId stable_flux_nodes(int dir, ad::NodeId uL, ad::NodeId uR, int iface) {
        TapeAlg alg{&tape_};
        const ad::NodeId vL = tn_.entropy_grad(tape_, uL);
        const ad::NodeId vR = tn_.entropy_grad(tape_, uR);
        const auto [phiL, fL] = tn_.potential_and_flux(tape_, dir, vL);
        const auto [phiR, fR] = tn_.potential_and_flux(tape_, dir, vR);
        const ad::NodeId ubar = tape_.scale(0.5, tape_.add(uL, uR));
        const ad::NodeId vbar = tape_.scale(0.5, tape_.add(vL, vR));
        const ad::NodeId jv = tape_.sub(vR, vL);
        const ad::NodeId ju = tape_.sub(uR, uL);
        const ad::NodeId sumf = tape_.add(fL, fR);
        const ad::NodeId jphi = tape_.sub(phiR, phiL);
        const ad::NodeId fstar =
            tape_.add(tape_.scale(0.5, sumf), tape_.ec_project(jphi, jv, sumf, vbar));
        const ad::NodeId bsym = tn_.entropy_hess(tape_, ubar);
        const ad::NodeId breg = tape_.add_diag_ctx(bsym, p_);
        const ad::NodeId w = tape_.solve_clamped(breg, jv, ju, dir, iface);
        const ad::NodeId lam = tape_.wave_speed_node(bsym, vbar, dir);
        const ad::NodeId fhat = tape_.add(fstar, tape_.bmul(tape_.scale(-0.5, lam), w));
        flux_nodes_.push_back({dir, iface, fhat});
        return fhat;
    }

    void build() {
        TapeAlg alg{&tape_};
        for (int cell = 0; cell < cells(); ++cell) u_in_.push_back(tape_.input(p_));
        for (int cell = 0; cell < cells(); ++cell) data_in_.push_back(tape_.input(p_));
        if (proto_.bcx.kind == BoundarySpec::kDirichlet)
            for (int j = 0; j < ny_; ++j) {
                bcx_lo_.push_back(tape_.input(p_));
                bcx_hi_.push_back(tape_.input(p_));
            }
        if (dims_ == 2 && proto_.bcy.kind == BoundarySpec::kDirichlet)
            for (int i = 0; i < nx_; ++i) {
                bcy_lo_.push_back(tape_.input(p_));
                bcy_hi_.push_back(tape_.input(p_));
            }

        auto cell_at = [&](const std::vector<ad::NodeId>& z, int i, int j) -> ad::NodeId {
            if (proto_.bcx.kind == BoundarySpec::kPeriodic) i = (i % nx_ + nx_) % nx_;
            if (dims_ == 2 && proto_.bcy.kind == BoundarySpec::kPeriodic)
                j = (j % ny_ + ny_) % ny_;
            if (i < 0) return bcx_lo_[static_cast<size_t>(j)];
            if (i >= nx_) return bcx_hi_[static_cast<size_t>(j)];
            if (j < 0) return bcy_lo_[static_cast<size_t>(i)];
            if (j >= ny_) return bcy_hi_[static_cast<size_t>(i)];
            return z[static_cast<size_t>(j * nx_ + i)];
        };

        // rate of one stage state
        auto stage_rate = [&](const std::vector<ad::NodeId>& z) {
            std::vector<ad::NodeId> rate(static_cast<size_t>(cells()), ad::kNil);
            // x sweeps
            for (int j = 0; j < ny_; ++j) {
                const int nf = proto_.bcx.kind == BoundarySpec::kPeriodic ? nx_ : nx_ + 1;
                std::vector<ad::NodeId> F(static_cast<size_t>(nx_ + 1));
                for (int i = 0; i < nf; ++i) {
                    ad::NodeId sm[5], sp[5];
                    for (int k = 0; k < 5; ++k) {
                        sm[k] = cell_at(z, i - 3 + k, j);
                        sp[k] = cell_at(z, i + 2 - k, j);
                    }
                    const ad::NodeId um = weno5_left(alg, sm, proto_.dx);
                    const ad::NodeId up = weno5_left(alg, sp, proto_.dx);
                    F[static_cast<size_t>(i)] = stable_flux_nodes(0, um, up, i);
                }
                if (proto_.bcx.kind == BoundarySpec::kPeriodic)
                    F[static_cast<size_t>(nx_)] = F[0];
                for (int i = 0; i < nx_; ++i) {
                    const ad::NodeId diff =
                        tape_.sub(F[static_cast<size_t>(i + 1)], F[static_cast<size_t>(i)]);
                    const ad::NodeId r = tape_.scale(-1.0 / proto_.dx, diff);
                    rate[static_cast<size_t>(j * nx_ + i)] = r;
                }
            }
            if (dims_ == 2) {
                for (int i = 0; i < nx_; ++i) {
                    const int nf = proto_.bcy.kind == BoundarySpec::kPeriodic ? ny_ : ny_ + 1;
                    std::vector<ad::NodeId> F(static_cast<size_t>(ny_ + 1));
                    for (int j = 0; j < nf; ++j) {
                        ad::NodeId sm[5], sp[5];
                        for (int k = 0; k < 5; ++k) {
                            sm[k] = cell_at(z, i, j - 3 + k);
                            sp[k] = cell_at(z, i, j + 2 - k);
                        }
                        const ad::NodeId um = weno5_left(alg, sm, proto_.dy);
                        const ad::NodeId up = weno5_left(alg, sp, proto_.dy);
                        F[static_cast<size_t>(j)] = stable_flux_nodes(1, um, up, j);
                    }
                    if (proto_.bcy.kind == BoundarySpec::kPeriodic)
                        F[static_cast<size_t>(ny_)] = F[0];
                    for (int j = 0; j < ny_; ++j) {
                        const ad::NodeId diff =
                            tape_.sub(F[static_cast<size_t>(j + 1)], F[static_cast<size_t>(j)]);
                        const ad::NodeId r = tape_.scale(-1.0 / proto_.dy, diff);
                        rate[static_cast<size_t>(j * nx_ + i)] =
                            tape_.add(rate[static_cast<size_t>(j * nx_ + i)], r);
                    }
                }
            }
            return rate;
        };

        // TVDRK3 stages
        const std::vector<ad::NodeId>& z0 = u_in_;
        const std::vector<ad::NodeId> r0 = stage_rate(z0);
        std::vector<ad::NodeId> z1(static_cast<size_t>(cells()));
        for (int c = 0; c < cells(); ++c)
            z1[static_cast<size_t>(c)] =
                tape_.axpy(dt_, z0[static_cast<size_t>(c)], r0[static_cast<size_t>(c)]);
        const std::vector<ad::NodeId> r1 = stage_rate(z1);
        std::vector<ad::NodeId> z2(static_cast<size_t>(cells()));
        for (int c = 0; c < cells(); ++c) {
            const ad::NodeId a =
                tape_.axpy(dt_, z1[static_cast<size_t>(c)], r1[static_cast<size_t>(c)]);
            z2[static_cast<size_t>(c)] =
                tape_.axpy(0.25, tape_.scale(0.75, z0[static_cast<size_t>(c)]), a);
        }
        const std::vector<ad::NodeId> r2 = stage_rate(z2);
        u_out_.assign(static_cast<size_t>(cells()), ad::kNil);
        for (int c = 0; c < cells(); ++c) {
            const ad::NodeId a = tape_.axpy(dt_, z2[static_cast<size_t>(c)],
                                            r2[static_cast<size_t>(c)]);
            u_out_[static_cast<size_t>(c)] =
                tape_.axpy(2.0 / 3.0, tape_.scale(1.0 / 3.0, z0[static_cast<size_t>(c)]), a);
        }

        // L1 mismatch against the bound data snapshot
        ad::NodeId acc = ad::kNil;
        for (int c = 0; c < cells(); ++c) {
            const ad::NodeId term = tape_.sum(tape_.abs_(
                tape_.sub(u_out_[static_cast<size_t>(c)], data_in_[static_cast<size_t>(c)])));
            acc = acc == ad::kNil ? term : tape_.add(acc, term);
        }
        loss_ = acc;
    }
};

/// Normalized recurrent loss over a batch of windows (evaluation path).
inline double recurrent_loss(const FluxNets& nets,
                             std::span<const std::vector<GridField>> batch, int epoch, double dt) {
    if (batch.empty()) throw Error("recurrent_loss: empty batch");
    double num = 0, den = 0;
    for (const auto& window : batch) {
        for (const GridField& f : window)
            for (int j = 0; j < f.ny; ++j)
                for (int i = 0; i < f.nx; ++i) {
                    const double* u = f.at(i, j);
                    for (int c = 0; c < f.p; ++c) den += std::abs(u[c]);
                }
        const int L = static_cast<int>(window.size()) - 1;
        const std::vector<GridField> pred = rollout(nets, window[0], L, epoch, dt);
        for (int l = 1; l <= L; ++l) {
            const GridField& a = pred[static_cast<size_t>(l)];
            const GridField& b = window[static_cast<size_t>(l)];
            for (int j = 0; j < a.ny; ++j)
                for (int i = 0; i < a.nx; ++i) {
                    const double* pa = a.at(i, j);
                    const double* pb = b.at(i, j);
                    for (int c = 0; c < a.p; ++c) num += std::abs(pa[c] - pb[c]);
                }
        }
    }
    if (den == 0.0) throw Error("recurrent_loss: zero denominator (all-zero data)");
    return num / den;
}

/// Recurrent-loss value and parameter gradient over a batch, accumulated into
/// `grads` (which must be the gradient bundle the graph was built against).
/// Windows are processed in ascending index order.
inline double loss_gradient_batch(StepGraph& graph, FluxNets& grads,
                                  std::span<const std::vector<GridField>> batch, int epoch) {
    if (batch.empty()) throw Error("loss_gradient: empty batch");
    for (auto* buf : param_buffers(grads)) std::fill(buf->begin(), buf->end(), 0.0);
    graph.set_reg_epoch(epoch);
    double den = 0;
    for (const auto& window : batch)
        for (const GridField& f : window)
            for (int j = 0; j < f.ny; ++j)
                for (int i = 0; i < f.nx; ++i) {
                    const double* u = f.at(i, j);
                    for (int c = 0; c < f.p; ++c) den += std::abs(u[c]);
                }
    if (den == 0.0) throw Error("loss_gradient: zero denominator (all-zero data)");
    double num = 0;
    for (const auto& window : batch) {
        num += graph.forward_window(window);
        graph.backward_window(window, 1.0 / den);
    }
    return num / den;
}

/// Standalone gradient of the recurrent loss for a single batch.
inline std::pair<double, FluxNets> loss_gradient(FluxNets& nets,
                                                 std::span<const std::vector<GridField>> batch,
                                                 int epoch, double dt) {
    FluxNets grads = zeros_like(nets);
    StepGraph graph(nets, grads, batch[0][0], dt);
    const double loss = loss_gradient_batch(graph, grads, batch, epoch);
    return {loss, std::move(grads)};
}

struct TrainResult {
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = -1;
    double final_train = 0;
    bool aborted = false;
    std::string abort_reason;
};

/// Full training run: Adam over the recurrent loss with the one-cycle cosine
/// schedule, per-epoch validation in evaluation mode, best-validation and
/// final checkpoints, and a CSV log `epoch,train_loss,val_loss,lr,seconds`.
inline TrainResult train(const TrajectoryDataset& ds, const TrainConfig& cfg,
                         const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    Problem pr = get_problem(ds.problem);
    pr.g = ds.g;
    FluxNets nets = make_nets_for(pr, cfg.seed);
    FluxNets grads = zeros_like(nets);
    AdamState adam(nets);

    const int n_train = std::min<int>(cfg.n_traj, ds.N_traj);
    const int n_val = std::min<int>(cfg.validation_count, ds.n_val());
    if (n_train < 1) throw Error("train: no training windows");
    std::span<const std::vector<GridField>> all(ds.windows);
    const auto train_windows = all.subspan(0, static_cast<size_t>(n_train));
    const auto val_windows = all.subspan(static_cast<size_t>(ds.N_traj), static_cast<size_t>(n_val));

    StepGraph graph(nets, grads, ds.windows[0][0], ds.dt);
    const long steps_per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;
    const long total_steps = cfg.epochs * steps_per_epoch;

    std::ofstream log(out_dir + "/training_log.csv");
    if (!log) throw Error("cannot write training log in " + out_dir);
    log << "epoch,train_loss,val_loss,lr,seconds\n";

    TrainResult res;
    long step = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto tic = std::chrono::steady_clock::now();
        double epoch_num = 0, epoch_den = 0;
        double lr = 0;
        try {
            for (long b = 0; b < steps_per_epoch; ++b) {
                const size_t lo = static_cast<size_t>(b) * static_cast<size_t>(cfg.batch_size);
                const size_t hi = std::min<size_t>(lo + static_cast<size_t>(cfg.batch_size),
                                                   static_cast<size_t>(n_train));
                const auto batch = train_windows.subspan(lo, hi - lo);
                lr = lr_schedule(step, total_steps, cfg);
                const double loss = loss_gradient_batch(graph, grads, batch, epoch);
                if (!std::isfinite(loss))
                    throw NonFiniteError("non-finite training loss", -1, -1, -1);
                // batch loss is already normalized; recover numerator for the epoch log
                double bden = 0;
                for (const auto& window : batch)
                    for (const GridField& f : window)
                        for (int j = 0; j < f.ny; ++j)
                            for (int i = 0; i < f.nx; ++i) {
                                const double* u = f.at(i, j);
                                for (int c = 0; c < f.p; ++c) bden += std::abs(u[c]);
                            }
                epoch_num += loss * bden;
                epoch_den += bden;
                adam_step(nets, grads, adam, lr, cfg);
                ++step;
            }
        } catch (const Error& e) {
            res.aborted = true;
            res.abort_reason = e.what();
            save_checkpoint(nets, out_dir + "/final.json", {ds.problem, epoch, res.best_val});
            log << epoch << ",nan,nan," << lr << ",0\n";
            return res;
        }
        const double train_loss = epoch_num / epoch_den;
        double val_loss = train_loss;
        if (n_val > 0) val_loss = recurrent_loss(nets, val_windows, 0, ds.dt);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - tic).count();
        log << epoch << "," << detail::fmt17(train_loss) << "," << detail::fmt17(val_loss) << ","
            << detail::fmt17(lr) << "," << detail::fmt17(secs) << "\n";
        log.flush();
        if (val_loss < res.best_val) {
            res.best_val = val_loss;
            res.best_epoch = epoch;
            save_checkpoint(nets, out_dir + "/best.json", {ds.problem, epoch, val_loss});
        }
        res.final_train = train_loss;
        save_checkpoint(nets, out_dir + "/final.json", {ds.problem, epoch, val_loss});
    }
    return res;
}

}  // namespace symclaw
