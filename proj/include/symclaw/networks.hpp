#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "symclaw/common.hpp"
#include "symclaw/rng.hpp"
#include "symclaw/tape.hpp"

namespace symclaw {

inline constexpr int kMaxWidth = 128;

struct Dense {
    int rows = 0, cols = 0;
    std::vector<double> a;
    Dense() = default;
    Dense(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0) {}
    double& operator()(int i, int j) { return a[static_cast<size_t>(i * cols + j)]; }
    double operator()(int i, int j) const { return a[static_cast<size_t>(i * cols + j)]; }
};

/// Flux-potential network: plain feedforward, tanh hidden layers, scalar output.
struct FcnnParams {
    int in_dim = 1;
    std::vector<int> hidden;
    std::vector<Dense> W;                 // hidden.size()+1 layers
    std::vector<std::vector<double>> b;

    static FcnnParams make(int in_dim, std::vector<int> hidden) {
        FcnnParams f;
        f.in_dim = in_dim;
        f.hidden = std::move(hidden);
        int prev = in_dim;
        for (int h : f.hidden) {
            f.W.emplace_back(h, prev);
            f.b.emplace_back(static_cast<size_t>(h), 0.0);
            prev = h;
        }
        f.W.emplace_back(1, prev);
        f.b.emplace_back(1, 0.0);
        return f;
    }
};

/// Entropy network: input-convex (nonnegative recursion weights, softplus
/// activations) with quadratic/linear input augmentation. The quadratic
/// coefficients are huber(Ws) >= 0, so convexity survives any Ws value.
struct IcnnParams {
    int in_dim = 1;
    std::vector<int> hidden;
    std::vector<Dense> Wz, Wx;
    std::vector<std::vector<double>> b;
    Dense Wout;  // 1 x hidden.back(), projected nonnegative like the Wz chain
    std::vector<double> bout;
    std::vector<double> Ws, Wl;

    static IcnnParams make(int in_dim, std::vector<int> hidden) {
        IcnnParams e;
        e.in_dim = in_dim;
        e.hidden = std::move(hidden);
        int prev = in_dim;
        for (int h : e.hidden) {
            e.Wz.emplace_back(h, prev);
            e.Wx.emplace_back(h, in_dim);
            e.b.emplace_back(static_cast<size_t>(h), 0.0);
            prev = h;
        }
        e.Wout = Dense(1, prev);
        e.bout.assign(1, 0.0);
        e.Ws.assign(static_cast<size_t>(in_dim), 0.0);
        e.Wl.assign(static_cast<size_t>(in_dim), 0.0);
        return e;
    }
};

/// One entropy network plus one flux potential per spatial direction.
struct FluxNets {
    int p = 1, d = 1;
    std::vector<FcnnParams> phi;
    IcnnParams eta;

    static FluxNets make(int p, int d, std::vector<int> fcnn_hidden, std::vector<int> icnn_hidden) {
        FluxNets n;
        n.p = p;
        n.d = d;
        for (int i = 0; i < d; ++i) n.phi.push_back(FcnnParams::make(p, fcnn_hidden));
        n.eta = IcnnParams::make(p, std::move(icnn_hidden));
        return n;
    }
};

/// Clamps the convexity-critical weights onto the nonnegative orthant:
/// every hidden recursion matrix and the output weight that closes the chain.
/// Idempotent; every other parameter is untouched.
inline void project_icnn(IcnnParams& e) {
    for (Dense& w : e.Wz)
        for (double& x : w.a) x = x > 0 ? x : 0.0;
    for (double& x : e.Wout.a) x = x > 0 ? x : 0.0;
}

inline void project_icnn(FluxNets& n) { project_icnn(n.eta); }

/// Parameter buffers in serialization order: flux potentials first (direction
/// order, per layer W row-major then b), then the entropy network
/// (per hidden layer Wz, Wx, b; then output W, b, Ws, Wl).
inline std::vector<std::vector<double>*> param_buffers(FluxNets& n) {
    std::vector<std::vector<double>*> out;
    for (FcnnParams& f : n.phi)
        for (size_t l = 0; l < f.W.size(); ++l) {
            out.push_back(&f.W[l].a);
            out.push_back(&f.b[l]);
        }
    for (size_t l = 0; l < n.eta.Wz.size(); ++l) {
        out.push_back(&n.eta.Wz[l].a);
        out.push_back(&n.eta.Wx[l].a);
        out.push_back(&n.eta.b[l]);
    }
    out.push_back(&n.eta.Wout.a);
    out.push_back(&n.eta.bout);
    out.push_back(&n.eta.Ws);
    out.push_back(&n.eta.Wl);
    return out;
}

inline size_t param_count(FluxNets& n) {
    size_t c = 0;
    for (auto* buf : param_buffers(n)) c += buf->size();
    return c;
}

inline std::vector<double> flatten(FluxNets& n) {
    std::vector<double> flat;
    for (auto* buf : param_buffers(n)) flat.insert(flat.end(), buf->begin(), buf->end());
    return flat;
}

inline void unflatten(FluxNets& n, std::span<const double> flat) {
    size_t off = 0;
    for (auto* buf : param_buffers(n)) {
        if (off + buf->size() > flat.size()) throw Error("unflatten: parameter blob too short");
        std::copy(flat.begin() + static_cast<long>(off),
                  flat.begin() + static_cast<long>(off + buf->size()), buf->begin());
        off += buf->size();
    }
    if (off != flat.size()) throw Error("unflatten: parameter blob size mismatch");
}

/// Structural clone with all parameters zeroed (gradient / moment buffers).
inline FluxNets zeros_like(const FluxNets& n) {
    FluxNets z = n;
    for (auto* buf : param_buffers(z)) std::fill(buf->begin(), buf->end(), 0.0);
    return z;
}

/// Hidden weights uniform(+-sqrt(1/fan_in)), biases zero, Ws = 1 (so the
/// initial entropy is ~ 0.5|u|^2 plus a small convex perturbation), Wl = 0.
/// The convexity projection is applied before returning.
inline void init_params(FluxNets& n, uint64_t seed) {
    Rng rng(seed);
    auto fill = [&](Dense& w) {
        const double s = 1.0 / std::sqrt(static_cast<double>(w.cols));
        for (double& x : w.a) x = rng.uniform(-s, s);
    };
    for (FcnnParams& f : n.phi)
        for (Dense& w : f.W) fill(w);
    for (size_t l = 0; l < n.eta.Wz.size(); ++l) {
        fill(n.eta.Wz[l]);
        fill(n.eta.Wx[l]);
    }
    fill(n.eta.Wout);
    std::fill(n.eta.Ws.begin(), n.eta.Ws.end(), 1.0);
    std::fill(n.eta.Wl.begin(), n.eta.Wl.end(), 0.0);
    project_icnn(n);
}

// ---------------------------------------------------------------------------
// Fast evaluators: propagate value, input Jacobian rows, and packed input
// Hessians layer by layer. MODE 0 = value, 1 = +gradient, 2 = +Hessian.
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr int kPack = 6;  // packed upper triangle for p <= 3

/// Upper-triangle packing for the active dimension p: row-major offsets over
/// (k, l), k <= l < p.
inline constexpr int pack_idx(int k, int l, int p) {
    if (k > l) std::swap(k, l);
    return k * p - k * (k - 1) / 2 + (l - k);
}
inline constexpr int npack(int p) { return p * (p + 1) / 2; }

/// Channel-major layer state: channel 0 holds values, channels 1..p the
/// gradient rows, then npack(p) packed Hessian channels. Each channel is
/// contiguous over neurons so the affine pushforward reduces to unit-stride
/// dot products.
struct LayerBuf {
    double chan[1 + kMaxComps + kPack][kMaxWidth];
};

template <int MODE>
inline int nchan(int p) {
    if constexpr (MODE == 0) return 1;
    if constexpr (MODE == 1) return 1 + p;
    return 1 + p + npack(p);
}

template <int MODE>
inline void affine_prop(const Dense& W, const double* bias, const LayerBuf& in, int nin, int p,
                        LayerBuf& out) {
    const int nc = nchan<MODE>(p);
    for (int i = 0; i < W.rows; ++i) {
        const double* __restrict w = &W.a[static_cast<size_t>(i * W.cols)];
        for (int c = 0; c < nc; ++c) {
            const double* __restrict src = in.chan[c];
            double s = (c == 0 && bias) ? bias[i] : 0.0;
            for (int j = 0; j < nin; ++j) s += w[j] * src[j];
            out.chan[c][i] = s;
        }
    }
}

template <int MODE>
inline void add_skip(const Dense& Wx, const Vec& x, LayerBuf& out) {
    for (int i = 0; i < Wx.rows; ++i) {
        const double* w = &Wx.a[static_cast<size_t>(i * Wx.cols)];
        double s = 0;
        for (int j = 0; j < x.n; ++j) s += w[j] * x[j];
        out.chan[0][i] += s;
        if constexpr (MODE >= 1)
            for (int k = 0; k < x.n; ++k) out.chan[1 + k][i] += w[k];
    }
}

/// In-place activation with first/second derivative pushforward.
template <int MODE, class Act>
inline void act_prop(LayerBuf& buf, int nrows, int p, Act act) {
    for (int i = 0; i < nrows; ++i) {
        const auto [s, s1, s2] = act(buf.chan[0][i]);
        buf.chan[0][i] = s;
        if constexpr (MODE >= 2) {
            for (int k = 0; k < p; ++k)
                for (int l = k; l < p; ++l) {
                    double& h = buf.chan[1 + p + pack_idx(k, l, p)][i];
                    h = s1 * h + s2 * buf.chan[1 + k][i] * buf.chan[1 + l][i];
                }
        }
        if constexpr (MODE >= 1)
            for (int k = 0; k < p; ++k) buf.chan[1 + k][i] *= s1;
    }
}

struct TanhAct {
    std::tuple<double, double, double> operator()(double x) const {
        const double t = std::tanh(x);
        const double d = 1.0 - t * t;
        return {t, d, -2.0 * t * d};
    }
};
struct SoftplusAct {
    std::tuple<double, double, double> operator()(double x) const {
        const double s = sigmoid_fn(x);
        return {softplus_fn(x), s, s * (1.0 - s)};
    }
};

template <int MODE>
inline void seed_input(const Vec& x, LayerBuf& buf) {
    const int nc = nchan<MODE>(x.n);
    for (int c = 0; c < nc; ++c)
        for (int i = 0; i < x.n; ++i) buf.chan[c][i] = 0.0;
    for (int i = 0; i < x.n; ++i) {
        buf.chan[0][i] = x[i];
        if constexpr (MODE >= 1) buf.chan[1 + i][i] = 1.0;
    }
}

}  // namespace detail

struct EvalOut {
    double value = 0;
    Vec grad;
    Mat hess;
};

template <int MODE>
inline EvalOut fcnn_eval_mode(const FcnnParams& f, const Vec& v) {
    if (v.n != f.in_dim) throw Error("fcnn: input dimension mismatch");
    using namespace detail;
    static thread_local LayerBuf buf_a, buf_b;
    LayerBuf* in = &buf_a;
    LayerBuf* out = &buf_b;
    seed_input<MODE>(v, *in);
    int nin = v.n;
    for (size_t l = 0; l < f.hidden.size(); ++l) {
        affine_prop<MODE>(f.W[l], f.b[l].data(), *in, nin, v.n, *out);
        act_prop<MODE>(*out, f.W[l].rows, v.n, TanhAct{});
        std::swap(in, out);
        nin = f.W[l].rows;
    }
    affine_prop<MODE>(f.W.back(), f.b.back().data(), *in, nin, v.n, *out);
    EvalOut r;
    r.value = out->chan[0][0];
    if constexpr (MODE >= 1) {
        r.grad = Vec(v.n);
        for (int k = 0; k < v.n; ++k) r.grad[k] = out->chan[1 + k][0];
    }
    if constexpr (MODE >= 2) {
        r.hess = Mat(v.n);
        for (int k = 0; k < v.n; ++k)
            for (int l = 0; l < v.n; ++l)
                r.hess(k, l) = out->chan[1 + v.n + pack_idx(k, l, v.n)][0];
    }
    return r;
}

inline double fcnn_eval(const FcnnParams& f, const Vec& v) { return fcnn_eval_mode<0>(f, v).value; }
/// g_i(v) = grad of the scalar potential; the flux in entropy variables.
inline EvalOut fcnn_grad(const FcnnParams& f, const Vec& v) { return fcnn_eval_mode<1>(f, v); }
inline EvalOut fcnn_hess(const FcnnParams& f, const Vec& v) { return fcnn_eval_mode<2>(f, v); }

template <int MODE>
inline EvalOut icnn_eval_mode(const IcnnParams& e, const Vec& u) {
    if (u.n != e.in_dim) throw Error("icnn: input dimension mismatch");
    using namespace detail;
    static thread_local LayerBuf buf_a, buf_b;
    LayerBuf* in = &buf_a;
    LayerBuf* out = &buf_b;
    seed_input<MODE>(u, *in);
    int nin = u.n;
    for (size_t l = 0; l < e.hidden.size(); ++l) {
        affine_prop<MODE>(e.Wz[l], e.b[l].data(), *in, nin, u.n, *out);
        add_skip<MODE>(e.Wx[l], u, *out);
        act_prop<MODE>(*out, e.Wz[l].rows, u.n, SoftplusAct{});
        std::swap(in, out);
        nin = e.Wz[l].rows;
    }
    affine_prop<MODE>(e.Wout, e.bout.data(), *in, nin, u.n, *out);
    EvalOut r;
    r.value = out->chan[0][0];
    if constexpr (MODE >= 1) {
        r.grad = Vec(u.n);
        for (int k = 0; k < u.n; ++k) r.grad[k] = out->chan[1 + k][0];
    }
    if constexpr (MODE >= 2) {
        r.hess = Mat(u.n);
        for (int k = 0; k < u.n; ++k)
            for (int l = 0; l < u.n; ++l)
                r.hess(k, l) = out->chan[1 + u.n + pack_idx(k, l, u.n)][0];
    }
    // quadratic + linear augmentation
    for (int i = 0; i < u.n; ++i) {
        const double h = huber_fn(e.Ws[static_cast<size_t>(i)]);
        r.value += h * u[i] * u[i] + e.Wl[static_cast<size_t>(i)] * u[i];
        if constexpr (MODE >= 1) r.grad[i] += 2.0 * h * u[i] + e.Wl[static_cast<size_t>(i)];
        if constexpr (MODE >= 2) r.hess(i, i) += 2.0 * h;
    }
    return r;
}

inline double icnn_eval(const IcnnParams& e, const Vec& u) { return icnn_eval_mode<0>(e, u).value; }
/// Entropy variables v = grad of the entropy at u.
inline EvalOut icnn_grad(const IcnnParams& e, const Vec& u) { return icnn_eval_mode<1>(e, u); }
inline EvalOut icnn_hess(const IcnnParams& e, const Vec& u) { return icnn_eval_mode<2>(e, u); }

inline Vec entropy_variables(const IcnnParams& e, const Vec& u) { return icnn_grad(e, u).grad; }
inline Vec flux_in_entropy_vars(const FcnnParams& f, const Vec& v) { return fcnn_grad(f, v).grad; }

// ---------------------------------------------------------------------------
// Tape emission. Leaves are registered once per tape; the emitted subgraphs
// stay transcribable so input gradients and Hessians remain differentiable
// with respect to the parameters.
// ---------------------------------------------------------------------------

struct TapeNets {
    int p = 1, d = 1;
    struct Fc {
        std::vector<ad::NodeId> W, b;
    };
    std::vector<Fc> phi;
    struct Ic {
        std::vector<ad::NodeId> Wz, Wx, b;
        ad::NodeId Wout, bout, Ws, Wl;
        ad::NodeId huber_ws;  // hoisted: shared by every evaluation on the tape
    } eta;
    std::vector<int> fcnn_rows;  // per-layer output widths
    std::vector<int> icnn_rows;

    /// Registers every parameter buffer of `nets` (and optional matching
    /// gradient buffers) and emits the leaf nodes.
    static TapeNets emit_leaves(ad::Tape& t, FluxNets& nets, FluxNets* grads) {
        TapeNets tn;
        tn.p = nets.p;
        tn.d = nets.d;
        auto leaf = [&](std::vector<double>& buf, std::vector<double>* gbuf) {
            const int id = t.register_param(buf.data(), gbuf ? gbuf->data() : nullptr,
                                            static_cast<int>(buf.size()));
            return t.param(id);
        };
        for (int dir = 0; dir < nets.d; ++dir) {
            Fc fc;
            FcnnParams& f = nets.phi[static_cast<size_t>(dir)];
            FcnnParams* g = grads ? &grads->phi[static_cast<size_t>(dir)] : nullptr;
            for (size_t l = 0; l < f.W.size(); ++l) {
                fc.W.push_back(leaf(f.W[l].a, g ? &g->W[l].a : nullptr));
                fc.b.push_back(leaf(f.b[l], g ? &g->b[l] : nullptr));
                if (dir == 0) tn.fcnn_rows.push_back(f.W[l].rows);
            }
            tn.phi.push_back(std::move(fc));
        }
        IcnnParams& e = nets.eta;
        IcnnParams* ge = grads ? &grads->eta : nullptr;
        for (size_t l = 0; l < e.Wz.size(); ++l) {
            tn.eta.Wz.push_back(leaf(e.Wz[l].a, ge ? &ge->Wz[l].a : nullptr));
            tn.eta.Wx.push_back(leaf(e.Wx[l].a, ge ? &ge->Wx[l].a : nullptr));
            tn.eta.b.push_back(leaf(e.b[l], ge ? &ge->b[l] : nullptr));
            tn.icnn_rows.push_back(e.Wz[l].rows);
        }
        tn.eta.Wout = leaf(e.Wout.a, ge ? &ge->Wout.a : nullptr);
        tn.eta.bout = leaf(e.bout, ge ? &ge->bout : nullptr);
        tn.eta.Ws = leaf(e.Ws, ge ? &ge->Ws : nullptr);
        tn.eta.Wl = leaf(e.Wl, ge ? &ge->Wl : nullptr);
        tn.eta.huber_ws = t.huber_(tn.eta.Ws);
        return tn;
    }

    ad::NodeId fcnn_value(ad::Tape& t, int dir, ad::NodeId x) const {
        const Fc& fc = phi[static_cast<size_t>(dir)];
        ad::NodeId z = x;
        for (size_t l = 0; l + 1 < fc.W.size(); ++l)
            z = t.tanh_(t.affine(fc.W[l], z, fc.b[l]));
        return t.affine(fc.W.back(), z, fc.b.back());
    }

    ad::NodeId icnn_value(ad::Tape& t, ad::NodeId x) const {
        ad::NodeId z = x;
        for (size_t l = 0; l < eta.Wz.size(); ++l) {
            ad::NodeId a = t.affine(eta.Wz[l], z, eta.b[l]);
            a = t.add(a, t.matvec(eta.Wx[l], x, icnn_rows[l]));
            z = t.softplus_(a);
        }
        ad::NodeId y = t.affine(eta.Wout, z, eta.bout);
        y = t.add(y, t.dot(eta.huber_ws, t.square(x)));
        return t.add(y, t.dot(eta.Wl, x));
    }

    /// v = entropy gradient, as differentiable nodes.
    ad::NodeId entropy_grad(ad::Tape& t, ad::NodeId u) const {
        const ad::NodeId y = icnn_value(t, u);
        return t.grad_nodes(y, std::span<const ad::NodeId>(&u, 1))[0];
    }

    /// (potential value, flux g = potential gradient) at entropy variables v.
    std::pair<ad::NodeId, ad::NodeId> potential_and_flux(ad::Tape& t, int dir, ad::NodeId v) const {
        const ad::NodeId val = fcnn_value(t, dir, v);
        const ad::NodeId g = t.grad_nodes(val, std::span<const ad::NodeId>(&v, 1))[0];
        return {val, g};
    }

    /// Symmetrized entropy Hessian at u as a p*p matrix node.
    ad::NodeId entropy_hess(ad::Tape& t, ad::NodeId u) const {
        const ad::NodeId g = entropy_grad(t, u);
        ad::NodeId rows = ad::kNil;
        for (int i = 0; i < p; ++i) {
            const ad::NodeId gi = t.slice(g, i, 1);
            const ad::NodeId row = t.grad_nodes(gi, std::span<const ad::NodeId>(&u, 1))[0];
            rows = (rows == ad::kNil) ? row : t.concat2(rows, row);
        }
        return t.symmetrize_mat(rows, p);
    }
};

// ---------------------------------------------------------------------------
// Checkpoints: a JSON metadata document next to a little-endian float64 blob
// holding the flattened parameters in serialization order.
// ---------------------------------------------------------------------------

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian float64");

struct CheckpointMeta {
    std::string problem = "custom";
    int epoch = 0;
    double val_loss = 0.0;
};

inline void save_checkpoint(FluxNets& nets, const std::string& json_path,
                            const CheckpointMeta& meta = {}) {
    const std::string blob_name = [&] {
        std::string stem = json_path;
        if (stem.size() > 5 && stem.substr(stem.size() - 5) == ".json") stem.resize(stem.size() - 5);
        return stem + ".bin";
    }();
    const std::vector<double> flat = flatten(nets);
    {
        std::ofstream os(blob_name, std::ios::binary);
        if (!os) throw Error("cannot write " + blob_name);
        os.write(reinterpret_cast<const char*>(flat.data()),
                 static_cast<std::streamsize>(flat.size() * sizeof(double)));
    }
    nlohmann::json j;
    j["format"] = "symclaw-checkpoint-v1";
    j["problem"] = meta.problem;
    j["p"] = nets.p;
    j["d"] = nets.d;
    j["fcnn_hidden"] = nets.phi.at(0).hidden;
    j["icnn_hidden"] = nets.eta.hidden;
    j["count"] = flat.size();
    const size_t slash = blob_name.find_last_of('/');
    j["blob"] = slash == std::string::npos ? blob_name : blob_name.substr(slash + 1);
    j["epoch"] = meta.epoch;
    j["val_loss"] = meta.val_loss;
    std::ofstream os(json_path);
    if (!os) throw Error("cannot write " + json_path);
    os << j.dump(2) << "\n";
}

inline FluxNets load_checkpoint(const std::string& json_path, CheckpointMeta* meta = nullptr) {
    std::ifstream is(json_path);
    if (!is) throw Error("cannot read " + json_path);
    nlohmann::json j;
    is >> j;
    FluxNets nets = FluxNets::make(j.at("p").get<int>(), j.at("d").get<int>(),
                                   j.at("fcnn_hidden").get<std::vector<int>>(),
                                   j.at("icnn_hidden").get<std::vector<int>>());
    const size_t slash = json_path.find_last_of('/');
    const std::string dir = slash == std::string::npos ? "" : json_path.substr(0, slash + 1);
    const std::string blob_path = dir + j.at("blob").get<std::string>();
    std::ifstream bs(blob_path, std::ios::binary);
    if (!bs) throw Error("cannot read " + blob_path);
    std::vector<double> flat(j.at("count").get<size_t>());
    bs.read(reinterpret_cast<char*>(flat.data()),
            static_cast<std::streamsize>(flat.size() * sizeof(double)));
    if (static_cast<size_t>(bs.gcount()) != flat.size() * sizeof(double))
        throw Error("parameter blob truncated: " + blob_path);
    unflatten(nets, flat);
    if (meta) {
        meta->problem = j.value("problem", std::string("custom"));
        meta->epoch = j.value("epoch", 0);
        meta->val_loss = j.value("val_loss", 0.0);
    }
    return nets;
}

}  // namespace symclaw
