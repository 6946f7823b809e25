#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "symclaw/common.hpp"
#include "symclaw/dual.hpp"

namespace symclaw::ad {

using NodeId = int32_t;
inline constexpr NodeId kNil = -1;

/// The closed operation set. Every kind has a primal kernel, a reverse rule,
/// and (for the kinds reachable inside network subgraphs) a transcription
/// rule that emits the reverse rule as new nodes. Extending the set means
/// adding all applicable rules plus a finite-difference test.
enum class Op : uint8_t {
    kInput,
    kConst,
    kParam,
    kAffine,   // W x + b          (a=W, b=x, c=bias)
    kMatVec,   // W x              (a=W, b=x)
    kMatVecT,  // W^T x            (a=W, b=x)
    kAdd,
    kSub,
    kMul,
    kAxpy,      // a + alpha * b
    kScale,     // alpha * a
    kAddConst,  // a + alpha
    kBMul,      // broadcast scalar a times vector b
    kSquare,
    kSqrt,
    kRecip,
    kTanh,
    kSoftplus,
    kSigmoid,
    kMax0,
    kStep,    // 1 if a > 0 else 0 (derivative treated as 0)
    kHuber,   // |a|-0.5 for |a|>1, a^2/2 otherwise
    kClamp1,  // clamp(a, -1, 1)
    kInBand,  // 1 if |a| < 1 else 0 (derivative treated as 0)
    kAbs,
    kSignOf,  // +-1 (derivative treated as 0)
    kSum,
    kDot,
    kBroadcast,
    kSlice,       // a[aux .. aux+len)
    kEmbed,       // zero vector of node len with a written at offset aux
    kConcat2,     // [a; b]
    kSymmetrize,  // 0.5 (M + M^T) for square M stored row-major
    kAddDiagCtx,  // M + ctx.reg_eps * I
    // Composite kernels with hand-written reverse rules. These carry the
    // data-dependent branches of the flux so a graph can be built once and
    // replayed with fresh leaf values.
    kEcProject,     // (a=[[phi]], b=[[v]], c=f(u-)+f(u+), d=vbar)
    kSolveClamped,  // (a=B_reg row-major, b=[[v]], c=[[u]])
    kWaveSpeed,     // (a=ubar, b=vbar); stop-gradient scalar via context
};

struct Node {
    Op op;
    uint8_t branch;  // per-execution branch taken by composite kinds
    uint16_t dir;    // spatial direction for kWaveSpeed
    int32_t len;
    NodeId a = kNil, b = kNil, c = kNil, d = kNil;
    int32_t val;  // offset into the value arena
    int32_t aux;  // param binding / slice offset / interface index
    double alpha;
};

struct ParamBinding {
    const double* data;
    double* grad;  // may be null when gradients are not requested
    int len;
};

struct TapeContext {
    // Clipped local wave speed evaluated from the primal entropy Hessian and
    // mean entropy variables; its derivative is deliberately not propagated.
    std::function<double(int dir, const double* b_mat, const double* vbar, int p)> wave_speed;
    double reg_eps = 0.0;  // diagonal Hessian perturbation (0 in evaluation mode)
};

/// Saved execution state: every node value plus the branches taken by the
/// composite kinds, enough to replay a reverse sweep without re-running the
/// forward pass.
struct TapeState {
    std::vector<double> vals;
    std::vector<uint8_t> branches;
};

class Tape {
public:
    TapeContext ctx;

    int32_t size() const { return static_cast<int32_t>(nodes_.size()); }
    const Node& node(NodeId id) const { return nodes_[static_cast<size_t>(id)]; }
    int len(NodeId id) const { return nodes_[static_cast<size_t>(id)].len; }

    std::span<double> val(NodeId id) {
        const Node& n = nodes_[static_cast<size_t>(id)];
        return {vals_.data() + n.val, static_cast<size_t>(n.len)};
    }
    std::span<const double> val(NodeId id) const {
        const Node& n = nodes_[static_cast<size_t>(id)];
        return {vals_.data() + n.val, static_cast<size_t>(n.len)};
    }
    double first(NodeId id) const { return vals_[static_cast<size_t>(nodes_[static_cast<size_t>(id)].val)]; }
    std::span<double> adj(NodeId id) {
        const Node& n = nodes_[static_cast<size_t>(id)];
        return {adjs_.data() + n.val, static_cast<size_t>(n.len)};
    }

    int register_param(const double* data, double* grad, int len) {
        bindings_.push_back({data, grad, len});
        return static_cast<int>(bindings_.size()) - 1;
    }
    ParamBinding& binding(int id) { return bindings_[static_cast<size_t>(id)]; }

    // ---- emission (eagerly evaluated) ----
    NodeId input(int len) { return push({Op::kInput, 0, 0, len, kNil, kNil, kNil, kNil, 0, 0, 0.0}); }
    NodeId cst(std::span<const double> xs) {
        NodeId id = push({Op::kConst, 0, 0, static_cast<int32_t>(xs.size()), kNil, kNil, kNil, kNil, 0, 0, 0.0});
        std::copy(xs.begin(), xs.end(), val(id).begin());
        return id;
    }
    NodeId cst1(double x) { return cst(std::span<const double>(&x, 1)); }
    NodeId param(int binding_id) {
        const ParamBinding& bd = bindings_[static_cast<size_t>(binding_id)];
        return push({Op::kParam, 0, 0, bd.len, kNil, kNil, kNil, kNil, 0, binding_id, 0.0});
    }
    NodeId affine(NodeId W, NodeId x, NodeId bias) {
        return push({Op::kAffine, 0, 0, len(bias), W, x, bias, kNil, 0, 0, 0.0});
    }
    NodeId matvec(NodeId W, NodeId x, int rows) {
        return push({Op::kMatVec, 0, 0, rows, W, x, kNil, kNil, 0, 0, 0.0});
    }
    NodeId matvect(NodeId W, NodeId x) {
        const int cols = len(W) / len(x);
        return push({Op::kMatVecT, 0, 0, cols, W, x, kNil, kNil, 0, 0, 0.0});
    }
    NodeId add(NodeId a, NodeId b) { return bin(Op::kAdd, a, b); }
    NodeId sub(NodeId a, NodeId b) { return bin(Op::kSub, a, b); }
    NodeId mul(NodeId a, NodeId b) { return bin(Op::kMul, a, b); }
    NodeId axpy(double alpha, NodeId a, NodeId b) {
        return push({Op::kAxpy, 0, 0, len(a), a, b, kNil, kNil, 0, 0, alpha});
    }
    NodeId scale(double alpha, NodeId a) {
        return push({Op::kScale, 0, 0, len(a), a, kNil, kNil, kNil, 0, 0, alpha});
    }
    NodeId add_const(double alpha, NodeId a) {
        return push({Op::kAddConst, 0, 0, len(a), a, kNil, kNil, kNil, 0, 0, alpha});
    }
    NodeId bmul(NodeId s, NodeId v) { return push({Op::kBMul, 0, 0, len(v), s, v, kNil, kNil, 0, 0, 0.0}); }
    NodeId square(NodeId a) { return un(Op::kSquare, a); }
    NodeId sqrt_(NodeId a) { return un(Op::kSqrt, a); }
    NodeId recip(NodeId a) { return un(Op::kRecip, a); }
    NodeId tanh_(NodeId a) { return un(Op::kTanh, a); }
    NodeId softplus_(NodeId a) { return un(Op::kSoftplus, a); }
    NodeId sigmoid_(NodeId a) { return un(Op::kSigmoid, a); }
    NodeId max0(NodeId a) { return un(Op::kMax0, a); }
    NodeId step(NodeId a) { return un(Op::kStep, a); }
    NodeId huber_(NodeId a) { return un(Op::kHuber, a); }
    NodeId clamp1_(NodeId a) { return un(Op::kClamp1, a); }
    NodeId inband(NodeId a) { return un(Op::kInBand, a); }
    NodeId abs_(NodeId a) { return un(Op::kAbs, a); }
    NodeId sign_of(NodeId a) { return un(Op::kSignOf, a); }
    NodeId sum(NodeId a) { return push({Op::kSum, 0, 0, 1, a, kNil, kNil, kNil, 0, 0, 0.0}); }
    NodeId dot(NodeId a, NodeId b) { return push({Op::kDot, 0, 0, 1, a, b, kNil, kNil, 0, 0, 0.0}); }
    NodeId broadcast(NodeId s, int n) { return push({Op::kBroadcast, 0, 0, n, s, kNil, kNil, kNil, 0, 0, 0.0}); }
    NodeId slice(NodeId a, int off, int n) {
        return push({Op::kSlice, 0, 0, n, a, kNil, kNil, kNil, 0, off, 0.0});
    }
    NodeId embed(NodeId a, int off, int n) {
        return push({Op::kEmbed, 0, 0, n, a, kNil, kNil, kNil, 0, off, 0.0});
    }
    NodeId concat2(NodeId a, NodeId b) {
        return push({Op::kConcat2, 0, 0, len(a) + len(b), a, b, kNil, kNil, 0, 0, 0.0});
    }
    NodeId symmetrize_mat(NodeId m, int p) {
        return push({Op::kSymmetrize, 0, 0, p * p, m, kNil, kNil, kNil, 0, p, 0.0});
    }
    NodeId add_diag_ctx(NodeId m, int p) {
        return push({Op::kAddDiagCtx, 0, 0, p * p, m, kNil, kNil, kNil, 0, p, 0.0});
    }
    NodeId ec_project(NodeId jphi, NodeId jv, NodeId sumf, NodeId vbar) {
        return push({Op::kEcProject, 0, 0, len(jv), jphi, jv, sumf, vbar, 0, 0, 0.0});
    }
    NodeId solve_clamped(NodeId breg, NodeId jv, NodeId ju, int axis, int iface) {
        return push({Op::kSolveClamped, 0, static_cast<uint16_t>(axis), len(jv), breg, jv, ju, kNil, 0,
                     iface, 0.0});
    }
    NodeId wave_speed_node(NodeId b_mat, NodeId vbar, int dir) {
        return push({Op::kWaveSpeed, 0, static_cast<uint16_t>(dir), 1, b_mat, vbar, kNil, kNil, 0, 0, 0.0});
    }

    void set(NodeId id, std::span<const double> xs) {
        std::copy(xs.begin(), xs.end(), val(id).begin());
    }

    /// Re-executes every node over the current leaf values.
    void forward() {
        for (NodeId id = 0; id < size(); ++id) exec(id);
    }

    void save_state(TapeState& st) const {
        st.vals = vals_;
        st.branches.resize(nodes_.size());
        for (size_t i = 0; i < nodes_.size(); ++i) st.branches[i] = nodes_[i].branch;
    }
    void restore_state(const TapeState& st) {
        vals_ = st.vals;
        for (size_t i = 0; i < nodes_.size(); ++i) nodes_[i].branch = st.branches[i];
    }

    /// Reverse sweep over primal values. Seeds must be written into the
    /// adjoint arena (via seed_adjoint) after zero_adjoints(). Parameter
    /// gradients are accumulated into the registered bindings.
    void zero_adjoints() { std::fill(adjs_.begin(), adjs_.end(), 0.0); }
    void seed_adjoint(NodeId id, std::span<const double> xs) {
        std::span<double> a = adj(id);
        for (size_t i = 0; i < xs.size(); ++i) a[i] += xs[i];
    }
    void run_reverse() {
        for (NodeId id = size() - 1; id >= 0; --id) reverse_node(id);
    }

    /// Emits nodes computing the gradient of scalar node `out` with respect
    /// to the nodes in `wrt`; everything stays differentiable. Nodes outside
    /// the dependency cone of `wrt` are treated as constants.
    std::vector<NodeId> grad_nodes(NodeId out, std::span<const NodeId> wrt) {
        if (len(out) != 1) throw Error("grad_nodes: output must be scalar");
        NodeId lo = out;
        for (NodeId w : wrt) lo = std::min(lo, w);
        std::vector<uint8_t> dep(static_cast<size_t>(out - lo + 1), 0);
        for (NodeId w : wrt) {
            if (w > out) throw Error("grad_nodes: wrt above output");
            dep[static_cast<size_t>(w - lo)] = 1;
        }
        for (NodeId id = lo; id <= out; ++id) {
            const Node& n = nodes_[static_cast<size_t>(id)];
            for (NodeId in : {n.a, n.b, n.c, n.d})
                if (in >= lo && in != kNil && dep[static_cast<size_t>(in - lo)]) {
                    dep[static_cast<size_t>(id - lo)] = 1;
                    break;
                }
        }
        if (!dep[static_cast<size_t>(out - lo)]) {
            // output independent of wrt: all-zero gradients
            std::vector<NodeId> out_ids;
            for (NodeId w : wrt) {
                std::vector<double> z(static_cast<size_t>(len(w)), 0.0);
                out_ids.push_back(cst(std::span<const double>(z.data(), z.size())));
            }
            return out_ids;
        }
        std::vector<NodeId> a(static_cast<size_t>(out - lo + 1), kNil);
        a[static_cast<size_t>(out - lo)] = cst1(1.0);
        auto acc = [&](NodeId target, NodeId contrib) {
            if (target < lo || !dep[static_cast<size_t>(target - lo)]) return;
            NodeId& slot = a[static_cast<size_t>(target - lo)];
            slot = (slot == kNil) ? contrib : add(slot, contrib);
        };
        for (NodeId id = out; id >= lo; --id) {
            const NodeId g = a[static_cast<size_t>(id - lo)];
            if (g == kNil) continue;
            transcribe(id, g, acc);
        }
        std::vector<NodeId> out_ids;
        for (NodeId w : wrt) {
            NodeId g = a[static_cast<size_t>(w - lo)];
            if (g == kNil) {
                std::vector<double> z(static_cast<size_t>(len(w)), 0.0);
                g = cst(std::span<const double>(z.data(), z.size()));
            }
            out_ids.push_back(g);
        }
        return out_ids;
    }

    /// Forward-over-reverse: pushes K tangent directions through the forward
    /// and reverse sweeps; the tangent of each leaf adjoint is one Hessian
    /// column. Only simple kinds are supported.
    template <int K>
    void dual_sweep(NodeId out, std::span<const std::pair<NodeId, int>> seeds,
                    std::vector<Dual<K>>& dadj) {
        std::vector<Dual<K>> dv(vals_.size());
        for (NodeId id = 0; id < size(); ++id) exec_dual<K>(id, dv, seeds);
        dadj.assign(vals_.size(), Dual<K>());
        if (len(out) != 1) throw Error("dual_sweep: output must be scalar");
        dadj[static_cast<size_t>(node(out).val)] = Dual<K>(1.0);
        for (NodeId id = out; id >= 0; --id) reverse_node_dual<K>(id, dv, dadj);
    }

private:
    std::vector<Node> nodes_;
    std::vector<double> vals_;
    std::vector<double> adjs_;
    std::vector<ParamBinding> bindings_;

    NodeId bin(Op op, NodeId a, NodeId b) { return push({op, 0, 0, len(a), a, b, kNil, kNil, 0, 0, 0.0}); }
    NodeId un(Op op, NodeId a) { return push({op, 0, 0, len(a), a, kNil, kNil, kNil, 0, 0, 0.0}); }

    NodeId push(Node n) {
        n.val = static_cast<int32_t>(vals_.size());
        vals_.resize(vals_.size() + static_cast<size_t>(n.len));
        adjs_.resize(vals_.size());
        nodes_.push_back(n);
        const NodeId id = size() - 1;
        exec(id);
        return id;
    }

    void exec(NodeId id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        double* o = vals_.data() + n.val;
        const double* A = n.a != kNil ? vals_.data() + nodes_[static_cast<size_t>(n.a)].val : nullptr;
        const double* B = n.b != kNil ? vals_.data() + nodes_[static_cast<size_t>(n.b)].val : nullptr;
        const double* C = n.c != kNil ? vals_.data() + nodes_[static_cast<size_t>(n.c)].val : nullptr;
        const double* D = n.d != kNil ? vals_.data() + nodes_[static_cast<size_t>(n.d)].val : nullptr;
        const int L = n.len;
        switch (n.op) {
            case Op::kInput:
            case Op::kConst:
                break;
            case Op::kParam: {
                const ParamBinding& bd = bindings_[static_cast<size_t>(n.aux)];
                std::copy(bd.data, bd.data + bd.len, o);
                break;
            }
            case Op::kAffine: {
                const int cols = len(n.b);
                for (int i = 0; i < L; ++i) {
                    double s = C[i];
                    const double* w = A + i * cols;
                    for (int j = 0; j < cols; ++j) s += w[j] * B[j];
                    o[i] = s;
                }
                break;
            }
            case Op::kMatVec: {
                const int cols = len(n.b);
                for (int i = 0; i < L; ++i) {
                    double s = 0;
                    const double* w = A + i * cols;
                    for (int j = 0; j < cols; ++j) s += w[j] * B[j];
                    o[i] = s;
                }
                break;
            }
            case Op::kMatVecT: {
                const int rows = len(n.b);
                for (int j = 0; j < L; ++j) o[j] = 0;
                for (int i = 0; i < rows; ++i) {
                    const double* w = A + i * L;
                    const double bi = B[i];
                    for (int j = 0; j < L; ++j) o[j] += w[j] * bi;
                }
                break;
            }
            case Op::kAdd: for (int i = 0; i < L; ++i) o[i] = A[i] + B[i]; break;
            case Op::kSub: for (int i = 0; i < L; ++i) o[i] = A[i] - B[i]; break;
            case Op::kMul: for (int i = 0; i < L; ++i) o[i] = A[i] * B[i]; break;
            case Op::kAxpy: for (int i = 0; i < L; ++i) o[i] = A[i] + n.alpha * B[i]; break;
            case Op::kScale: for (int i = 0; i < L; ++i) o[i] = n.alpha * A[i]; break;
            case Op::kAddConst: for (int i = 0; i < L; ++i) o[i] = A[i] + n.alpha; break;
            case Op::kBMul: for (int i = 0; i < L; ++i) o[i] = A[0] * B[i]; break;
            case Op::kSquare: for (int i = 0; i < L; ++i) o[i] = A[i] * A[i]; break;
            case Op::kSqrt: for (int i = 0; i < L; ++i) o[i] = std::sqrt(A[i]); break;
            case Op::kRecip: for (int i = 0; i < L; ++i) o[i] = 1.0 / A[i]; break;
            case Op::kTanh: for (int i = 0; i < L; ++i) o[i] = std::tanh(A[i]); break;
            case Op::kSoftplus: for (int i = 0; i < L; ++i) o[i] = softplus_fn(A[i]); break;
            case Op::kSigmoid: for (int i = 0; i < L; ++i) o[i] = sigmoid_fn(A[i]); break;
            case Op::kMax0: for (int i = 0; i < L; ++i) o[i] = A[i] > 0 ? A[i] : 0.0; break;
            case Op::kStep: for (int i = 0; i < L; ++i) o[i] = A[i] > 0 ? 1.0 : 0.0; break;
            case Op::kHuber: for (int i = 0; i < L; ++i) o[i] = huber_fn(A[i]); break;
            case Op::kClamp1: for (int i = 0; i < L; ++i) o[i] = huber_dfn(A[i]); break;
            case Op::kInBand: for (int i = 0; i < L; ++i) o[i] = (A[i] > -1.0 && A[i] < 1.0) ? 1.0 : 0.0; break;
            case Op::kAbs: for (int i = 0; i < L; ++i) o[i] = std::abs(A[i]); break;
            case Op::kSignOf: for (int i = 0; i < L; ++i) o[i] = A[i] >= 0 ? 1.0 : -1.0; break;
            case Op::kSum: {
                double s = 0;
                for (int i = 0; i < len(n.a); ++i) s += A[i];
                o[0] = s;
                break;
            }
            case Op::kDot: {
                double s = 0;
                for (int i = 0; i < len(n.a); ++i) s += A[i] * B[i];
                o[0] = s;
                break;
            }
            case Op::kBroadcast: for (int i = 0; i < L; ++i) o[i] = A[0]; break;
            case Op::kSlice: for (int i = 0; i < L; ++i) o[i] = A[n.aux + i]; break;
            case Op::kEmbed: {
                for (int i = 0; i < L; ++i) o[i] = 0;
                for (int i = 0; i < len(n.a); ++i) o[n.aux + i] = A[i];
                break;
            }
            case Op::kConcat2: {
                const int la = len(n.a);
                for (int i = 0; i < la; ++i) o[i] = A[i];
                for (int i = 0; i < len(n.b); ++i) o[la + i] = B[i];
                break;
            }
            case Op::kSymmetrize: {
                const int p = n.aux;
                for (int i = 0; i < p; ++i)
                    for (int j = 0; j < p; ++j) o[i * p + j] = 0.5 * (A[i * p + j] + A[j * p + i]);
                break;
            }
            case Op::kAddDiagCtx: {
                const int p = n.aux;
                for (int i = 0; i < L; ++i) o[i] = A[i];
                for (int i = 0; i < p; ++i) o[i * p + i] += ctx.reg_eps;
                break;
            }
            case Op::kEcProject: {
                // Projection part of the entropy-conservative flux; zero when
                // the entropy-variable jump degenerates.
                const int p = L;
                double q = 0, vb2 = 0;
                for (int i = 0; i < p; ++i) q += B[i] * B[i];
                for (int i = 0; i < p; ++i) vb2 += D[i] * D[i];
                const double eps = 1e-12 * (1.0 + vb2);
                if (q <= eps) {
                    n.branch = 1;
                    for (int i = 0; i < p; ++i) o[i] = 0;
                } else {
                    n.branch = 0;
                    double t = A[0];
                    for (int i = 0; i < p; ++i) t -= 0.5 * B[i] * C[i];
                    const double s = t / q;
                    for (int i = 0; i < p; ++i) o[i] = s * B[i];
                }
                break;
            }
            case Op::kSolveClamped: {
                const int p = L;
                double jv_inf = 0, ju_inf = 0;
                for (int i = 0; i < p; ++i) jv_inf = std::max(jv_inf, std::abs(B[i]));
                for (int i = 0; i < p; ++i) ju_inf = std::max(ju_inf, std::abs(C[i]));
                if (jv_inf == 0.0) {
                    n.branch = 2;
                    for (int i = 0; i < p; ++i) o[i] = 0;
                    break;
                }
                Mat M(p);
                for (int i = 0; i < p * p; ++i) M.m[static_cast<size_t>(i)] = A[i];
                Vec rhs(p), w;
                for (int i = 0; i < p; ++i) rhs[i] = B[i];
                if (!solve_sym(M, rhs, w))
                    throw SolveError("entropy Hessian solve failed", n.dir, n.aux);
                if (norm_inf(w) <= 2.0 * ju_inf) {
                    n.branch = 0;
                    for (int i = 0; i < p; ++i) o[i] = w[i];
                } else {
                    n.branch = 1;
                    for (int i = 0; i < p; ++i) o[i] = C[i];
                }
                break;
            }
            case Op::kWaveSpeed:
                o[0] = ctx.wave_speed(n.dir, A, B, len(n.b));
                break;
        }
    }

    void reverse_node(NodeId id) {
        const Node& n = nodes_[static_cast<size_t>(id)];
        const double* g = adjs_.data() + n.val;
        const double* A = n.a != kNil ? vals_.data() + nodes_[static_cast<size_t>(n.a)].val : nullptr;
        const double* B = n.b != kNil ? vals_.data() + nodes_[static_cast<size_t>(n.b)].val : nullptr;
        const double* C = n.c != kNil ? vals_.data() + nodes_[static_cast<size_t>(n.c)].val : nullptr;
        const double* o = vals_.data() + n.val;
        double* gA = n.a != kNil ? adjs_.data() + nodes_[static_cast<size_t>(n.a)].val : nullptr;
        double* gB = n.b != kNil ? adjs_.data() + nodes_[static_cast<size_t>(n.b)].val : nullptr;
        double* gC = n.c != kNil ? adjs_.data() + nodes_[static_cast<size_t>(n.c)].val : nullptr;
        const int L = n.len;
        switch (n.op) {
            case Op::kInput:
            case Op::kConst:
                break;
            case Op::kParam: {
                const ParamBinding& bd = bindings_[static_cast<size_t>(n.aux)];
                if (bd.grad)
                    for (int i = 0; i < bd.len; ++i) bd.grad[i] += g[i];
                break;
            }
            case Op::kAffine: {
                const int cols = len(n.b);
                for (int i = 0; i < L; ++i) {
                    const double gi = g[i];
                    gC[i] += gi;
                    double* gw = gA + i * cols;
                    const double* w = A + i * cols;
                    for (int j = 0; j < cols; ++j) {
                        gw[j] += gi * B[j];
                        gB[j] += w[j] * gi;
                    }
                }
                break;
            }
            case Op::kMatVec: {
                const int cols = len(n.b);
                for (int i = 0; i < L; ++i) {
                    const double gi = g[i];
                    double* gw = gA + i * cols;
                    const double* w = A + i * cols;
                    for (int j = 0; j < cols; ++j) {
                        gw[j] += gi * B[j];
                        gB[j] += w[j] * gi;
                    }
                }
                break;
            }
            case Op::kMatVecT: {
                const int rows = len(n.b);
                for (int i = 0; i < rows; ++i) {
                    const double* w = A + i * L;
                    double* gw = gA + i * L;
                    double s = 0;
                    for (int j = 0; j < L; ++j) {
                        gw[j] += B[i] * g[j];
                        s += w[j] * g[j];
                    }
                    gB[i] += s;
                }
                break;
            }
            case Op::kAdd: for (int i = 0; i < L; ++i) { gA[i] += g[i]; gB[i] += g[i]; } break;
            case Op::kSub: for (int i = 0; i < L; ++i) { gA[i] += g[i]; gB[i] -= g[i]; } break;
            case Op::kMul: for (int i = 0; i < L; ++i) { gA[i] += g[i] * B[i]; gB[i] += g[i] * A[i]; } break;
            case Op::kAxpy: for (int i = 0; i < L; ++i) { gA[i] += g[i]; gB[i] += n.alpha * g[i]; } break;
            case Op::kScale: for (int i = 0; i < L; ++i) gA[i] += n.alpha * g[i]; break;
            case Op::kAddConst: for (int i = 0; i < L; ++i) gA[i] += g[i]; break;
            case Op::kBMul: {
                double s = 0;
                for (int i = 0; i < L; ++i) {
                    s += g[i] * B[i];
                    gB[i] += A[0] * g[i];
                }
                gA[0] += s;
                break;
            }
            case Op::kSquare: for (int i = 0; i < L; ++i) gA[i] += 2.0 * A[i] * g[i]; break;
            case Op::kSqrt: for (int i = 0; i < L; ++i) gA[i] += 0.5 / o[i] * g[i]; break;
            case Op::kRecip: for (int i = 0; i < L; ++i) gA[i] -= o[i] * o[i] * g[i]; break;
            case Op::kTanh: for (int i = 0; i < L; ++i) gA[i] += (1.0 - o[i] * o[i]) * g[i]; break;
            case Op::kSoftplus: for (int i = 0; i < L; ++i) gA[i] += sigmoid_fn(A[i]) * g[i]; break;
            case Op::kSigmoid: for (int i = 0; i < L; ++i) gA[i] += o[i] * (1.0 - o[i]) * g[i]; break;
            case Op::kMax0: for (int i = 0; i < L; ++i) gA[i] += (A[i] > 0 ? 1.0 : 0.0) * g[i]; break;
            case Op::kHuber: for (int i = 0; i < L; ++i) gA[i] += huber_dfn(A[i]) * g[i]; break;
            case Op::kClamp1:
                for (int i = 0; i < L; ++i) gA[i] += ((A[i] > -1.0 && A[i] < 1.0) ? 1.0 : 0.0) * g[i];
                break;
            case Op::kAbs: for (int i = 0; i < L; ++i) gA[i] += (A[i] >= 0 ? 1.0 : -1.0) * g[i]; break;
            case Op::kStep:
            case Op::kInBand:
            case Op::kSignOf:
                break;
            case Op::kSum: for (int i = 0; i < len(n.a); ++i) gA[i] += g[0]; break;
            case Op::kDot: {
                const int la = len(n.a);
                for (int i = 0; i < la; ++i) {
                    gA[i] += g[0] * B[i];
                    gB[i] += g[0] * A[i];
                }
                break;
            }
            case Op::kBroadcast: {
                double s = 0;
                for (int i = 0; i < L; ++i) s += g[i];
                gA[0] += s;
                break;
            }
            case Op::kSlice: for (int i = 0; i < L; ++i) gA[n.aux + i] += g[i]; break;
            case Op::kEmbed: for (int i = 0; i < len(n.a); ++i) gA[i] += g[n.aux + i]; break;
            case Op::kConcat2: {
                const int la = len(n.a);
                for (int i = 0; i < la; ++i) gA[i] += g[i];
                for (int i = 0; i < len(n.b); ++i) gB[i] += g[la + i];
                break;
            }
            case Op::kSymmetrize: {
                const int p = n.aux;
                for (int i = 0; i < p; ++i)
                    for (int j = 0; j < p; ++j) gA[i * p + j] += 0.5 * (g[i * p + j] + g[j * p + i]);
                break;
            }
            case Op::kAddDiagCtx: for (int i = 0; i < L; ++i) gA[i] += g[i]; break;
            case Op::kEcProject: {
                if (n.branch == 1) break;
                const int p = L;
                double q = 0;
                for (int i = 0; i < p; ++i) q += B[i] * B[i];
                double t = A[0];
                for (int i = 0; i < p; ++i) t -= 0.5 * B[i] * C[i];
                const double s = t / q;
                double gdotjv = 0;
                for (int i = 0; i < p; ++i) gdotjv += g[i] * B[i];
                const double dt = gdotjv / q;
                const double dq = -(s / q) * gdotjv;
                gA[0] += dt;
                for (int i = 0; i < p; ++i) {
                    gB[i] += s * g[i] - 0.5 * dt * C[i] + 2.0 * dq * B[i];
                    gC[i] += -0.5 * dt * B[i];
                }
                break;
            }
            case Op::kSolveClamped: {
                const int p = L;
                if (n.branch == 2) break;
                if (n.branch == 1) {
                    for (int i = 0; i < p; ++i) gC[i] += g[i];
                    break;
                }
                Mat M(p);
                for (int i = 0; i < p * p; ++i) M.m[static_cast<size_t>(i)] = A[i];
                Vec gvec(p), dr;
                for (int i = 0; i < p; ++i) gvec[i] = g[i];
                if (!solve_sym(M, gvec, dr))
                    throw SolveError("entropy Hessian adjoint solve failed", n.dir, n.aux);
                for (int i = 0; i < p; ++i) gB[i] += dr[i];
                for (int i = 0; i < p; ++i)
                    for (int j = 0; j < p; ++j) gA[i * p + j] -= dr[i] * o[j];
                break;
            }
            case Op::kWaveSpeed:
                break;  // stop-gradient
        }
    }

    void transcribe(NodeId id, NodeId g, const std::function<void(NodeId, NodeId)>& acc) {
        const Node n = nodes_[static_cast<size_t>(id)];  // copy: emission invalidates refs
        switch (n.op) {
            case Op::kInput:
            case Op::kConst:
            case Op::kParam:
                break;
            case Op::kAffine:
            case Op::kMatVec:
                acc(n.b, matvect(n.a, g));
                break;
            case Op::kMatVecT:
                acc(n.b, matvec(n.a, g, len(n.b)));
                break;
            case Op::kAdd: acc(n.a, g); acc(n.b, g); break;
            case Op::kSub: acc(n.a, g); acc(n.b, scale(-1.0, g)); break;
            case Op::kMul: acc(n.a, mul(g, n.b)); acc(n.b, mul(g, n.a)); break;
            case Op::kAxpy: acc(n.a, g); acc(n.b, scale(n.alpha, g)); break;
            case Op::kScale: acc(n.a, scale(n.alpha, g)); break;
            case Op::kAddConst: acc(n.a, g); break;
            case Op::kBMul: acc(n.a, dot(g, n.b)); acc(n.b, bmul(n.a, g)); break;
            case Op::kSquare: acc(n.a, scale(2.0, mul(g, n.a))); break;
            case Op::kSqrt: acc(n.a, mul(g, scale(0.5, recip(id)))); break;
            case Op::kRecip: acc(n.a, scale(-1.0, mul(g, square(id)))); break;
            case Op::kTanh: acc(n.a, mul(g, add_const(1.0, scale(-1.0, square(id))))); break;
            case Op::kSoftplus: acc(n.a, mul(g, sigmoid_(n.a))); break;
            case Op::kSigmoid: acc(n.a, mul(g, mul(id, add_const(1.0, scale(-1.0, id))))); break;
            case Op::kMax0: acc(n.a, mul(g, step(n.a))); break;
            case Op::kHuber: acc(n.a, mul(g, clamp1_(n.a))); break;
            case Op::kClamp1: acc(n.a, mul(g, inband(n.a))); break;
            case Op::kAbs: acc(n.a, mul(g, sign_of(n.a))); break;
            case Op::kStep:
            case Op::kInBand:
            case Op::kSignOf:
                break;
            case Op::kSum: acc(n.a, broadcast(g, len(n.a))); break;
            case Op::kDot: acc(n.a, bmul(g, n.b)); acc(n.b, bmul(g, n.a)); break;
            case Op::kBroadcast: acc(n.a, sum(g)); break;
            case Op::kSlice: acc(n.a, embed(g, n.aux, len(n.a))); break;
            case Op::kEmbed: acc(n.a, slice(g, n.aux, len(n.a))); break;
            case Op::kConcat2:
                acc(n.a, slice(g, 0, len(n.a)));
                acc(n.b, slice(g, len(n.a), len(n.b)));
                break;
            case Op::kSymmetrize: acc(n.a, symmetrize_mat(g, n.aux)); break;
            case Op::kAddDiagCtx: acc(n.a, g); break;
            default:
                throw Error("grad_nodes: operation kind not transcribable");
        }
    }

    template <int K>
    void exec_dual(NodeId id, std::vector<Dual<K>>& dv, std::span<const std::pair<NodeId, int>> seeds) {
        const Node& n = nodes_[static_cast<size_t>(id)];
        Dual<K>* o = dv.data() + n.val;
        const Dual<K>* A = n.a != kNil ? dv.data() + nodes_[static_cast<size_t>(n.a)].val : nullptr;
        const Dual<K>* B = n.b != kNil ? dv.data() + nodes_[static_cast<size_t>(n.b)].val : nullptr;
        const Dual<K>* C = n.c != kNil ? dv.data() + nodes_[static_cast<size_t>(n.c)].val : nullptr;
        const int L = n.len;
        switch (n.op) {
            case Op::kInput:
            case Op::kConst:
            case Op::kParam: {
                const double* src = vals_.data() + n.val;
                for (int i = 0; i < L; ++i) o[i] = Dual<K>(src[i]);
                for (const auto& [node_id, dir] : seeds)
                    if (node_id == id)
                        for (int i = 0; i < L; ++i) o[i] = Dual<K>::seeded(src[i], (dir + i) % K);
                break;
            }
            case Op::kAffine: {
                const int cols = len(n.b);
                for (int i = 0; i < L; ++i) {
                    Dual<K> s = C[i];
                    for (int j = 0; j < cols; ++j) s += A[i * cols + j] * B[j];
                    o[i] = s;
                }
                break;
            }
            case Op::kMatVec: {
                const int cols = len(n.b);
                for (int i = 0; i < L; ++i) {
                    Dual<K> s(0.0);
                    for (int j = 0; j < cols; ++j) s += A[i * cols + j] * B[j];
                    o[i] = s;
                }
                break;
            }
            case Op::kMatVecT: {
                const int rows = len(n.b);
                for (int j = 0; j < L; ++j) o[j] = Dual<K>(0.0);
                for (int i = 0; i < rows; ++i)
                    for (int j = 0; j < L; ++j) o[j] += A[i * L + j] * B[i];
                break;
            }
            case Op::kAdd: for (int i = 0; i < L; ++i) o[i] = A[i] + B[i]; break;
            case Op::kSub: for (int i = 0; i < L; ++i) o[i] = A[i] - B[i]; break;
            case Op::kMul: for (int i = 0; i < L; ++i) o[i] = A[i] * B[i]; break;
            case Op::kAxpy: for (int i = 0; i < L; ++i) o[i] = A[i] + Dual<K>(n.alpha) * B[i]; break;
            case Op::kScale: for (int i = 0; i < L; ++i) o[i] = Dual<K>(n.alpha) * A[i]; break;
            case Op::kAddConst: for (int i = 0; i < L; ++i) o[i] = A[i] + Dual<K>(n.alpha); break;
            case Op::kBMul: for (int i = 0; i < L; ++i) o[i] = A[0] * B[i]; break;
            case Op::kSquare: for (int i = 0; i < L; ++i) o[i] = symclaw::square(A[i]); break;
            case Op::kSqrt: for (int i = 0; i < L; ++i) o[i] = sqrt(A[i]); break;
            case Op::kRecip: for (int i = 0; i < L; ++i) o[i] = symclaw::recip(A[i]); break;
            case Op::kTanh: for (int i = 0; i < L; ++i) o[i] = tanh(A[i]); break;
            case Op::kSoftplus: for (int i = 0; i < L; ++i) o[i] = softplus(A[i]); break;
            case Op::kSigmoid: for (int i = 0; i < L; ++i) o[i] = sigmoid(A[i]); break;
            case Op::kMax0: for (int i = 0; i < L; ++i) o[i] = symclaw::max0(A[i]); break;
            case Op::kStep: for (int i = 0; i < L; ++i) o[i] = Dual<K>(A[i].v > 0 ? 1.0 : 0.0); break;
            case Op::kHuber: for (int i = 0; i < L; ++i) o[i] = huber(A[i]); break;
            case Op::kClamp1: for (int i = 0; i < L; ++i) o[i] = clamp1(A[i]); break;
            case Op::kInBand:
                for (int i = 0; i < L; ++i) o[i] = Dual<K>((A[i].v > -1.0 && A[i].v < 1.0) ? 1.0 : 0.0);
                break;
            case Op::kAbs: for (int i = 0; i < L; ++i) o[i] = habs(A[i]); break;
            case Op::kSignOf: for (int i = 0; i < L; ++i) o[i] = Dual<K>(A[i].v >= 0 ? 1.0 : -1.0); break;
            case Op::kSum: {
                Dual<K> s(0.0);
                for (int i = 0; i < len(n.a); ++i) s += A[i];
                o[0] = s;
                break;
            }
            case Op::kDot: {
                Dual<K> s(0.0);
                for (int i = 0; i < len(n.a); ++i) s += A[i] * B[i];
                o[0] = s;
                break;
            }
            case Op::kBroadcast: for (int i = 0; i < L; ++i) o[i] = A[0]; break;
            case Op::kSlice: for (int i = 0; i < L; ++i) o[i] = A[n.aux + i]; break;
            case Op::kEmbed: {
                for (int i = 0; i < L; ++i) o[i] = Dual<K>(0.0);
                for (int i = 0; i < len(n.a); ++i) o[n.aux + i] = A[i];
                break;
            }
            case Op::kConcat2: {
                const int la = len(n.a);
                for (int i = 0; i < la; ++i) o[i] = A[i];
                for (int i = 0; i < len(n.b); ++i) o[la + i] = B[i];
                break;
            }
            case Op::kSymmetrize: {
                const int p = n.aux;
                for (int i = 0; i < p; ++i)
                    for (int j = 0; j < p; ++j)
                        o[i * p + j] = Dual<K>(0.5) * (A[i * p + j] + A[j * p + i]);
                break;
            }
            case Op::kAddDiagCtx: {
                const int p = n.aux;
                for (int i = 0; i < L; ++i) o[i] = A[i];
                for (int i = 0; i < p; ++i) o[i * p + i] += Dual<K>(ctx.reg_eps);
                break;
            }
            default:
                throw Error("dual_sweep: operation kind not supported");
        }
    }

    template <int K>
    void reverse_node_dual(NodeId id, const std::vector<Dual<K>>& dv, std::vector<Dual<K>>& da) {
        const Node& n = nodes_[static_cast<size_t>(id)];
        const Dual<K>* g = da.data() + n.val;
        const Dual<K>* A = n.a != kNil ? dv.data() + nodes_[static_cast<size_t>(n.a)].val : nullptr;
        const Dual<K>* B = n.b != kNil ? dv.data() + nodes_[static_cast<size_t>(n.b)].val : nullptr;
        const Dual<K>* o = dv.data() + n.val;
        Dual<K>* gA = n.a != kNil ? da.data() + nodes_[static_cast<size_t>(n.a)].val : nullptr;
        Dual<K>* gB = n.b != kNil ? da.data() + nodes_[static_cast<size_t>(n.b)].val : nullptr;
        Dual<K>* gC = n.c != kNil ? da.data() + nodes_[static_cast<size_t>(n.c)].val : nullptr;
        const int L = n.len;
        const Dual<K> one(1.0);
        switch (n.op) {
            case Op::kInput:
            case Op::kConst:
            case Op::kParam:
                break;
            case Op::kAffine:
            case Op::kMatVec: {
                const int cols = len(n.b);
                for (int i = 0; i < L; ++i) {
                    if (n.op == Op::kAffine) gC[i] += g[i];
                    for (int j = 0; j < cols; ++j) {
                        gA[i * cols + j] += g[i] * B[j];
                        gB[j] += A[i * cols + j] * g[i];
                    }
                }
                break;
            }
            case Op::kMatVecT: {
                const int rows = len(n.b);
                for (int i = 0; i < rows; ++i)
                    for (int j = 0; j < L; ++j) {
                        gA[i * L + j] += B[i] * g[j];
                        gB[i] += A[i * L + j] * g[j];
                    }
                break;
            }
            case Op::kAdd: for (int i = 0; i < L; ++i) { gA[i] += g[i]; gB[i] += g[i]; } break;
            case Op::kSub:
                for (int i = 0; i < L; ++i) { gA[i] += g[i]; gB[i] = gB[i] - g[i]; }
                break;
            case Op::kMul:
                for (int i = 0; i < L; ++i) { gA[i] += g[i] * B[i]; gB[i] += g[i] * A[i]; }
                break;
            case Op::kAxpy:
                for (int i = 0; i < L; ++i) { gA[i] += g[i]; gB[i] += Dual<K>(n.alpha) * g[i]; }
                break;
            case Op::kScale: for (int i = 0; i < L; ++i) gA[i] += Dual<K>(n.alpha) * g[i]; break;
            case Op::kAddConst: for (int i = 0; i < L; ++i) gA[i] += g[i]; break;
            case Op::kBMul:
                for (int i = 0; i < L; ++i) { gA[0] += g[i] * B[i]; gB[i] += A[0] * g[i]; }
                break;
            case Op::kSquare: for (int i = 0; i < L; ++i) gA[i] += Dual<K>(2.0) * A[i] * g[i]; break;
            case Op::kSqrt: for (int i = 0; i < L; ++i) gA[i] += Dual<K>(0.5) * symclaw::recip(o[i]) * g[i]; break;
            case Op::kRecip: for (int i = 0; i < L; ++i) gA[i] = gA[i] - o[i] * o[i] * g[i]; break;
            case Op::kTanh: for (int i = 0; i < L; ++i) gA[i] += (one - o[i] * o[i]) * g[i]; break;
            case Op::kSoftplus: for (int i = 0; i < L; ++i) gA[i] += sigmoid(A[i]) * g[i]; break;
            case Op::kSigmoid: for (int i = 0; i < L; ++i) gA[i] += o[i] * (one - o[i]) * g[i]; break;
            case Op::kMax0:
                for (int i = 0; i < L; ++i)
                    if (A[i].v > 0) gA[i] += g[i];
                break;
            case Op::kHuber: for (int i = 0; i < L; ++i) gA[i] += clamp1(A[i]) * g[i]; break;
            case Op::kClamp1:
                for (int i = 0; i < L; ++i)
                    if (A[i].v > -1.0 && A[i].v < 1.0) gA[i] += g[i];
                break;
            case Op::kAbs:
                for (int i = 0; i < L; ++i) gA[i] += Dual<K>(A[i].v >= 0 ? 1.0 : -1.0) * g[i];
                break;
            case Op::kStep:
            case Op::kInBand:
            case Op::kSignOf:
                break;
            case Op::kSum: for (int i = 0; i < len(n.a); ++i) gA[i] += g[0]; break;
            case Op::kDot:
                for (int i = 0; i < len(n.a); ++i) { gA[i] += g[0] * B[i]; gB[i] += g[0] * A[i]; }
                break;
            case Op::kBroadcast: for (int i = 0; i < L; ++i) gA[0] += g[i]; break;
            case Op::kSlice: for (int i = 0; i < L; ++i) gA[n.aux + i] += g[i]; break;
            case Op::kEmbed: for (int i = 0; i < len(n.a); ++i) gA[i] += g[n.aux + i]; break;
            case Op::kConcat2: {
                const int la = len(n.a);
                for (int i = 0; i < la; ++i) gA[i] += g[i];
                for (int i = 0; i < len(n.b); ++i) gB[i] += g[la + i];
                break;
            }
            case Op::kSymmetrize: {
                const int p = n.aux;
                for (int i = 0; i < p; ++i)
                    for (int j = 0; j < p; ++j)
                        gA[i * p + j] += Dual<K>(0.5) * (g[i * p + j] + g[j * p + i]);
                break;
            }
            case Op::kAddDiagCtx: for (int i = 0; i < L; ++i) gA[i] += g[i]; break;
            default:
                throw Error("dual_sweep: operation kind not supported");
        }
    }
};

/// Builds a scalar graph over one vector input.
using ScalarFn = std::function<NodeId(Tape&, NodeId)>;

/// Reverse-mode gradient of a scalar function at x.
inline std::vector<double> grad(const ScalarFn& f, std::span<const double> x) {
    Tape t;
    const NodeId in = t.input(static_cast<int>(x.size()));
    t.set(in, x);
    const NodeId out = f(t, in);
    t.forward();
    if (t.len(out) != 1) throw Error("grad: function output must be scalar");
    t.zero_adjoints();
    const double one = 1.0;
    t.seed_adjoint(out, std::span<const double>(&one, 1));
    t.run_reverse();
    const std::span<double> g = t.adj(in);
    return {g.begin(), g.end()};
}

namespace detail {
template <int K>
Mat hessian_k(const ScalarFn& f, std::span<const double> x) {
    Tape t;
    const NodeId in = t.input(K);
    t.set(in, x);
    const NodeId out = f(t, in);
    t.forward();
    std::vector<Dual<K>> dadj;
    const std::pair<NodeId, int> seed{in, 0};
    t.dual_sweep<K>(out, std::span<const std::pair<NodeId, int>>(&seed, 1), dadj);
    // tangent j of adjoint i = d^2 f / dx_i dx_j
    Mat h(K);
    const Node& innode = t.node(in);
    for (int i = 0; i < K; ++i)
        for (int j = 0; j < K; ++j)
            h(i, j) = dadj[static_cast<size_t>(innode.val + i)].t[static_cast<size_t>(j)];
    return symmetrize(h);
}
}  // namespace detail

/// Input Hessian by forward-over-reverse with one seed direction per input
/// component; output is symmetrized exactly.
inline Mat hessian(const ScalarFn& f, std::span<const double> x) {
    switch (x.size()) {
        case 1: return detail::hessian_k<1>(f, x);
        case 2: return detail::hessian_k<2>(f, x);
        case 3: return detail::hessian_k<3>(f, x);
        default: throw Error("hessian: supported input dimension is 1..3");
    }
}

}  // namespace symclaw::ad
