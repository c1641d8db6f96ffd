#include "uot/tape.hpp"

#include <cmath>
#include <string>

#include "uot/errors.hpp"

namespace uot {

const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::leaf: return "leaf";
        case OpKind::add: return "add";
        case OpKind::sub: return "sub";
        case OpKind::mul: return "mul";
        case OpKind::scale: return "scale";
        case OpKind::matmul: return "matmul";
        case OpKind::tanh_fn: return "tanh";
        case OpKind::exp_fn: return "exp";
        case OpKind::log_fn: return "log";
        case OpKind::square: return "square";
        case OpKind::sum_all: return "sum_all";
        case OpKind::sum_axis: return "sum_axis";
        case OpKind::broadcast_add_row: return "broadcast_add_row";
        case OpKind::select_columns: return "select_columns";
        case OpKind::stack: return "stack";
    }
    return "?";
}

const Tensor& Gradients::at(NodeId id) const {
    const Tensor* g = find(id);
    if (!g) throw error("no gradient recorded for node " + std::to_string(id.index));
    return *g;
}

const Tensor* Gradients::find(NodeId id) const {
    for (const auto& [node, g] : entries_)
        if (node == id) return &g;
    return nullptr;
}

NodeId Tape::push(Record rec) {
    bytes_ += rec.value.byte_size();
    records_.push_back(std::move(rec));
    return NodeId{static_cast<std::uint32_t>(records_.size() - 1)};
}

NodeId Tape::leaf(Tensor t, bool is_parameter) {
    if (!t.defined()) throw shape_error("leaf requires a defined tensor");
    if (std::size_t i = t.first_nonfinite(); i != t.numel())
        throw numeric_error("leaf value is not finite at flat index " + std::to_string(i));
    Record rec{OpKind::leaf, std::move(t)};
    rec.is_param = is_parameter;
    NodeId id = push(std::move(rec));
    if (is_parameter) params_.push_back(id);
    return id;
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw shape_error(std::string(what) + ": shape mismatch " + shape_string(a.shape()) +
                          " vs " + shape_string(b.shape()));
}

}  // namespace

NodeId Tape::unary(OpKind kind, NodeId a, Tensor value) {
    Record rec{kind, std::move(value)};
    rec.in[0] = a;
    rec.n_in = 1;
    return push(std::move(rec));
}

NodeId Tape::add(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    require_same_shape(va, vb, "add");
    Tensor out(va.shape());
    const double* pa = va.data();
    const double* pb = vb.data();
    double* po = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] + pb[i];
    Record rec{OpKind::add, std::move(out)};
    rec.in[0] = a;
    rec.in[1] = b;
    rec.n_in = 2;
    return push(std::move(rec));
}

NodeId Tape::sub(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    require_same_shape(va, vb, "sub");
    Tensor out(va.shape());
    const double* pa = va.data();
    const double* pb = vb.data();
    double* po = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] - pb[i];
    Record rec{OpKind::sub, std::move(out)};
    rec.in[0] = a;
    rec.in[1] = b;
    rec.n_in = 2;
    return push(std::move(rec));
}

NodeId Tape::mul(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    require_same_shape(va, vb, "mul");
    Tensor out(va.shape());
    const double* pa = va.data();
    const double* pb = vb.data();
    double* po = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] * pb[i];
    Record rec{OpKind::mul, std::move(out)};
    rec.in[0] = a;
    rec.in[1] = b;
    rec.n_in = 2;
    return push(std::move(rec));
}

NodeId Tape::scale(NodeId a, double c) {
    const Tensor& va = value(a);
    Tensor out(va.shape());
    const double* pa = va.data();
    double* po = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) po[i] = c * pa[i];
    Record rec{OpKind::scale, std::move(out)};
    rec.in[0] = a;
    rec.n_in = 1;
    rec.scalar = c;
    return push(std::move(rec));
}

NodeId Tape::matmul(NodeId a, NodeId b, bool transpose_b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (va.rank() != 2) throw shape_error("matmul: left operand must be rank 2");
    const std::size_t m = va.rows(), k = va.cols();
    Tensor out;
    if (vb.rank() == 1) {
        if (transpose_b) throw shape_error("matmul: cannot transpose a rank-1 operand");
        if (vb.numel() != k)
            throw shape_error("matmul: vector length " + std::to_string(vb.numel()) +
                              " does not match inner dimension " + std::to_string(k));
        out = Tensor({m});
        gemv_n(va.data(), vb.data(), out.data(), m, k, false);
    } else if (vb.rank() == 2) {
        const std::size_t inner = transpose_b ? vb.cols() : vb.rows();
        const std::size_t n = transpose_b ? vb.rows() : vb.cols();
        if (inner != k)
            throw shape_error("matmul: inner dimensions disagree, " + shape_string(va.shape()) +
                              (transpose_b ? " x T" : " x ") + shape_string(vb.shape()));
        out = Tensor({m, n});
        if (transpose_b) {
            // One cached transpose per operand record keeps every product on
            // the broadcast/fma kernel.
            const Tensor& bt = packed_transpose(records_[b.index]);
            gemm_nn(va.data(), bt.data(), out.data(), m, k, n, false);
        } else {
            gemm_nn(va.data(), vb.data(), out.data(), m, k, n, false);
        }
    } else {
        throw shape_error("matmul: right operand must be rank 1 or 2");
    }
    Record rec{OpKind::matmul, std::move(out)};
    rec.in[0] = a;
    rec.in[1] = b;
    rec.n_in = 2;
    rec.trans_b = transpose_b;
    return push(std::move(rec));
}

NodeId Tape::tanh(NodeId a) {
    const Tensor& va = value(a);
    Tensor out(va.shape());
    const double* pa = va.data();
    double* po = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) po[i] = std::tanh(pa[i]);
    return unary(OpKind::tanh_fn, a, std::move(out));
}

NodeId Tape::exp(NodeId a) {
    const Tensor& va = value(a);
    Tensor out(va.shape());
    const double* pa = va.data();
    double* po = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) po[i] = std::exp(pa[i]);
    return unary(OpKind::exp_fn, a, std::move(out));
}

NodeId Tape::exp_clamped(NodeId a, double lo, double hi) {
    if (!(lo < hi)) throw shape_error("exp_clamped: empty clamp interval");
    const Tensor& va = value(a);
    Tensor out(va.shape());
    const double* pa = va.data();
    double* po = out.data();
    std::uint64_t clamped = 0;
    for (std::size_t i = 0; i < out.numel(); ++i) {
        double x = pa[i];
        if (x < lo) {
            x = lo;
            ++clamped;
        } else if (x > hi) {
            x = hi;
            ++clamped;
        }
        po[i] = std::exp(x);
    }
    clamp_events_ += clamped;
    Record rec{OpKind::exp_fn, std::move(out)};
    rec.in[0] = a;
    rec.n_in = 1;
    rec.clamped = true;
    rec.clamp_lo = lo;
    rec.clamp_hi = hi;
    return push(std::move(rec));
}

NodeId Tape::log(NodeId a) {
    const Tensor& va = value(a);
    Tensor out(va.shape());
    const double* pa = va.data();
    double* po = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) {
        if (!(pa[i] > 0.0))
            throw numeric_error("log of non-positive value at flat index " + std::to_string(i));
        po[i] = std::log(pa[i]);
    }
    return unary(OpKind::log_fn, a, std::move(out));
}

NodeId Tape::square(NodeId a) {
    const Tensor& va = value(a);
    Tensor out(va.shape());
    const double* pa = va.data();
    double* po = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] * pa[i];
    return unary(OpKind::square, a, std::move(out));
}

NodeId Tape::sum_all(NodeId a) {
    const Tensor& va = value(a);
    double s = 0.0;
    for (double v : va.values()) s += v;
    return unary(OpKind::sum_all, a, Tensor::scalar(s));
}

NodeId Tape::sum_axis(NodeId a, int axis) {
    const Tensor& va = value(a);
    if (va.rank() != 2) throw shape_error("sum_axis: operand must be rank 2");
    if (axis != 0 && axis != 1) throw shape_error("sum_axis: axis must be 0 or 1");
    const std::size_t m = va.rows(), n = va.cols();
    Tensor out({axis == 0 ? n : m});
    double* po = out.data();
    const double* pa = va.data();
    if (axis == 0) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) po[j] += pa[i * n + j];
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += pa[i * n + j];
            po[i] = s;
        }
    }
    Record rec{OpKind::sum_axis, std::move(out)};
    rec.in[0] = a;
    rec.n_in = 1;
    rec.axis = axis;
    return push(std::move(rec));
}

NodeId Tape::broadcast_add_row(NodeId mat, NodeId row) {
    const Tensor& vm = value(mat);
    const Tensor& vr = value(row);
    if (vm.rank() != 2 || vr.rank() != 1)
        throw shape_error("broadcast_add_row: need a rank-2 matrix and a rank-1 row");
    if (vr.numel() != vm.cols())
        throw shape_error("broadcast_add_row: row length " + std::to_string(vr.numel()) +
                          " != column count " + std::to_string(vm.cols()));
    const std::size_t m = vm.rows(), n = vm.cols();
    Tensor out({m, n});
    const double* pm = vm.data();
    const double* pr = vr.data();
    double* po = out.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) po[i * n + j] = pm[i * n + j] + pr[j];
    Record rec{OpKind::broadcast_add_row, std::move(out)};
    rec.in[0] = mat;
    rec.in[1] = row;
    rec.n_in = 2;
    return push(std::move(rec));
}

NodeId Tape::select_columns(NodeId a, std::vector<std::uint32_t> columns) {
    const Tensor& va = value(a);
    if (va.rank() != 2) throw shape_error("select_columns: operand must be rank 2");
    if (columns.empty()) throw shape_error("select_columns: empty column list");
    const std::size_t m = va.rows(), n = va.cols();
    for (std::uint32_t c : columns)
        if (c >= n) throw shape_error("select_columns: column " + std::to_string(c) + " out of range");
    Tensor out({m, columns.size()});
    const double* pa = va.data();
    double* po = out.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < columns.size(); ++j) po[i * columns.size() + j] = pa[i * n + columns[j]];
    Record rec{OpKind::select_columns, std::move(out)};
    rec.in[0] = a;
    rec.n_in = 1;
    rec.columns = std::move(columns);
    return push(std::move(rec));
}

NodeId Tape::stack(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw shape_error("stack: empty input list");
    const Tensor& first = value(parts[0]);
    std::vector<std::size_t> shape{parts.size()};
    shape.insert(shape.end(), first.shape().begin(), first.shape().end());
    Tensor out(shape);
    double* po = out.data();
    const std::size_t stride = first.numel();
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const Tensor& vp = value(parts[p]);
        require_same_shape(first, vp, "stack");
        const double* src = vp.data();
        for (std::size_t i = 0; i < stride; ++i) po[p * stride + i] = src[i];
    }
    Record rec{OpKind::stack, std::move(out)};
    rec.in[0] = parts[0];
    rec.n_in = 1;
    rec.extra_in.assign(parts.begin() + 1, parts.end());
    return push(std::move(rec));
}

const Tensor& Tape::packed_transpose(const Record& rec) const {
    Tensor& cache = const_cast<Record&>(rec).packed;
    if (!cache.defined()) {
        const Tensor& v = rec.value;
        Tensor t({v.cols(), v.rows()});
        for (std::size_t i = 0; i < v.rows(); ++i)
            for (std::size_t j = 0; j < v.cols(); ++j) t.at(j, i) = v.at(i, j);
        cache = std::move(t);
    }
    return cache;
}

Gradients Tape::backward(NodeId root) const {
    if (root.index >= records_.size()) throw error("backward: node out of range");
    if (!value(root).is_scalar())
        throw shape_error("backward: root must be scalar, got " + shape_string(value(root).shape()));

    std::vector<Tensor> adj(root.index + 1);
    std::size_t adjoint_bytes = 0, adjoint_peak = 0;
    auto grab = [&](NodeId id) -> Tensor& {
        Tensor& g = adj[id.index];
        if (!g.defined()) {
            g = Tensor::zeros(value(id).shape());
            adjoint_bytes += g.byte_size();
            if (adjoint_bytes > adjoint_peak) adjoint_peak = adjoint_bytes;
        }
        return g;
    };
    // Constants contribute no gradient; skip allocating their adjoints.
    auto wants = [&](NodeId id) {
        const Record& r = records_[id.index];
        return r.kind != OpKind::leaf || r.is_param;
    };

    grab(root)[0] = 1.0;

    for (std::uint32_t idx = root.index + 1; idx-- > 0;) {
        Tensor& g = adj[idx];
        if (!g.defined()) continue;
        const Record& rec = records_[idx];
        const double* pg = g.data();
        switch (rec.kind) {
            case OpKind::leaf:
                break;
            case OpKind::add: {
                for (int s = 0; s < 2; ++s) {
                    NodeId in = rec.in[s];
                    if (!wants(in)) continue;
                    Tensor& gi = grab(in);
                    for (std::size_t i = 0; i < g.numel(); ++i) gi[i] += pg[i];
                }
                break;
            }
            case OpKind::sub: {
                if (wants(rec.in[0])) {
                    Tensor& ga = grab(rec.in[0]);
                    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += pg[i];
                }
                if (wants(rec.in[1])) {
                    Tensor& gb = grab(rec.in[1]);
                    for (std::size_t i = 0; i < g.numel(); ++i) gb[i] -= pg[i];
                }
                break;
            }
            case OpKind::mul: {
                const Tensor& va = value(rec.in[0]);
                const Tensor& vb = value(rec.in[1]);
                if (wants(rec.in[0])) {
                    Tensor& ga = grab(rec.in[0]);
                    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += pg[i] * vb[i];
                }
                if (wants(rec.in[1])) {
                    Tensor& gb = grab(rec.in[1]);
                    for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += pg[i] * va[i];
                }
                break;
            }
            case OpKind::scale: {
                if (wants(rec.in[0])) {
                    Tensor& ga = grab(rec.in[0]);
                    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += rec.scalar * pg[i];
                }
                break;
            }
            case OpKind::matmul: {
                const Tensor& va = value(rec.in[0]);
                const Tensor& vb = value(rec.in[1]);
                const std::size_t m = va.rows(), k = va.cols();
                if (vb.rank() == 1) {
                    // y = A x : dA += g x^T, dx += A^T g
                    if (wants(rec.in[0])) outer_acc(pg, vb.data(), grab(rec.in[0]).data(), m, k);
                    if (wants(rec.in[1])) gemv_t(va.data(), pg, grab(rec.in[1]).data(), m, k, true);
                } else if (rec.trans_b) {
                    // C = A B^T : dA += g B, dB += g^T A
                    const std::size_t n = vb.rows();
                    if (wants(rec.in[0])) gemm_nn(pg, vb.data(), grab(rec.in[0]).data(), m, n, k, true);
                    if (wants(rec.in[1])) gemm_tn(pg, va.data(), grab(rec.in[1]).data(), m, n, k, true);
                } else {
                    // C = A B : dA += g B^T, dB += A^T g
                    const std::size_t n = vb.cols();
                    if (wants(rec.in[0])) {
                        const Tensor& bt = packed_transpose(records_[rec.in[1].index]);
                        gemm_nn(pg, bt.data(), grab(rec.in[0]).data(), m, n, k, true);
                    }
                    if (wants(rec.in[1])) gemm_tn(va.data(), pg, grab(rec.in[1]).data(), m, k, n, true);
                }
                break;
            }
            case OpKind::tanh_fn: {
                if (wants(rec.in[0])) {
                    const Tensor& y = rec.value;
                    Tensor& ga = grab(rec.in[0]);
                    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += pg[i] * (1.0 - y[i] * y[i]);
                }
                break;
            }
            case OpKind::exp_fn: {
                if (wants(rec.in[0])) {
                    const Tensor& y = rec.value;
                    Tensor& ga = grab(rec.in[0]);
                    if (rec.clamped) {
                        const Tensor& x = value(rec.in[0]);
                        for (std::size_t i = 0; i < g.numel(); ++i)
                            if (x[i] >= rec.clamp_lo && x[i] <= rec.clamp_hi) ga[i] += pg[i] * y[i];
                    } else {
                        for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += pg[i] * y[i];
                    }
                }
                break;
            }
            case OpKind::log_fn: {
                if (wants(rec.in[0])) {
                    const Tensor& x = value(rec.in[0]);
                    Tensor& ga = grab(rec.in[0]);
                    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += pg[i] / x[i];
                }
                break;
            }
            case OpKind::square: {
                if (wants(rec.in[0])) {
                    const Tensor& x = value(rec.in[0]);
                    Tensor& ga = grab(rec.in[0]);
                    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += 2.0 * pg[i] * x[i];
                }
                break;
            }
            case OpKind::sum_all: {
                if (wants(rec.in[0])) {
                    Tensor& ga = grab(rec.in[0]);
                    const double gv = pg[0];
                    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += gv;
                }
                break;
            }
            case OpKind::sum_axis: {
                if (wants(rec.in[0])) {
                    const Tensor& x = value(rec.in[0]);
                    Tensor& ga = grab(rec.in[0]);
                    const std::size_t m = x.rows(), n = x.cols();
                    if (rec.axis == 0) {
                        for (std::size_t i = 0; i < m; ++i)
                            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += pg[j];
                    } else {
                        for (std::size_t i = 0; i < m; ++i)
                            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += pg[i];
                    }
                }
                break;
            }
            case OpKind::broadcast_add_row: {
                const Tensor& vm = value(rec.in[0]);
                const std::size_t m = vm.rows(), n = vm.cols();
                if (wants(rec.in[0])) {
                    Tensor& gm = grab(rec.in[0]);
                    for (std::size_t i = 0; i < g.numel(); ++i) gm[i] += pg[i];
                }
                if (wants(rec.in[1])) {
                    Tensor& gr = grab(rec.in[1]);
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) gr[j] += pg[i * n + j];
                }
                break;
            }
            case OpKind::select_columns: {
                if (wants(rec.in[0])) {
                    const Tensor& x = value(rec.in[0]);
                    Tensor& ga = grab(rec.in[0]);
                    const std::size_t m = x.rows(), n = x.cols(), kk = rec.columns.size();
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < kk; ++j)
                            ga[i * n + rec.columns[j]] += pg[i * kk + j];
                }
                break;
            }
            case OpKind::stack: {
                const std::size_t stride = value(rec.in[0]).numel();
                auto scatter = [&](NodeId in, std::size_t part) {
                    if (!wants(in)) return;
                    Tensor& gi = grab(in);
                    for (std::size_t i = 0; i < stride; ++i) gi[i] += pg[part * stride + i];
                };
                scatter(rec.in[0], 0);
                for (std::size_t p = 0; p < rec.extra_in.size(); ++p) scatter(rec.extra_in[p], p + 1);
                break;
            }
        }
        // This record's adjoint has been fully propagated; release it unless
        // it is a parameter gradient we still need to report.
        if (!(rec.kind == OpKind::leaf && rec.is_param)) {
            adjoint_bytes -= g.byte_size();
            g = Tensor();
        }
    }

    if (adjoint_peak > peak_adjoint_bytes_) peak_adjoint_bytes_ = adjoint_peak;

    Gradients out;
    for (NodeId p : params_) {
        if (p.index <= root.index && adj[p.index].defined())
            out.emplace(p, std::move(adj[p.index]));
        else
            out.emplace(p, Tensor::zeros(value(p).shape()));
    }
    return out;
}

}  // namespace uot
