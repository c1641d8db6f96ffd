#pragma once

#include <cstdint>
#include <vector>

#include "uot/tensor.hpp"

namespace uot {

/// Handle into a tape's operation list.
struct NodeId {
    std::uint32_t index = 0;
    friend bool operator==(NodeId a, NodeId b) { return a.index == b.index; }
};

enum class OpKind : std::uint8_t {
    leaf,
    add,
    sub,
    mul,            // elementwise
    scale,          // by compile-time constant
    matmul,
    tanh_fn,
    exp_fn,         // optionally clamps its argument before exponentiating
    log_fn,
    square,
    sum_all,
    sum_axis,
    broadcast_add_row,
    select_columns,
    stack,
};

const char* op_name(OpKind k);

/// Gradients of a scalar root with respect to the tape's parameter leaves.
/// Parameters the root does not depend on map to all-zero tensors.
class Gradients {
public:
    void emplace(NodeId id, Tensor g) { entries_.emplace_back(id, std::move(g)); }
    const Tensor& at(NodeId id) const;
    const Tensor* find(NodeId id) const;
    std::size_t size() const { return entries_.size(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

private:
    std::vector<std::pair<NodeId, Tensor>> entries_;
};

/// Reverse-mode tape over dense tensors. Forward values are computed eagerly
/// when an operation is recorded; backward() replays the records in reverse.
/// A tape instance belongs to a single thread.
class Tape {
public:
    struct Record {
        OpKind kind;
        Tensor value;
        NodeId in[2] = {};
        std::uint32_t n_in = 0;
        // per-kind payloads
        double scalar = 0.0;                  // scale
        bool trans_b = false;                 // matmul
        bool clamped = false;                 // exp_fn
        double clamp_lo = 0.0, clamp_hi = 0.0;
        int axis = -1;                        // sum_axis
        std::vector<std::uint32_t> columns;   // select_columns
        std::vector<NodeId> extra_in;         // stack inputs beyond in[]
        bool is_param = false;                // leaf
        Tensor packed;                        // cached transpose for matmul(trans_b)
    };

    NodeId leaf(Tensor t, bool is_parameter = false);

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double c);
    /// a(m,k) times b(k,n), or times b(n,k)^T when transpose_b is set.
    /// A rank-1 b of length k is treated as a column vector; result is rank-1.
    NodeId matmul(NodeId a, NodeId b, bool transpose_b = false);
    NodeId tanh(NodeId a);
    NodeId exp(NodeId a);
    /// exp with the argument clamped to [lo, hi]; clamped entries count
    /// toward clamp_events() and receive zero gradient.
    NodeId exp_clamped(NodeId a, double lo, double hi);
    NodeId log(NodeId a);
    NodeId square(NodeId a);
    NodeId sum_all(NodeId a);
    NodeId sum_axis(NodeId a, int axis);
    NodeId broadcast_add_row(NodeId mat, NodeId row);
    NodeId select_columns(NodeId a, std::vector<std::uint32_t> columns);
    NodeId stack(const std::vector<NodeId>& parts);

    /// Gradients of the scalar node `root` with respect to every parameter
    /// leaf. Traversal and accumulation order are fixed (reverse recording
    /// order), so results are bit-reproducible.
    Gradients backward(NodeId root) const;

    const Tensor& value(NodeId id) const { return records_[id.index].value; }
    const Record& record(NodeId id) const { return records_[id.index]; }
    std::size_t size() const { return records_.size(); }
    const std::vector<NodeId>& parameters() const { return params_; }

    std::uint64_t clamp_events() const { return clamp_events_; }
    void reset_clamp_events() { clamp_events_ = 0; }
    /// Total bytes held by forward values (monotone over the tape's life).
    std::size_t allocated_bytes() const { return bytes_; }
    /// Forward bytes plus the high-water mark of backward adjoint storage.
    std::size_t peak_bytes() const { return bytes_ + peak_adjoint_bytes_; }

private:
    NodeId push(Record rec);
    NodeId unary(OpKind kind, NodeId a, Tensor value);
    const Tensor& packed_transpose(const Record& rec) const;

    std::vector<Record> records_;
    std::vector<NodeId> params_;
    std::uint64_t clamp_events_ = 0;
    std::size_t bytes_ = 0;
    mutable std::size_t peak_adjoint_bytes_ = 0;
};

}  // namespace uot
