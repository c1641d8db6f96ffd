#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "uot/rng.hpp"
#include "uot/tape.hpp"
#include "uot/tensor.hpp"

namespace uot {

/// Active hat-basis terms at one time: at most two (index, weight) pairs.
struct BasisMix {
    std::array<std::size_t, 2> index{};
    std::array<double, 2> weight{};
    std::size_t count = 0;
};

/// Piecewise-linear finite-element basis on [0,1] with M intervals and
/// uniform nodes t_i = i/M. M = 0 degenerates to the single constant basis.
class HatBasis {
public:
    explicit HatBasis(std::size_t intervals) : m_(intervals) {}

    std::size_t intervals() const { return m_; }
    std::size_t count() const { return m_ + 1; }
    double node(std::size_t i) const { return m_ == 0 ? 0.0 : static_cast<double>(i) / m_; }

    /// Weights of the (at most two) nonzero basis functions at t in [0,1].
    /// Values within a few ulp of a node snap to a single unit weight.
    BasisMix weights(double t) const;

private:
    std::size_t m_;
};

/// One two-layer perceptron block. The second-layer weight is stored
/// transposed (H x d) so both products stream row-major.
struct MlpBlock {
    Tensor w1;   // H x d
    Tensor b1;   // H
    Tensor w2t;  // H x d
    Tensor b2;   // d
};

/// Time-basis mixture of sums of two-layer blocks: the architecture shared
/// by the velocity field and the source field's inner network.
struct MlpStack {
    std::size_t d = 0, M = 0, L = 0, H = 0;
    std::vector<MlpBlock> blocks;  // index i * L + l

    MlpBlock& block(std::size_t i, std::size_t l) { return blocks[i * L + l]; }
    const MlpBlock& block(std::size_t i, std::size_t l) const { return blocks[i * L + l]; }
    HatBasis basis() const { return HatBasis(M); }
};

struct VelocityField {
    MlpStack net;
};

/// f(x,t) = w . u(x,t) + b with u an MlpStack of the same shape as the
/// velocity network.
struct SourceField {
    MlpStack net;
    Tensor w;  // d
    Tensor b;  // scalar
};

/// Weights uniform in (-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
/// Deterministic for a given stream.
VelocityField init_velocity(std::size_t d, std::size_t M, std::size_t L, std::size_t H, Rng& rng);
SourceField init_source(std::size_t d, std::size_t M, std::size_t L, std::size_t H, Rng& rng);
std::pair<VelocityField, SourceField> init_fields(std::size_t d, std::size_t M, std::size_t L,
                                                  std::size_t H, Rng& rng);

/// Named reference to one parameter tensor; order is fixed across the
/// library (optimizer state, gradients and serialization all align to it).
struct ParamRef {
    std::string name;
    Tensor* tensor;
};
std::vector<ParamRef> parameters(MlpStack& stack, const std::string& prefix);
std::vector<ParamRef> parameters(VelocityField& v);
std::vector<ParamRef> parameters(SourceField& f);

// ---- tape bindings ----

struct BoundBlock {
    NodeId w1, b1, w2t, b2;
};

/// An MlpStack bound onto a tape (leaves created once per tape).
struct BoundStack {
    const MlpStack* spec = nullptr;
    std::vector<BoundBlock> blocks;
    NodeId ones_rh{};  // lazily created 1-filled r x H constant
    bool has_ones = false;
};

struct BoundVelocity {
    BoundStack stack;
};

struct BoundSource {
    BoundStack stack;
    NodeId w{}, b{};
    NodeId ones_r1{};
    bool has_ones = false;
};

BoundVelocity bind(Tape& tape, const VelocityField& v, bool as_parameters);
BoundSource bind(Tape& tape, const SourceField& f, bool as_parameters);

/// First-layer activations shared between the value and divergence of one
/// stack at one (x, t): tanh(W1 x + b1) per active (basis, layer) pair.
struct StackActivations {
    BasisMix mix;
    std::vector<NodeId> hidden;  // mix.count * L entries
};

StackActivations stack_hidden(Tape& tape, const BoundStack& bs, NodeId x, double t);
NodeId stack_value(Tape& tape, const BoundStack& bs, const StackActivations& act);       // r x d
NodeId stack_divergence(Tape& tape, BoundStack& bs, const StackActivations& act);        // r

NodeId eval_velocity(Tape& tape, BoundVelocity& v, NodeId x, double t);
NodeId eval_divergence(Tape& tape, BoundVelocity& v, NodeId x, double t);
/// Value and divergence sharing one set of activations.
std::pair<NodeId, NodeId> eval_velocity_divergence(Tape& tape, BoundVelocity& v, NodeId x, double t);
NodeId eval_source(Tape& tape, BoundSource& f, NodeId x, double t);

// ---- plain (off-tape) evaluation, used by oracles and exports ----

void velocity_at(const VelocityField& v, std::span<const double> x, double t,
                 std::span<double> out);
double divergence_at(const VelocityField& v, std::span<const double> x, double t);
double source_at(const SourceField& f, std::span<const double> x, double t);

}  // namespace uot
