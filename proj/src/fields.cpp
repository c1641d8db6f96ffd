#include "uot/fields.hpp"

#include <cmath>
#include <string>

#include "uot/errors.hpp"

namespace uot {

BasisMix HatBasis::weights(double t) const {
    if (!(t >= 0.0 && t <= 1.0))
        throw shape_error("hat basis: t = " + std::to_string(t) + " outside [0,1]");
    BasisMix mix;
    if (m_ == 0) {
        mix.index[0] = 0;
        mix.weight[0] = 1.0;
        mix.count = 1;
        return mix;
    }
    const double u = t * static_cast<double>(m_);
    const double nearest = std::round(u);
    // Snap to the node when u is a few ulp away so node evaluations use the
    // single exact basis function.
    if (std::abs(u - nearest) <= 1e-12 * std::max(1.0, std::abs(u))) {
        mix.index[0] = static_cast<std::size_t>(nearest);
        mix.weight[0] = 1.0;
        mix.count = 1;
        return mix;
    }
    const auto i0 = static_cast<std::size_t>(u);
    const double frac = u - static_cast<double>(i0);
    mix.index = {i0, i0 + 1};
    mix.weight = {1.0 - frac, frac};
    mix.count = 2;
    return mix;
}

namespace {

MlpStack init_stack(std::size_t d, std::size_t M, std::size_t L, std::size_t H, Rng& rng) {
    if (d == 0 || L == 0 || H == 0) throw config_error("field sizes must be positive");
    MlpStack s{d, M, L, H, {}};
    s.blocks.reserve((M + 1) * L);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(d));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(H));
    for (std::size_t i = 0; i <= M; ++i) {
        for (std::size_t l = 0; l < L; ++l) {
            MlpBlock b;
            b.w1 = Tensor({H, d});
            for (double& w : b.w1.values()) w = rng.uniform(-s1, s1);
            b.b1 = Tensor({H});
            b.w2t = Tensor({H, d});
            for (double& w : b.w2t.values()) w = rng.uniform(-s2, s2);
            b.b2 = Tensor({d});
            s.blocks.push_back(std::move(b));
        }
    }
    return s;
}

}  // namespace

VelocityField init_velocity(std::size_t d, std::size_t M, std::size_t L, std::size_t H, Rng& rng) {
    return VelocityField{init_stack(d, M, L, H, rng)};
}

SourceField init_source(std::size_t d, std::size_t M, std::size_t L, std::size_t H, Rng& rng) {
    SourceField f{init_stack(d, M, L, H, rng), Tensor({d}), Tensor::scalar(0.0)};
    const double sw = 1.0 / std::sqrt(static_cast<double>(d));
    for (double& w : f.w.values()) w = rng.uniform(-sw, sw);
    return f;
}

std::pair<VelocityField, SourceField> init_fields(std::size_t d, std::size_t M, std::size_t L,
                                                  std::size_t H, Rng& rng) {
    VelocityField v = init_velocity(d, M, L, H, rng);
    SourceField f = init_source(d, M, L, H, rng);
    return {std::move(v), std::move(f)};
}

std::vector<ParamRef> parameters(MlpStack& stack, const std::string& prefix) {
    std::vector<ParamRef> out;
    out.reserve(stack.blocks.size() * 4);
    for (std::size_t i = 0; i <= stack.M; ++i) {
        for (std::size_t l = 0; l < stack.L; ++l) {
            const std::string suffix = "/" + std::to_string(i) + "/" + std::to_string(l);
            MlpBlock& b = stack.block(i, l);
            out.push_back({prefix + "/W1" + suffix, &b.w1});
            out.push_back({prefix + "/b1" + suffix, &b.b1});
            out.push_back({prefix + "/W2" + suffix, &b.w2t});
            out.push_back({prefix + "/b2" + suffix, &b.b2});
        }
    }
    return out;
}

std::vector<ParamRef> parameters(VelocityField& v) { return parameters(v.net, "v"); }

std::vector<ParamRef> parameters(SourceField& f) {
    std::vector<ParamRef> out = parameters(f.net, "f");
    out.push_back({"f/w", &f.w});
    out.push_back({"f/b", &f.b});
    return out;
}

namespace {

BoundStack bind_stack(Tape& tape, const MlpStack& s, bool as_parameters) {
    BoundStack bs;
    bs.spec = &s;
    bs.blocks.reserve(s.blocks.size());
    for (const MlpBlock& b : s.blocks) {
        BoundBlock bb;
        bb.w1 = tape.leaf(b.w1, as_parameters);
        bb.b1 = tape.leaf(b.b1, as_parameters);
        bb.w2t = tape.leaf(b.w2t, as_parameters);
        bb.b2 = tape.leaf(b.b2, as_parameters);
        bs.blocks.push_back(bb);
    }
    return bs;
}

}  // namespace

BoundVelocity bind(Tape& tape, const VelocityField& v, bool as_parameters) {
    return BoundVelocity{bind_stack(tape, v.net, as_parameters)};
}

BoundSource bind(Tape& tape, const SourceField& f, bool as_parameters) {
    BoundSource bf;
    bf.stack = bind_stack(tape, f.net, as_parameters);
    bf.w = tape.leaf(f.w, as_parameters);
    bf.b = tape.leaf(f.b, as_parameters);
    return bf;
}

StackActivations stack_hidden(Tape& tape, const BoundStack& bs, NodeId x, double t) {
    const MlpStack& s = *bs.spec;
    const Tensor& vx = tape.value(x);
    if (vx.rank() != 2 || vx.cols() != s.d)
        throw shape_error("field evaluation: batch shape " + shape_string(vx.shape()) +
                          " does not match dimension " + std::to_string(s.d));
    StackActivations act;
    act.mix = s.basis().weights(t);
    act.hidden.reserve(act.mix.count * s.L);
    for (std::size_t a = 0; a < act.mix.count; ++a) {
        for (std::size_t l = 0; l < s.L; ++l) {
            const BoundBlock& bb = bs.blocks[act.mix.index[a] * s.L + l];
            NodeId pre = tape.broadcast_add_row(tape.matmul(x, bb.w1, /*transpose_b=*/true), bb.b1);
            act.hidden.push_back(tape.tanh(pre));
        }
    }
    return act;
}

NodeId stack_value(Tape& tape, const BoundStack& bs, const StackActivations& act) {
    const MlpStack& s = *bs.spec;
    NodeId sum{};
    bool first = true;
    // Basis weights are folded into the (small) second-layer tensors so only
    // one r x d product and one bias broadcast materialize per block.
    NodeId bias_mix{};
    bool first_bias = true;
    for (std::size_t a = 0; a < act.mix.count; ++a) {
        const double phi = act.mix.weight[a];
        for (std::size_t l = 0; l < s.L; ++l) {
            const BoundBlock& bb = bs.blocks[act.mix.index[a] * s.L + l];
            NodeId w2s = phi == 1.0 ? bb.w2t : tape.scale(bb.w2t, phi);
            NodeId term = tape.matmul(act.hidden[a * s.L + l], w2s);
            sum = first ? term : tape.add(sum, term);
            first = false;
            NodeId b2s = phi == 1.0 ? bb.b2 : tape.scale(bb.b2, phi);
            bias_mix = first_bias ? b2s : tape.add(bias_mix, b2s);
            first_bias = false;
        }
    }
    return tape.broadcast_add_row(sum, bias_mix);
}

NodeId stack_divergence(Tape& tape, BoundStack& bs, const StackActivations& act) {
    const MlpStack& s = *bs.spec;
    const std::size_t r = tape.value(act.hidden[0]).rows();
    if (!bs.has_ones) {
        bs.ones_rh = tape.leaf(Tensor({r, s.H}, 1.0));
        bs.has_ones = true;
    }
    NodeId sum{};
    bool first = true;
    for (std::size_t a = 0; a < act.mix.count; ++a) {
        const double phi = act.mix.weight[a];
        for (std::size_t l = 0; l < s.L; ++l) {
            const BoundBlock& bb = bs.blocks[act.mix.index[a] * s.L + l];
            // sigma'(a) = 1 - tanh(a)^2, contracted against
            // c_h = sum_k W2[k,h] W1[h,k].
            NodeId sprime = tape.sub(bs.ones_rh, tape.square(act.hidden[a * s.L + l]));
            NodeId c = tape.sum_axis(tape.mul(bb.w1, bb.w2t), 1);
            if (phi != 1.0) c = tape.scale(c, phi);
            NodeId term = tape.matmul(sprime, c);
            sum = first ? term : tape.add(sum, term);
            first = false;
        }
    }
    return sum;
}

NodeId eval_velocity(Tape& tape, BoundVelocity& v, NodeId x, double t) {
    StackActivations act = stack_hidden(tape, v.stack, x, t);
    return stack_value(tape, v.stack, act);
}

NodeId eval_divergence(Tape& tape, BoundVelocity& v, NodeId x, double t) {
    StackActivations act = stack_hidden(tape, v.stack, x, t);
    return stack_divergence(tape, v.stack, act);
}

std::pair<NodeId, NodeId> eval_velocity_divergence(Tape& tape, BoundVelocity& v, NodeId x,
                                                   double t) {
    StackActivations act = stack_hidden(tape, v.stack, x, t);
    NodeId val = stack_value(tape, v.stack, act);
    NodeId div = stack_divergence(tape, v.stack, act);
    return {val, div};
}

NodeId eval_source(Tape& tape, BoundSource& f, NodeId x, double t) {
    StackActivations act = stack_hidden(tape, f.stack, x, t);
    NodeId u = stack_value(tape, f.stack, act);
    const std::size_t r = tape.value(x).rows();
    if (!f.has_ones) {
        f.ones_r1 = tape.leaf(Tensor({r, 1}, 1.0));
        f.has_ones = true;
    }
    NodeId bias = tape.matmul(f.ones_r1, f.b);  // r-vector holding b
    return tape.add(tape.matmul(u, f.w), bias);
}

// ---- plain evaluation ----

namespace {

// Straight-line evaluation of one block's hidden pre-activations into `hid`.
void block_hidden(const MlpBlock& b, std::span<const double> x, std::vector<double>& hid) {
    const std::size_t H = b.w1.rows(), d = b.w1.cols();
    hid.resize(H);
    for (std::size_t h = 0; h < H; ++h) {
        double a = b.b1[h];
        const double* row = b.w1.data() + h * d;
        for (std::size_t k = 0; k < d; ++k) a += row[k] * x[k];
        hid[h] = std::tanh(a);
    }
}

}  // namespace

void velocity_at(const VelocityField& v, std::span<const double> x, double t,
                 std::span<double> out) {
    const MlpStack& s = v.net;
    if (x.size() != s.d || out.size() != s.d)
        throw shape_error("velocity_at: dimension mismatch");
    for (double& o : out) o = 0.0;
    const BasisMix mix = s.basis().weights(t);
    std::vector<double> hid;
    for (std::size_t a = 0; a < mix.count; ++a) {
        for (std::size_t l = 0; l < s.L; ++l) {
            const MlpBlock& b = s.block(mix.index[a], l);
            block_hidden(b, x, hid);
            for (std::size_t k = 0; k < s.d; ++k) {
                double acc = b.b2[k];
                for (std::size_t h = 0; h < s.H; ++h) acc += b.w2t.at(h, k) * hid[h];
                out[k] += mix.weight[a] * acc;
            }
        }
    }
}

double divergence_at(const VelocityField& v, std::span<const double> x, double t) {
    const MlpStack& s = v.net;
    if (x.size() != s.d) throw shape_error("divergence_at: dimension mismatch");
    const BasisMix mix = s.basis().weights(t);
    std::vector<double> hid;
    double div = 0.0;
    for (std::size_t a = 0; a < mix.count; ++a) {
        for (std::size_t l = 0; l < s.L; ++l) {
            const MlpBlock& b = s.block(mix.index[a], l);
            block_hidden(b, x, hid);
            double acc = 0.0;
            for (std::size_t h = 0; h < s.H; ++h) {
                double c = 0.0;
                for (std::size_t k = 0; k < s.d; ++k) c += b.w1.at(h, k) * b.w2t.at(h, k);
                acc += (1.0 - hid[h] * hid[h]) * c;
            }
            div += mix.weight[a] * acc;
        }
    }
    return div;
}

double source_at(const SourceField& f, std::span<const double> x, double t) {
    const MlpStack& s = f.net;
    if (x.size() != s.d) throw shape_error("source_at: dimension mismatch");
    const BasisMix mix = s.basis().weights(t);
    std::vector<double> hid;
    double out = f.b[0];
    for (std::size_t a = 0; a < mix.count; ++a) {
        for (std::size_t l = 0; l < s.L; ++l) {
            const MlpBlock& b = s.block(mix.index[a], l);
            block_hidden(b, x, hid);
            for (std::size_t k = 0; k < s.d; ++k) {
                double acc = b.b2[k];
                for (std::size_t h = 0; h < s.H; ++h) acc += b.w2t.at(h, k) * hid[h];
                out += f.w[k] * mix.weight[a] * acc;
            }
        }
    }
    return out;
}

}  // namespace uot
