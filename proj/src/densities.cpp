#include "uot/densities.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "uot/errors.hpp"

namespace uot {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;  // ln(2*pi)
}

GaussianMixture::GaussianMixture(std::size_t dim, std::vector<Component> components)
    : dim_(dim), components_(std::move(components)) {
    if (dim_ == 0) throw config_error("mixture dimension must be positive");
    if (components_.empty()) throw config_error("mixture needs at least one component");
    for (const Component& c : components_) {
        if (!(c.weight > 0.0)) throw config_error("mixture weights must be positive");
        if (c.mean.size() != dim_ || c.variance.size() != dim_)
            throw config_error("mixture component dimension mismatch");
        for (double v : c.variance)
            if (!(v > 0.0)) throw config_error("mixture variances must be positive");
    }
    log_const_.reserve(components_.size());
    for (const Component& c : components_) {
        double lc = std::log(c.weight);
        for (double v : c.variance) lc -= 0.5 * (kLog2Pi + std::log(v));
        log_const_.push_back(lc);
    }
}

GaussianMixture GaussianMixture::isotropic(std::size_t dim, double weight,
                                           const std::vector<double>& mean, double variance) {
    Component c{weight, mean, std::vector<double>(dim, variance)};
    return GaussianMixture(dim, {std::move(c)});
}

double GaussianMixture::total_mass() const {
    double m = 0.0;
    for (const Component& c : components_) m += c.weight;
    return m;
}

std::vector<double> GaussianMixture::mean() const {
    std::vector<double> mu(dim_, 0.0);
    const double m = total_mass();
    for (const Component& c : components_)
        for (std::size_t k = 0; k < dim_; ++k) mu[k] += c.weight / m * c.mean[k];
    return mu;
}

GaussianMixture GaussianMixture::normalized() const {
    const double m = total_mass();
    std::vector<Component> comps = components_;
    for (Component& c : comps) c.weight /= m;
    return GaussianMixture(dim_, std::move(comps));
}

double GaussianMixture::log_density(std::span<const double> x) const {
    if (x.size() != dim_) throw shape_error("log_density: point dimension mismatch");
    double best = -std::numeric_limits<double>::infinity();
    // Small fixed-size scratch keeps single-point evaluation allocation-free.
    std::vector<double> comp_log(components_.size());
    for (std::size_t c = 0; c < components_.size(); ++c) {
        const Component& cc = components_[c];
        double q = 0.0;
        for (std::size_t k = 0; k < dim_; ++k) {
            const double dx = x[k] - cc.mean[k];
            q += dx * dx / cc.variance[k];
        }
        comp_log[c] = log_const_[c] - 0.5 * q;
        best = std::max(best, comp_log[c]);
    }
    if (components_.size() == 1) return comp_log[0];
    double s = 0.0;
    for (double l : comp_log) s += std::exp(l - best);
    return best + std::log(s);
}

Tensor GaussianMixture::log_density(const Tensor& points) const {
    if (points.rank() != 2 || points.cols() != dim_)
        throw shape_error("log_density: expected batch of shape r x " + std::to_string(dim_));
    const std::size_t r = points.rows();
    Tensor out({r});
    for (std::size_t i = 0; i < r; ++i)
        out[i] = log_density(std::span<const double>(points.data() + i * dim_, dim_));
    return out;
}

NodeId GaussianMixture::log_density_node(Tape& tape, NodeId points) const {
    const Tensor& x = tape.value(points);
    if (x.rank() != 2 || x.cols() != dim_)
        throw shape_error("log_density_node: expected batch of shape r x " + std::to_string(dim_));
    const std::size_t r = x.rows();

    std::vector<NodeId> comp_logs;
    comp_logs.reserve(components_.size());
    for (std::size_t c = 0; c < components_.size(); ++c) {
        const Component& cc = components_[c];
        Tensor neg_mean({dim_});
        Tensor coeff({r, dim_});
        for (std::size_t k = 0; k < dim_; ++k) neg_mean[k] = -cc.mean[k];
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t k = 0; k < dim_; ++k) coeff.at(i, k) = -0.5 / cc.variance[k];
        NodeId centered = tape.broadcast_add_row(points, tape.leaf(std::move(neg_mean)));
        NodeId quad = tape.sum_axis(tape.mul(tape.square(centered), tape.leaf(std::move(coeff))), 1);
        comp_logs.push_back(tape.add(quad, tape.leaf(Tensor({r}, log_const_[c]))));
    }
    if (components_.size() == 1) return comp_logs[0];

    // log-sum-exp across components; the per-sample shift is a constant, which
    // leaves the gradient (a softmax) unchanged.
    Tensor shift({r});
    for (std::size_t i = 0; i < r; ++i) {
        double best = tape.value(comp_logs[0])[i];
        for (std::size_t c = 1; c < components_.size(); ++c)
            best = std::max(best, tape.value(comp_logs[c])[i]);
        shift[i] = best;
    }
    NodeId shift_node = tape.leaf(shift);
    Tensor neg_shift({r});
    for (std::size_t i = 0; i < r; ++i) neg_shift[i] = -shift[i];
    NodeId stacked = tape.stack(comp_logs);  // C x r
    NodeId rel = tape.broadcast_add_row(stacked, tape.leaf(std::move(neg_shift)));
    NodeId lse = tape.log(tape.sum_axis(tape.exp(rel), 0));
    return tape.add(lse, shift_node);
}

Tensor GaussianMixture::sample(std::size_t r, Rng& rng) const {
    if (r == 0) throw config_error("sample: need a positive sample count");
    const double m = total_mass();
    Tensor out({r, dim_});
    for (std::size_t i = 0; i < r; ++i) {
        std::size_t pick = components_.size() - 1;
        if (components_.size() > 1) {
            const double u = rng.uniform() * m;
            double cum = 0.0;
            for (std::size_t c = 0; c < components_.size(); ++c) {
                cum += components_[c].weight;
                if (u < cum) {
                    pick = c;
                    break;
                }
            }
        }
        const Component& cc = components_[pick];
        for (std::size_t k = 0; k < dim_; ++k)
            out.at(i, k) = cc.mean[k] + std::sqrt(cc.variance[k]) * rng.normal();
    }
    return out;
}

}  // namespace uot
