#pragma once

#include <cstdint>
#include <vector>

#include "uot/rng.hpp"
#include "uot/tape.hpp"
#include "uot/tensor.hpp"

namespace uot {

/// Unnormalized mixture of axis-aligned Gaussians. Weights are masses, not
/// probabilities; the total mass may be any positive number.
class GaussianMixture {
public:
    struct Component {
        double weight;                 // mass, > 0
        std::vector<double> mean;      // length d
        std::vector<double> variance;  // per-axis, entries > 0
    };

    GaussianMixture(std::size_t dim, std::vector<Component> components);

    /// Isotropic single Gaussian with mass `weight`.
    static GaussianMixture isotropic(std::size_t dim, double weight,
                                     const std::vector<double>& mean, double variance);

    std::size_t dim() const { return dim_; }
    const std::vector<Component>& components() const { return components_; }
    double total_mass() const;

    /// Mass-weighted mean of the mixture.
    std::vector<double> mean() const;

    /// Same shape, weights scaled so the total mass is 1.
    GaussianMixture normalized() const;

    /// Log of the unnormalized density at one point.
    double log_density(std::span<const double> x) const;

    /// Log density for a batch of points (r x d) -> r values.
    Tensor log_density(const Tensor& points) const;

    /// Tape composition of the log density at a batch node (r x d) -> r node.
    /// Differentiable with respect to the points.
    NodeId log_density_node(Tape& tape, NodeId points) const;

    /// Draw r points from the mass-normalized mixture.
    Tensor sample(std::size_t r, Rng& rng) const;

private:
    std::size_t dim_;
    std::vector<Component> components_;
    // cached per-component log weight + Gaussian normalizing constant
    std::vector<double> log_const_;
};

/// Points drawn from a mixture together with the stream identity that
/// produced them.
struct SampleBatch {
    Tensor points;       // r x d
    std::uint64_t seed;  // stream identifier for reproducibility records
};

}  // namespace uot
