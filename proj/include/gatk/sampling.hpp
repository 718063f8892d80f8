#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "gatk/rng.hpp"
#include "gatk/tensor.hpp"

namespace gatk {

/// Gradient oracle evaluated at a point. The stream carries the randomness
/// of anything applied per evaluation (input transforms); each sampled point
/// receives its own sub-stream.
using GradFn = std::function<Tensor(const Tensor& x, RngStream& rng)>;

enum class SamplerKind { None, DepthFirst, Gaussian };

struct SamplerConfig {
    SamplerKind kind = SamplerKind::None;
    std::size_t n = 12;
    double beta = 1.5;
    /// Gaussian baseline scale; defaults to beta * epsilon / sqrt(3), the
    /// standard deviation of the depth-first uniform step.
    std::optional<double> sigma;

    static SamplerConfig none() { return {}; }
    static SamplerConfig depth_first(std::size_t n = 12, double beta = 1.5) {
        return {SamplerKind::DepthFirst, n, beta, std::nullopt};
    }
    static SamplerConfig gaussian(std::size_t n = 12, double beta = 1.5, std::optional<double> sigma = {}) {
        return {SamplerKind::Gaussian, n, beta, sigma};
    }

    void validate() const;
    double sigma_for(double epsilon) const;
};

/// Depth-first sampled gradient:
///
///   (1 / (N + 1)) * sum_{i=0..N} grad_fn(x^i),  x^0 = x,  x^{i+1} = x^i + xi_i
///
/// with xi_i elementwise uniform on [-beta * eps, beta * eps]. Each sample is
/// centred on the previous one. Sampled points are not clipped to [0, 1].
/// All offsets are drawn from `rng.child(0)` before any gradient is taken;
/// sample i evaluates with `rng.child(i + 1)`. When `chain` is non-null the
/// visited points are appended to it.
Tensor dfs_gradient(const GradFn& grad_fn, const Tensor& x, std::size_t n, double beta, double epsilon,
                    const RngStream& rng, std::vector<Tensor>* chain = nullptr);

/// Breadth-first baseline: every sample is x plus iid Normal(0, sigma^2)
/// noise; the zeroth sample is x itself.
Tensor gaussian_gradient(const GradFn& grad_fn, const Tensor& x, std::size_t n, double sigma,
                         const RngStream& rng);

/// Dispatches on cfg.kind. SamplerKind::None evaluates grad_fn once at x with
/// `rng.child(1)`, the same sub-stream a sampler gives its zeroth sample.
Tensor sampled_gradient(const SamplerConfig& cfg, const GradFn& grad_fn, const Tensor& x, double epsilon,
                        const RngStream& rng);

/// True iff ||chain[i] - chain[0]||_inf <= i * beta * eps for every i.
bool chain_deviation_bound_check(std::span<const Tensor> chain, double beta, double epsilon);

}  // namespace gatk
