#include "gatk/sampling.hpp"

#include <cmath>

#include "gatk/error.hpp"

namespace gatk {

namespace {

// Incremental mean m_{k+1} = m_k + (v - m_k) / (k + 1). Averaging identical
// terms returns the term bit-exactly, so degenerate samplers (N = 0, zero
// range) coincide with the unsampled gradient.
class RunningMean {
public:
    void add(const Tensor& v) {
        ++count_;
        if (count_ == 1) {
            mean_ = v;
            return;
        }
        require_same_shape(mean_, v, "sampled gradient");
        const double k = static_cast<double>(count_);
        for (std::size_t i = 0; i < v.size(); ++i) mean_[i] += (v[i] - mean_[i]) / k;
    }
    Tensor take() { return std::move(mean_); }

private:
    Tensor mean_;
    std::size_t count_ = 0;
};

}  // namespace

void SamplerConfig::validate() const {
    if (!(beta >= 0.0)) throw ConfigError("sampler beta must be non-negative");
    if (sigma && !(*sigma >= 0.0)) throw ConfigError("sampler sigma must be non-negative");
}

double SamplerConfig::sigma_for(double epsilon) const {
    return sigma ? *sigma : beta * epsilon / std::sqrt(3.0);
}

Tensor dfs_gradient(const GradFn& grad_fn, const Tensor& x, std::size_t n, double beta, double epsilon,
                    const RngStream& rng, std::vector<Tensor>* chain) {
    if (!(beta >= 0.0) || !(epsilon >= 0.0)) throw ConfigError("dfs_gradient: beta and epsilon must be non-negative");
    const double range = beta * epsilon;

    std::vector<Tensor> points;
    points.reserve(n + 1);
    points.push_back(x);
    RngStream noise = rng.child(0);
    for (std::size_t i = 0; i < n; ++i) {
        Tensor next = points.back();
        if (range > 0.0) {
            for (double& v : next.values()) v += noise.uniform(-range, range);
        }
        points.push_back(std::move(next));
    }

    RunningMean mean;
    for (std::size_t i = 0; i < points.size(); ++i) {
        RngStream sub = rng.child(i + 1);
        mean.add(grad_fn(points[i], sub));
    }
    if (chain) chain->insert(chain->end(), points.begin(), points.end());
    return mean.take();
}

Tensor gaussian_gradient(const GradFn& grad_fn, const Tensor& x, std::size_t n, double sigma, const RngStream& rng) {
    if (!(sigma >= 0.0)) throw ConfigError("gaussian_gradient: sigma must be non-negative");
    std::vector<Tensor> points;
    points.reserve(n + 1);
    points.push_back(x);
    RngStream noise = rng.child(0);
    for (std::size_t i = 0; i < n; ++i) {
        Tensor p = x;
        if (sigma > 0.0) {
            for (double& v : p.values()) v += noise.normal(0.0, sigma);
        }
        points.push_back(std::move(p));
    }

    RunningMean mean;
    for (std::size_t i = 0; i < points.size(); ++i) {
        RngStream sub = rng.child(i + 1);
        mean.add(grad_fn(points[i], sub));
    }
    return mean.take();
}

Tensor sampled_gradient(const SamplerConfig& cfg, const GradFn& grad_fn, const Tensor& x, double epsilon,
                        const RngStream& rng) {
    switch (cfg.kind) {
        case SamplerKind::DepthFirst:
            return dfs_gradient(grad_fn, x, cfg.n, cfg.beta, epsilon, rng);
        case SamplerKind::Gaussian:
            return gaussian_gradient(grad_fn, x, cfg.n, cfg.sigma_for(epsilon), rng);
        case SamplerKind::None:
            break;
    }
    RngStream sub = rng.child(1);
    return grad_fn(x, sub);
}

bool chain_deviation_bound_check(std::span<const Tensor> chain, double beta, double epsilon) {
    if (chain.empty()) return true;
    const double step = beta * epsilon;
    for (std::size_t i = 1; i < chain.size(); ++i) {
        const double bound = static_cast<double>(i) * step;
        // Allow for the rounding of i accumulated additions.
        const double slack = 4.0 * static_cast<double>(i) * 1e-16 * (1.0 + chain[0].max_abs() + bound);
        if (linf_distance(chain[i], chain[0]) > bound + slack) return false;
    }
    return true;
}

}  // namespace gatk
