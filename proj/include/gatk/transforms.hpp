#pragma once

#include <cstddef>
#include <functional>
#include <optional>

#include "gatk/rng.hpp"
#include "gatk/tensor.hpp"

namespace gatk {

/// Random resize-and-pad. With probability p the image is bilinearly resized
/// down to r x r, r uniform in [ceil(r_min_fraction * H), H], and zero-padded
/// back to H x H at a uniformly random offset.
struct DimConfig {
    double p = 0.5;
    double r_min_fraction = 0.9;
};

/// Average of gradients taken at x / 2^i for i = 0..m-1.
struct SimConfig {
    std::size_t m = 5;
};

/// Gaussian smoothing of the gradient (translation-invariant form).
struct TimConfig {
    std::size_t kernel_size = 7;
    std::optional<double> kernel_sigma;  // kernel_size / sqrt(3) when unset

    double sigma() const;
};

/// Any subset of DIM, SIM and TIM; applied in that order. Empty = plain gradient.
struct TransformPipeline {
    std::optional<DimConfig> dim;
    std::optional<SimConfig> sim;
    std::optional<TimConfig> tim;

    bool empty() const noexcept { return !dim && !sim && !tim; }
    void validate() const;
};

/// One realisation of the DIM randomness for an H x H image.
struct DimDraw {
    bool applied = false;
    std::size_t size = 0;    // H
    std::size_t resized = 0; // r
    std::size_t top = 0;
    std::size_t left = 0;

    static DimDraw draw(const DimConfig& cfg, std::size_t size, RngStream& rng);

    /// Resize-and-pad of a C x H x W image.
    Tensor apply(const Tensor& x) const;
    /// Transpose of `apply`; maps a gradient at the transformed image back
    /// onto the original pixel grid.
    Tensor adjoint(const Tensor& g) const;
};

Tensor dim_transform(const Tensor& x, const DimConfig& cfg, RngStream& rng);

/// Bilinear resize of a C x H x W tensor to C x out_h x out_w, half-pixel
/// centres (align_corners = false), source coordinates clamped to the edge.
Tensor resize_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w);
Tensor resize_bilinear_adjoint(const Tensor& g, std::size_t in_h, std::size_t in_w);

using InputGradFn = std::function<Tensor(const Tensor&)>;

/// (1/m) * sum_{i=0..m-1} grad_fn(x / 2^i).
Tensor sim_gradients(const InputGradFn& grad_fn, const Tensor& x, std::size_t m);

/// Normalised isotropic Gaussian, size x size. Throws ConfigError for even size.
Tensor tim_kernel(std::size_t size, double sigma);

/// Per-channel same-padded (zero) correlation of g with a 2-D kernel.
Tensor tim_smooth(const Tensor& g, const Tensor& kernel);

/// Gradient through the pipeline: DIM on the input, SIM averaging on the
/// (possibly transformed) input, DIM adjoint back to the original grid, then
/// TIM smoothing. An empty pipeline returns grad_fn(x).
Tensor composite_gradient(const InputGradFn& grad_fn, const Tensor& x, const TransformPipeline& pipeline,
                          RngStream& rng);

}  // namespace gatk
