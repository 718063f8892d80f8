#include "gatk/transforms.hpp"

#include <cmath>
#include <vector>

#include "gatk/autograd.hpp"
#include "gatk/error.hpp"

namespace gatk {

namespace {

struct Tap {
    std::size_t i0, i1;
    double w0, w1;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
    std::vector<Tap> taps(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
        if (src < 0.0) src = 0.0;
        auto i0 = static_cast<std::size_t>(src);
        if (i0 > in - 1) i0 = in - 1;
        const std::size_t i1 = i0 + 1 < in ? i0 + 1 : in - 1;
        const double frac = src - static_cast<double>(i0);
        taps[o] = {i0, i1, 1.0 - frac, frac};
    }
    return taps;
}

void require_image(const Tensor& x, const char* what) {
    if (x.rank() != 3) throw DimensionError(std::string(what) + ": expected C x H x W, got " + shape_str(x.shape()));
}

}  // namespace

double TimConfig::sigma() const {
    return kernel_sigma ? *kernel_sigma : static_cast<double>(kernel_size) / std::sqrt(3.0);
}

void TransformPipeline::validate() const {
    if (dim) {
        if (!(dim->p >= 0.0 && dim->p <= 1.0)) throw ConfigError("DIM probability must lie in [0, 1]");
        if (!(dim->r_min_fraction > 0.0 && dim->r_min_fraction <= 1.0)) {
            throw ConfigError("DIM r_min_fraction must lie in (0, 1]");
        }
    }
    if (sim && sim->m < 1) throw ConfigError("SIM needs at least one scale copy");
    if (tim) {
        if (tim->kernel_size == 0 || tim->kernel_size % 2 == 0) throw ConfigError("TIM kernel size must be odd");
        if (!(tim->sigma() > 0.0)) throw ConfigError("TIM kernel sigma must be positive");
    }
}

Tensor resize_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w) {
    require_image(x, "resize_bilinear");
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const auto ty = bilinear_taps(h, out_h);
    const auto tx = bilinear_taps(w, out_w);
    Tensor out({c, out_h, out_w});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            const Tap& a = ty[oy];
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                const Tap& b = tx[ox];
                out.at(ch, oy, ox) = a.w0 * b.w0 * x.at(ch, a.i0, b.i0) + a.w0 * b.w1 * x.at(ch, a.i0, b.i1) +
                                     a.w1 * b.w0 * x.at(ch, a.i1, b.i0) + a.w1 * b.w1 * x.at(ch, a.i1, b.i1);
            }
        }
    }
    return out;
}

Tensor resize_bilinear_adjoint(const Tensor& g, std::size_t in_h, std::size_t in_w) {
    require_image(g, "resize_bilinear_adjoint");
    const std::size_t c = g.dim(0), out_h = g.dim(1), out_w = g.dim(2);
    const auto ty = bilinear_taps(in_h, out_h);
    const auto tx = bilinear_taps(in_w, out_w);
    Tensor out({c, in_h, in_w});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            const Tap& a = ty[oy];
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                const Tap& b = tx[ox];
                const double v = g.at(ch, oy, ox);
                out.at(ch, a.i0, b.i0) += a.w0 * b.w0 * v;
                out.at(ch, a.i0, b.i1) += a.w0 * b.w1 * v;
                out.at(ch, a.i1, b.i0) += a.w1 * b.w0 * v;
                out.at(ch, a.i1, b.i1) += a.w1 * b.w1 * v;
            }
        }
    }
    return out;
}

DimDraw DimDraw::draw(const DimConfig& cfg, std::size_t size, RngStream& rng) {
    DimDraw d;
    d.size = size;
    d.resized = size;
    if (!rng.bernoulli(cfg.p)) return d;
    d.applied = true;
    auto r_min = static_cast<std::size_t>(std::ceil(cfg.r_min_fraction * static_cast<double>(size)));
    if (r_min < 1) r_min = 1;
    if (r_min > size) r_min = size;
    d.resized = rng.uniform_index(r_min, size);
    const std::size_t slack = size - d.resized;
    d.top = rng.uniform_index(0, slack);
    d.left = rng.uniform_index(0, slack);
    return d;
}

Tensor DimDraw::apply(const Tensor& x) const {
    if (!applied) return x;
    require_image(x, "dim_transform");
    const std::size_t c = x.dim(0);
    Tensor small = resize_bilinear(x, resized, resized);
    Tensor out({c, size, size});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < resized; ++i)
            for (std::size_t j = 0; j < resized; ++j) out.at(ch, top + i, left + j) = small.at(ch, i, j);
    return out;
}

Tensor DimDraw::adjoint(const Tensor& g) const {
    if (!applied) return g;
    require_image(g, "dim_transform adjoint");
    const std::size_t c = g.dim(0);
    Tensor small({c, resized, resized});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < resized; ++i)
            for (std::size_t j = 0; j < resized; ++j) small.at(ch, i, j) = g.at(ch, top + i, left + j);
    return resize_bilinear_adjoint(small, size, size);
}

Tensor dim_transform(const Tensor& x, const DimConfig& cfg, RngStream& rng) {
    require_image(x, "dim_transform");
    if (x.dim(1) != x.dim(2)) throw DimensionError("dim_transform: square images required, got " + shape_str(x.shape()));
    return DimDraw::draw(cfg, x.dim(1), rng).apply(x);
}

Tensor sim_gradients(const InputGradFn& grad_fn, const Tensor& x, std::size_t m) {
    if (m < 1) throw ConfigError("sim_gradients: m must be at least 1");
    Tensor total = grad_fn(x);
    double scale = 1.0;
    for (std::size_t i = 1; i < m; ++i) {
        scale *= 0.5;
        total += grad_fn(x * scale);
    }
    if (m > 1) total *= 1.0 / static_cast<double>(m);
    return total;
}

Tensor tim_kernel(std::size_t size, double sigma) {
    if (size == 0 || size % 2 == 0) throw ConfigError("tim_kernel: size must be odd, got " + std::to_string(size));
    if (!(sigma > 0.0)) throw ConfigError("tim_kernel: sigma must be positive");
    Tensor k({size, size});
    const auto half = static_cast<double>(size / 2);
    double total = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
        for (std::size_t j = 0; j < size; ++j) {
            const double di = static_cast<double>(i) - half;
            const double dj = static_cast<double>(j) - half;
            const double v = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
            k.at(i, j) = v;
            total += v;
        }
    }
    for (double& v : k.values()) v /= total;
    return k;
}

Tensor tim_smooth(const Tensor& g, const Tensor& kernel) {
    require_image(g, "tim_smooth");
    if (kernel.rank() != 2 || kernel.dim(0) != kernel.dim(1)) {
        throw DimensionError("tim_smooth: expected a square 2-D kernel, got " + shape_str(kernel.shape()));
    }
    const std::size_t c = g.dim(0), h = g.dim(1), w = g.dim(2), k = kernel.dim(0);
    const Tensor k4 = kernel.reshaped({1, 1, k, k});
    Tensor out(g.shape());
    const std::size_t plane = h * w;
    for (std::size_t ch = 0; ch < c; ++ch) {
        Tensor slice({1, h, w}, std::vector<double>(g.data() + ch * plane, g.data() + (ch + 1) * plane));
        Tensor smoothed = kernels::conv2d(slice, k4, Padding::Same);
        std::copy(smoothed.data(), smoothed.data() + plane, out.data() + ch * plane);
    }
    return out;
}

Tensor composite_gradient(const InputGradFn& grad_fn, const Tensor& x, const TransformPipeline& pipeline,
                          RngStream& rng) {
    DimDraw draw;
    Tensor input = x;
    if (pipeline.dim) {
        require_image(x, "composite_gradient");
        if (x.dim(1) != x.dim(2)) throw DimensionError("DIM requires square images, got " + shape_str(x.shape()));
        draw = DimDraw::draw(*pipeline.dim, x.dim(1), rng);
        input = draw.apply(x);
    }
    Tensor raw = pipeline.sim ? sim_gradients(grad_fn, input, pipeline.sim->m) : grad_fn(input);
    if (draw.applied) raw = draw.adjoint(raw);
    if (pipeline.tim) raw = tim_smooth(raw, tim_kernel(pipeline.tim->kernel_size, pipeline.tim->sigma()));
    require_same_shape(raw, x, "composite_gradient");
    return raw;
}

}  // namespace gatk
