#include "gatk/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gatk/error.hpp"

namespace gatk {

// ---------------------------------------------------------------------------
// Tape

Var Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
}

Var Tape::input(Tensor value) {
    Node n;
    n.owned = std::move(value);
    n.requires_grad = true;
    return push(std::move(n));
}

Var Tape::constant(Tensor value) {
    Node n;
    n.owned = std::move(value);
    return push(std::move(n));
}

Var Tape::constant_ref(const Tensor& value) {
    Node n;
    n.borrowed = &value;
    return push(std::move(n));
}

Var Tape::parameter_ref(const Tensor& value) {
    Node n;
    n.borrowed = &value;
    n.requires_grad = true;
    return push(std::move(n));
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
    Node n;
    n.owned = std::move(value);
    n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                  [this](std::size_t id) { return nodes_.at(id).requires_grad; });
    if (n.requires_grad) {
        n.inputs = std::move(inputs);
        n.backward = std::move(backward);
    }
    return push(std::move(n));
}

const Tensor& Tape::value(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.borrowed ? *n.borrowed : n.owned;
}

Tensor Tape::grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.grad.empty()) return Tensor::zeros(value(v).shape());
    return n.grad;
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.empty()) {
        n.grad = g;
    } else {
        n.grad += g;
    }
}

void Tape::accumulate(std::size_t id, Tensor&& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.empty()) {
        n.grad = std::move(g);
    } else {
        n.grad += g;
    }
}

void Tape::backward(Var loss) {
    if (value(loss).size() != 1) {
        throw DimensionError("backward requires a single-element loss, got " + shape_str(value(loss).shape()));
    }
    for (Node& n : nodes_) n.grad = Tensor();
    if (!nodes_[loss.id].requires_grad) return;
    nodes_[loss.id].grad = Tensor(value(loss).shape(), 1.0);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.backward || n.grad.empty()) continue;
        n.backward(*this, n.grad);
    }
}

// ---------------------------------------------------------------------------
// Raw kernels

namespace kernels {

namespace {

void require_matrix(const Tensor& t, const char* what) {
    if (t.rank() != 2) throw DimensionError(std::string(what) + ": expected a matrix, got " + shape_str(t.shape()));
}

void require_image(const Tensor& t, const char* what) {
    if (t.rank() != 3) {
        throw DimensionError(std::string(what) + ": expected C x H x W, got " + shape_str(t.shape()));
    }
}

struct ConvGeometry {
    std::size_t cin, h, w, cout, k, oh, ow;
    std::ptrdiff_t pad;
};

ConvGeometry conv_geometry(const Shape& xs, const Shape& ks, Padding padding) {
    if (xs.size() != 3) throw DimensionError("conv2d: expected input C x H x W, got " + shape_str(xs));
    if (ks.size() != 4 || ks[2] != ks[3]) {
        throw DimensionError("conv2d: expected kernels Cout x Cin x k x k, got " + shape_str(ks));
    }
    if (ks[1] != xs[0]) {
        throw DimensionError("conv2d: channel mismatch between input " + shape_str(xs) + " and kernels " +
                             shape_str(ks));
    }
    ConvGeometry g{xs[0], xs[1], xs[2], ks[0], ks[2], 0, 0, 0};
    std::size_t pad_total = padding == Padding::Same ? g.k - 1 : 0;
    if (g.k > g.h + pad_total || g.k > g.w + pad_total) {
        throw DimensionError("conv2d: kernel " + shape_str(ks) + " larger than padded input " + shape_str(xs));
    }
    g.pad = static_cast<std::ptrdiff_t>(pad_total / 2);
    g.oh = g.h + pad_total - g.k + 1;
    g.ow = g.w + pad_total - g.k + 1;
    return g;
}

// Output columns ox for which ix = ox + kx - pad lies inside [0, w).
inline void valid_range(std::ptrdiff_t offset, std::size_t in, std::size_t out, std::size_t& lo, std::size_t& hi) {
    std::ptrdiff_t l = std::max<std::ptrdiff_t>(0, -offset);
    std::ptrdiff_t h = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(out),
                                                static_cast<std::ptrdiff_t>(in) - offset);
    lo = static_cast<std::size_t>(l);
    hi = static_cast<std::size_t>(std::max(l, h));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw DimensionError("matmul: inner dimensions differ for " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    }
    Tensor out({m, n});
    const double* A = a.data();
    const double* B = b.data();
    double* C = out.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = B + p * n;
            double* crow = C + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
    return out;
}

Tensor matmul_transpose_b(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.dim(0), n = a.dim(1), k = b.dim(0);
    Tensor out({m, k});
    const double* A = a.data();
    const double* B = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            double s = 0.0;
            const double* arow = A + i * n;
            const double* brow = B + j * n;
            for (std::size_t p = 0; p < n; ++p) s += arow[p] * brow[p];
            out[i * k + j] = s;
        }
    }
    return out;
}

Tensor matmul_transpose_a(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out({k, n});
    const double* A = a.data();
    const double* B = b.data();
    double* C = out.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = B + i * n;
            double* crow = C + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
    return out;
}

Tensor conv2d(const Tensor& x, const Tensor& kernels, Padding padding) {
    const ConvGeometry g = conv_geometry(x.shape(), kernels.shape(), padding);
    Tensor out({g.cout, g.oh, g.ow});
    const double* X = x.data();
    const double* K = kernels.data();
    double* O = out.data();
    for (std::size_t co = 0; co < g.cout; ++co) {
        for (std::size_t ci = 0; ci < g.cin; ++ci) {
            for (std::size_t ky = 0; ky < g.k; ++ky) {
                const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - g.pad;
                std::size_t y0, y1;
                valid_range(dy, g.h, g.oh, y0, y1);
                for (std::size_t kx = 0; kx < g.k; ++kx) {
                    const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - g.pad;
                    std::size_t x0, x1;
                    valid_range(dx, g.w, g.ow, x0, x1);
                    const double wv = K[((co * g.cin + ci) * g.k + ky) * g.k + kx];
                    for (std::size_t oy = y0; oy < y1; ++oy) {
                        const double* xrow = X + (ci * g.h + (oy + dy)) * g.w + dx;
                        double* orow = O + (co * g.oh + oy) * g.ow;
                        for (std::size_t ox = x0; ox < x1; ++ox) orow[ox] += wv * xrow[ox];
                    }
                }
            }
        }
    }
    return out;
}

Tensor conv2d_input_grad(const Tensor& upstream, const Tensor& kernels, const Shape& input_shape,
                         Padding padding) {
    const ConvGeometry g = conv_geometry(input_shape, kernels.shape(), padding);
    Tensor dx(input_shape);
    const double* U = upstream.data();
    const double* K = kernels.data();
    double* DX = dx.data();
    for (std::size_t co = 0; co < g.cout; ++co) {
        for (std::size_t ci = 0; ci < g.cin; ++ci) {
            for (std::size_t ky = 0; ky < g.k; ++ky) {
                const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - g.pad;
                std::size_t y0, y1;
                valid_range(dy, g.h, g.oh, y0, y1);
                for (std::size_t kx = 0; kx < g.k; ++kx) {
                    const std::ptrdiff_t dxo = static_cast<std::ptrdiff_t>(kx) - g.pad;
                    std::size_t x0, x1;
                    valid_range(dxo, g.w, g.ow, x0, x1);
                    const double wv = K[((co * g.cin + ci) * g.k + ky) * g.k + kx];
                    for (std::size_t oy = y0; oy < y1; ++oy) {
                        double* drow = DX + (ci * g.h + (oy + dy)) * g.w + dxo;
                        const double* urow = U + (co * g.oh + oy) * g.ow;
                        for (std::size_t ox = x0; ox < x1; ++ox) drow[ox] += wv * urow[ox];
                    }
                }
            }
        }
    }
    return dx;
}

Tensor conv2d_kernel_grad(const Tensor& upstream, const Tensor& x, const Shape& kernel_shape, Padding padding) {
    const ConvGeometry g = conv_geometry(x.shape(), kernel_shape, padding);
    Tensor dk(kernel_shape);
    const double* U = upstream.data();
    const double* X = x.data();
    for (std::size_t co = 0; co < g.cout; ++co) {
        for (std::size_t ci = 0; ci < g.cin; ++ci) {
            for (std::size_t ky = 0; ky < g.k; ++ky) {
                const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - g.pad;
                std::size_t y0, y1;
                valid_range(dy, g.h, g.oh, y0, y1);
                for (std::size_t kx = 0; kx < g.k; ++kx) {
                    const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - g.pad;
                    std::size_t x0, x1;
                    valid_range(dx, g.w, g.ow, x0, x1);
                    double s = 0.0;
                    for (std::size_t oy = y0; oy < y1; ++oy) {
                        const double* xrow = X + (ci * g.h + (oy + dy)) * g.w + dx;
                        const double* urow = U + (co * g.oh + oy) * g.ow;
                        for (std::size_t ox = x0; ox < x1; ++ox) s += urow[ox] * xrow[ox];
                    }
                    dk[((co * g.cin + ci) * g.k + ky) * g.k + kx] = s;
                }
            }
        }
    }
    return dk;
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor avgpool2(const Tensor& x) {
    require_image(x, "avgpool2");
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (h % 2 != 0 || w % 2 != 0) {
        throw DimensionError("avgpool2: spatial dimensions must be even, got " + shape_str(x.shape()));
    }
    Tensor out({c, h / 2, w / 2});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < h / 2; ++i) {
            for (std::size_t j = 0; j < w / 2; ++j) {
                out.at(ch, i, j) = 0.25 * (x.at(ch, 2 * i, 2 * j) + x.at(ch, 2 * i, 2 * j + 1) +
                                           x.at(ch, 2 * i + 1, 2 * j) + x.at(ch, 2 * i + 1, 2 * j + 1));
            }
        }
    }
    return out;
}

std::vector<double> softmax(std::span<const double> logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}

}  // namespace kernels

double softmax_cross_entropy(std::span<const double> logits, std::size_t label) {
    if (logits.empty()) throw DimensionError("softmax_cross_entropy: empty logits");
    if (label >= logits.size()) {
        throw IndexError("softmax_cross_entropy: label " + std::to_string(label) + " out of range for " +
                         std::to_string(logits.size()) + " classes");
    }
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double v : logits) z += std::exp(v - m);
    const double loss = m + std::log(z) - logits[label];
    // Rounding can push a saturated loss a hair below zero.
    return loss > 0.0 ? loss : 0.0;
}

// ---------------------------------------------------------------------------
// Differentiable ops

namespace ad {

Var matmul(Tape& tape, Var a, Var b) {
    Tensor out = kernels::matmul(tape.value(a), tape.value(b));
    return tape.record(std::move(out), {a.id, b.id}, [a, b](Tape& t, const Tensor& up) {
        if (t.wants_grad(a.id)) t.accumulate(a.id, kernels::matmul_transpose_b(up, t.value(b)));
        if (t.wants_grad(b.id)) t.accumulate(b.id, kernels::matmul_transpose_a(t.value(a), up));
    });
}

Var add(Tape& tape, Var a, Var b) {
    Tensor out = tape.value(a) + tape.value(b);
    return tape.record(std::move(out), {a.id, b.id}, [a, b](Tape& t, const Tensor& up) {
        t.accumulate(a.id, up);
        t.accumulate(b.id, up);
    });
}

Var add_bias(Tape& tape, Var x, Var bias) {
    const Tensor& xv = tape.value(x);
    const Tensor& bv = tape.value(bias);
    if (xv.rank() != 2 || bv.size() != xv.dim(1)) {
        throw DimensionError("add_bias: " + shape_str(xv.shape()) + " vs bias " + shape_str(bv.shape()));
    }
    Tensor out = xv;
    const std::size_t m = xv.dim(0), n = xv.dim(1);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
    return tape.record(std::move(out), {x.id, bias.id}, [x, bias, m, n](Tape& t, const Tensor& up) {
        t.accumulate(x.id, up);
        if (t.wants_grad(bias.id)) {
            Tensor gb(t.value(bias).shape());
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gb[j] += up[i * n + j];
            t.accumulate(bias.id, std::move(gb));
        }
    });
}

Var add_channel_bias(Tape& tape, Var x, Var bias) {
    const Tensor& xv = tape.value(x);
    const Tensor& bv = tape.value(bias);
    if (xv.rank() != 3 || bv.size() != xv.dim(0)) {
        throw DimensionError("add_channel_bias: " + shape_str(xv.shape()) + " vs bias " + shape_str(bv.shape()));
    }
    Tensor out = xv;
    const std::size_t c = xv.dim(0), plane = xv.dim(1) * xv.dim(2);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < plane; ++i) out[ch * plane + i] += bv[ch];
    return tape.record(std::move(out), {x.id, bias.id}, [x, bias, c, plane](Tape& t, const Tensor& up) {
        t.accumulate(x.id, up);
        if (t.wants_grad(bias.id)) {
            Tensor gb(t.value(bias).shape());
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t i = 0; i < plane; ++i) gb[ch] += up[ch * plane + i];
            t.accumulate(bias.id, std::move(gb));
        }
    });
}

Var scale(Tape& tape, Var x, double k) {
    Tensor out = tape.value(x) * k;
    return tape.record(std::move(out), {x.id}, [x, k](Tape& t, const Tensor& up) { t.accumulate(x.id, up * k); });
}

Var relu(Tape& tape, Var x) {
    Tensor out = kernels::relu(tape.value(x));
    return tape.record(std::move(out), {x.id}, [x](Tape& t, const Tensor& up) {
        const Tensor& xv = t.value(x);
        Tensor g = up;
        // Subgradient at exactly zero is zero.
        for (std::size_t i = 0; i < g.size(); ++i)
            if (!(xv[i] > 0.0)) g[i] = 0.0;
        t.accumulate(x.id, std::move(g));
    });
}

Var avgpool2(Tape& tape, Var x) {
    Tensor out = kernels::avgpool2(tape.value(x));
    return tape.record(std::move(out), {x.id}, [x](Tape& t, const Tensor& up) {
        const Shape& s = t.value(x).shape();
        Tensor g(s);
        for (std::size_t ch = 0; ch < s[0]; ++ch) {
            for (std::size_t i = 0; i < s[1]; ++i) {
                for (std::size_t j = 0; j < s[2]; ++j) g.at(ch, i, j) = 0.25 * up.at(ch, i / 2, j / 2);
            }
        }
        t.accumulate(x.id, std::move(g));
    });
}

Var conv2d(Tape& tape, Var x, Var k, Padding padding) {
    Tensor out = kernels::conv2d(tape.value(x), tape.value(k), padding);
    return tape.record(std::move(out), {x.id, k.id}, [x, k, padding](Tape& t, const Tensor& up) {
        const Tensor& xv = t.value(x);
        const Tensor& kv = t.value(k);
        if (t.wants_grad(x.id)) t.accumulate(x.id, kernels::conv2d_input_grad(up, kv, xv.shape(), padding));
        if (t.wants_grad(k.id)) t.accumulate(k.id, kernels::conv2d_kernel_grad(up, xv, kv.shape(), padding));
    });
}

Var reshape(Tape& tape, Var x, Shape shape) {
    Tensor out = tape.value(x).reshaped(std::move(shape));
    return tape.record(std::move(out), {x.id}, [x](Tape& t, const Tensor& up) {
        t.accumulate(x.id, up.reshaped(t.value(x).shape()));
    });
}

Var mean(Tape& tape, std::span<const Var> xs) {
    if (xs.empty()) throw ConfigError("mean: no inputs");
    Tensor out = tape.value(xs[0]);
    std::vector<std::size_t> ids{xs[0].id};
    for (std::size_t i = 1; i < xs.size(); ++i) {
        out += tape.value(xs[i]);
        ids.push_back(xs[i].id);
    }
    const double k = 1.0 / static_cast<double>(xs.size());
    if (xs.size() > 1) out *= k;
    return tape.record(std::move(out), ids, [ids, k](Tape& t, const Tensor& up) {
        if (ids.size() == 1) {
            t.accumulate(ids[0], up);
            return;
        }
        Tensor g = up * k;
        for (std::size_t id : ids) t.accumulate(id, g);
    });
}

Var weighted_sum(Tape& tape, Var x, const Tensor& weights) {
    const Tensor& xv = tape.value(x);
    if (xv.size() != weights.size()) {
        throw DimensionError("weighted_sum: " + shape_str(xv.shape()) + " vs " + shape_str(weights.shape()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) s += weights[i] * xv[i];
    return tape.record(Tensor({1}, s), {x.id}, [x, weights](Tape& t, const Tensor& up) {
        t.accumulate(x.id, weights.reshaped(t.value(x).shape()) * up[0]);
    });
}

Var squared_error(Tape& tape, Var x, double target) {
    const Tensor& xv = tape.value(x);
    if (xv.size() != 1) throw DimensionError("squared_error: expected one element, got " + shape_str(xv.shape()));
    const double r = xv[0] - target;
    return tape.record(Tensor({1}, r * r), {x.id}, [x, r](Tape& t, const Tensor& up) {
        t.accumulate(x.id, Tensor(t.value(x).shape(), 2.0 * r * up[0]));
    });
}

Var softmax_cross_entropy(Tape& tape, Var logits, std::size_t label) {
    const Tensor& lv = tape.value(logits);
    const double loss = gatk::softmax_cross_entropy(lv.values(), label);
    return tape.record(Tensor({1}, loss), {logits.id}, [logits, label](Tape& t, const Tensor& up) {
        const Tensor& l = t.value(logits);
        std::vector<double> p = kernels::softmax(l.values());
        p[label] -= 1.0;
        for (double& v : p) v *= up[0];
        t.accumulate(logits.id, Tensor(l.shape(), std::move(p)));
    });
}

}  // namespace ad

Tensor reverse_gradient(const std::function<Var(Tape&, Var)>& fn, const Tensor& x) {
    Tape tape;
    Var in = tape.input(x);
    Var out = fn(tape, in);
    tape.backward(out);
    return tape.grad(in);
}

Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
    if (!(h > 0.0)) throw ConfigError("finite_diff_gradient: step must be positive");
    Tensor g(x.shape());
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double fp = f(probe);
        probe[i] = orig - h;
        const double fm = f(probe);
        probe[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

}  // namespace gatk
