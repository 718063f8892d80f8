#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <random>
#include <vector>

#include "gatk/autograd.hpp"
#include "gatk/tensor.hpp"

namespace testutil {

using gatk::Shape;
using gatk::Tensor;

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
    return t;
}

// max_i |a_i - b_i| / max(|a_i|, |b_i|, 1e-8)
inline double max_rel_err(const Tensor& a, const Tensor& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::fabs(a[i]), std::fabs(b[i]), 1e-8});
        worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
    }
    return worst;
}

using MultiFn = std::function<gatk::Var(gatk::Tape&, const std::vector<gatk::Var>&)>;

// Reverse-mode vs central differences for every input of a scalar graph.
// Returns the worst elementwise relative error over all inputs.
inline double gradient_check(const MultiFn& fn, const std::vector<Tensor>& inputs, double h = 1e-5) {
    gatk::Tape tape;
    std::vector<gatk::Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.input(t));
    tape.backward(fn(tape, vars));
    double worst = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Tensor analytic = tape.grad(vars[k]);
        auto f = [&](const Tensor& xk) {
            gatk::Tape t2;
            std::vector<gatk::Var> v2;
            for (std::size_t j = 0; j < inputs.size(); ++j) v2.push_back(t2.constant(j == k ? xk : inputs[j]));
            return t2.value(fn(t2, v2))[0];
        };
        const Tensor numeric = gatk::finite_diff_gradient(f, inputs[k], h);
        worst = std::max(worst, max_rel_err(analytic, numeric));
    }
    return worst;
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::memcmp(&a.data()[i], &b.data()[i], sizeof(double)) != 0) return false;
    }
    return true;
}

}  // namespace testutil
