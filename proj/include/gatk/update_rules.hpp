#pragma once

#include <variant>

#include "gatk/tensor.hpp"

namespace gatk {

struct RescaleParams {
    double c = 2.0;
};

struct SignRule {};

/// Which elementwise map turns an accumulated gradient into a step direction.
struct UpdateRule {
    std::variant<SignRule, RescaleParams> variant = SignRule{};

    static UpdateRule sign() { return UpdateRule{SignRule{}}; }
    static UpdateRule rescale(double c = 2.0);

    bool is_sign() const noexcept { return std::holds_alternative<SignRule>(variant); }
    double rescale_factor() const;

    Tensor apply(const Tensor& g) const;
};

/// Elementwise strict sign in {-1, 0, +1}.
Tensor sign_update(const Tensor& g);

/// Sign-preserving rescaling of a gradient into the open interval (0, c) by
/// magnitude:
///
///   rescale(g)_i = c * sign(g_i) * logistic((log2|g_i| - mean) / std)
///
/// mean and std are the population statistics of log2|g_i| taken over the
/// nonzero entries of the whole tensor. Zero entries map to zero. When every
/// nonzero magnitude is equal the normalised value is taken as zero, giving
/// (c / 2) * sign(g). Throws ConfigError for c <= 0.
Tensor rescale_update(const Tensor& g, double c);

/// g / ||g||_1. A zero tensor is returned unchanged and `degenerate` is set.
Tensor l1_normalize(const Tensor& g, bool& degenerate);
Tensor l1_normalize(const Tensor& g);

/// Projects onto [x_orig - eps, x_orig + eps] intersected with [0, 1].
Tensor clip_to_budget(const Tensor& x_adv, const Tensor& x_orig, double epsilon);

}  // namespace gatk
