#include "gatk/update_rules.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gatk/error.hpp"

namespace gatk {

UpdateRule UpdateRule::rescale(double c) {
    if (!(c > 0.0)) throw ConfigError("rescale factor c must be positive");
    return UpdateRule{RescaleParams{c}};
}

double UpdateRule::rescale_factor() const {
    if (const auto* p = std::get_if<RescaleParams>(&variant)) return p->c;
    return 0.0;
}

Tensor UpdateRule::apply(const Tensor& g) const {
    if (const auto* p = std::get_if<RescaleParams>(&variant)) return rescale_update(g, p->c);
    return sign_update(g);
}

Tensor sign_update(const Tensor& g) {
    Tensor out(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
    return out;
}

Tensor rescale_update(const Tensor& g, double c) {
    if (!(c > 0.0)) throw ConfigError("rescale factor c must be positive");
    Tensor out(g.shape());

    std::size_t count = 0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    double sum = 0.0;
    std::vector<double> logs(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (g[i] == 0.0) continue;
        logs[i] = std::log2(std::abs(g[i]));
        lo = std::min(lo, logs[i]);
        hi = std::max(hi, logs[i]);
        sum += logs[i];
        ++count;
    }
    if (count == 0) return out;

    const double mean = sum / static_cast<double>(count);
    double var = 0.0;
    if (hi > lo) {
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (g[i] == 0.0) continue;
            const double d = logs[i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(count);
    }
    const double stddev = std::sqrt(var);

    for (std::size_t i = 0; i < g.size(); ++i) {
        if (g[i] == 0.0) continue;
        const double z = stddev > 0.0 ? (logs[i] - mean) / stddev : 0.0;
        const double s = 1.0 / (1.0 + std::exp(-z));
        out[i] = (g[i] > 0.0 ? c : -c) * s;
    }
    return out;
}

Tensor l1_normalize(const Tensor& g, bool& degenerate) {
    const double norm = g.abs_sum();
    degenerate = !(norm > 0.0);
    if (degenerate) return g;
    Tensor out(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i] / norm;
    return out;
}

Tensor l1_normalize(const Tensor& g) {
    bool degenerate = false;
    return l1_normalize(g, degenerate);
}

Tensor clip_to_budget(const Tensor& x_adv, const Tensor& x_orig, double epsilon) {
    require_same_shape(x_adv, x_orig, "clip_to_budget");
    if (epsilon < 0.0) throw ConfigError("clip_to_budget: epsilon must be non-negative");
    Tensor out(x_adv.shape());
    for (std::size_t i = 0; i < x_adv.size(); ++i) {
        const double lo = std::max(0.0, x_orig[i] - epsilon);
        const double hi = std::min(1.0, x_orig[i] + epsilon);
        out[i] = std::min(hi, std::max(lo, x_adv[i]));
    }
    return out;
}

}  // namespace gatk
