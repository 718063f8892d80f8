#include <doctest.h>

#include <cmath>
#include <random>

#include "gatk/error.hpp"
#include "gatk/update_rules.hpp"
#include "test_util.hpp"

using namespace gatk;

namespace {

// Independent scalar evaluation of the rescale formula.
std::vector<double> rescale_oracle(const std::vector<double>& g, double c) {
    std::vector<double> logs;
    for (double v : g)
        if (v != 0.0) logs.push_back(std::log2(std::fabs(v)));
    if (logs.empty()) return std::vector<double>(g.size(), 0.0);
    long double mean = 0, var = 0;
    for (double l : logs) mean += l;
    mean /= logs.size();
    for (double l : logs) var += (l - mean) * (l - mean);
    var /= logs.size();
    const long double sd = std::sqrt(var);
    std::vector<double> out;
    for (double v : g) {
        if (v == 0.0) {
            out.push_back(0.0);
            continue;
        }
        const long double z = sd > 0 ? (std::log2(std::fabs(v)) - mean) / sd : 0.0L;
        out.push_back(static_cast<double>(c * (v > 0 ? 1 : -1) / (1.0L + std::exp(-z))));
    }
    return out;
}

}  // namespace

TEST_CASE("sign update examples") {
    CHECK(sign_update(Tensor::from({0.8, 1e-8})) == Tensor::from({1, 1}));
    CHECK(sign_update(Tensor({4}, 0.0)) == Tensor({4}, 0.0));
    CHECK(sign_update(Tensor::from({-3, 0, 5})) == Tensor::from({-1, 0, 1}));
}

TEST_CASE("rescale update worked examples") {
    const Tensor a = rescale_update(Tensor::from({0.8, 1e-8}), 2.0);
    CHECK(std::fabs(a[0] - 1.4621) < 1e-3);
    CHECK(std::fabs(a[1] - 0.5379) < 1e-3);

    const Tensor b = rescale_update(Tensor::from({4, 1, 0.25}), 2.0);
    CHECK(std::fabs(b[0] - 1.5458) < 1e-3);
    CHECK(std::fabs(b[1] - 1.0) < 1e-3);
    CHECK(std::fabs(b[2] - 0.4542) < 1e-3);

    CHECK(rescale_update(Tensor::from({0.5, -0.5}), 2.0) == Tensor::from({1, -1}));
    CHECK(rescale_update(Tensor({3}, 0.0), 2.0) == Tensor({3}, 0.0));
    CHECK_THROWS_AS(UpdateRule::rescale(0.0), ConfigError);
    CHECK_THROWS_AS(rescale_update(Tensor::from({1.0}), -1.0), ConfigError);
}

TEST_CASE("rescale matches an independent scalar oracle") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> mag(-12, 3);
    std::bernoulli_distribution zero(0.1), neg(0.5);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> g(1 + trial % 40);
        for (double& v : g) v = zero(rng) ? 0.0 : (neg(rng) ? -1 : 1) * std::exp2(mag(rng));
        const auto want = rescale_oracle(g, 2.0);
        const Tensor got = rescale_update(Tensor({g.size()}, g), 2.0);
        for (std::size_t i = 0; i < g.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("rescale properties") {
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int trial = 0; trial < 300; ++trial) {
        const double c = 0.5 + 3.0 * std::fabs(u(rng));
        Tensor g({64});
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = (i % 9 == 0) ? 0.0 : u(rng) * std::exp2(10 * u(rng));
        const Tensor r = rescale_update(g, c);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (g[i] == 0.0) {
                CHECK(r[i] == 0.0);
                continue;
            }
            CHECK((r[i] > 0) == (g[i] > 0));
            CHECK(std::fabs(r[i]) > 0.0);
            CHECK(std::fabs(r[i]) < c);
        }
        for (std::size_t i = 0; i < g.size(); ++i)
            for (std::size_t j = 0; j < g.size(); ++j)
                if (std::fabs(g[i]) > std::fabs(g[j]) && g[j] != 0.0) CHECK(std::fabs(r[i]) > std::fabs(r[j]));

        const double k = std::exp2(8 * u(rng));
        const Tensor rk = rescale_update(g * k, c);
        for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::fabs(rk[i] - r[i]) <= 1e-12);
    }
}

TEST_CASE("l1 normalisation") {
    CHECK(l1_normalize(Tensor::from({3, -1})) == Tensor::from({0.75, -0.25}));
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        const Tensor g = testutil::random_tensor({50}, rng, -1e3, 1e3);
        CHECK(std::fabs(l1_normalize(g).abs_sum() - 1.0) < 1e-12);
    }
    bool degenerate = false;
    CHECK(l1_normalize(Tensor({4}, 0.0), degenerate) == Tensor({4}, 0.0));
    CHECK(degenerate);
    l1_normalize(Tensor::from({1.0}), degenerate);
    CHECK_FALSE(degenerate);
}

TEST_CASE("clip to budget") {
    const Tensor x = Tensor::from({0.2, 0.5});
    CHECK(clip_to_budget(x, x, 0.1) == x);
    CHECK(clip_to_budget(Tensor::from({0.9}), Tensor::from({0.5}), 0.1)[0] == doctest::Approx(0.6));
    CHECK(clip_to_budget(Tensor::from({-0.5}), Tensor::from({0.02}), 0.1)[0] == 0.0);
    CHECK_THROWS_AS(clip_to_budget(x, x, -0.1), ConfigError);
    CHECK_THROWS_AS(clip_to_budget(Tensor::from({0.1}), x, 0.1), DimensionError);

    std::mt19937_64 rng(37);
    for (int trial = 0; trial < 200; ++trial) {
        const Tensor orig = testutil::random_tensor({30}, rng, 0.0, 1.0);
        const Tensor adv = testutil::random_tensor({30}, rng, -0.5, 1.5);
        const double eps = 0.3 * std::fabs(testutil::random_tensor({1}, rng)[0]);
        const Tensor once = clip_to_budget(adv, orig, eps);
        CHECK(clip_to_budget(once, orig, eps) == once);
        for (std::size_t i = 0; i < once.size(); ++i) {
            CHECK(once[i] >= 0.0);
            CHECK(once[i] <= 1.0);
            CHECK(std::fabs(once[i] - orig[i]) <= eps + 1e-15);
        }
    }
}

TEST_CASE("update rule dispatch") {
    const Tensor g = Tensor::from({0.8, 1e-8});
    CHECK(UpdateRule::sign().apply(g) == sign_update(g));
    CHECK(UpdateRule::rescale(2.0).apply(g) == rescale_update(g, 2.0));
    CHECK(UpdateRule::rescale(3.0).rescale_factor() == 3.0);
}
