#include <doctest.h>

#include <cmath>
#include <random>

#include "gatk/error.hpp"
#include "gatk/rng.hpp"
#include "gatk/sampling.hpp"
#include "test_util.hpp"

using namespace gatk;
using testutil::bit_equal;

namespace {

// grad_fn(x) = A x + b on a flat vector, A fixed.
struct Affine {
    Tensor a, b;
    Tensor operator()(const Tensor& x) const {
        Tensor out(x.shape());
        const std::size_t n = x.size();
        for (std::size_t i = 0; i < n; ++i) {
            double s = b[i];
            for (std::size_t j = 0; j < n; ++j) s += a[i * n + j] * x[j];
            out[i] = s;
        }
        return out;
    }
};

Affine make_affine(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return {testutil::random_tensor({n * n}, rng), testutil::random_tensor({n}, rng)};
}

// Uses the stream so that reuse of a sub-stream would be visible.
GradFn noisy_nonlinear() {
    return [](const Tensor& x, RngStream& rng) {
        Tensor g(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) g[i] = std::sin(3.0 * x[i]) + 0.01 * rng.uniform(-1.0, 1.0);
        return g;
    };
}

}  // namespace

TEST_CASE("rng streams are addressed by coordinates") {
    RngStream a(1, 2, 3), b(1, 2, 3), c(1, 2, 4), d(1, 3, 3);
    CHECK(a.key() == b.key());
    CHECK(a.key() != c.key());
    CHECK(a.key() != d.key());
    for (int i = 0; i < 10; ++i) CHECK(a.uniform(0, 1) == b.uniform(0, 1));
    CHECK(RngStream(5).child(0).key() != RngStream(5).child(1).key());
    CHECK(RngStream(5).child(7).key() == RngStream(5).child(7).key());
    RngStream z(9);
    CHECK(z.uniform(0.3, 0.3) == 0.3);
    CHECK(z.normal(1.5, 0.0) == 1.5);
}

TEST_CASE("samplers reduce to the base gradient") {
    std::mt19937_64 gen(41);
    const Tensor x = testutil::random_tensor({3, 4, 4}, gen, 0.0, 1.0);
    const GradFn f = noisy_nonlinear();
    const RngStream rng(7, 2, 1);
    const Tensor base = sampled_gradient(SamplerConfig::none(), f, x, 0.3, rng);

    CHECK(bit_equal(dfs_gradient(f, x, 0, 1.5, 0.3, rng), base));
    CHECK(bit_equal(gaussian_gradient(f, x, 0, 0.2, rng), base));
    CHECK(bit_equal(sampled_gradient(SamplerConfig::depth_first(0, 1.5), f, x, 0.3, rng), base));
    CHECK(bit_equal(sampled_gradient(SamplerConfig::gaussian(0, 1.5), f, x, 0.3, rng), base));

    // Deterministic grad_fn: zero-range noise leaves every sample at x.
    const GradFn det = [](const Tensor& p, RngStream&) {
        Tensor g(p.shape());
        for (std::size_t i = 0; i < p.size(); ++i) g[i] = std::cos(p[i]) * 0.37;
        return g;
    };
    const Tensor det_base = sampled_gradient(SamplerConfig::none(), det, x, 0.3, rng);
    for (std::size_t n : {1u, 5u, 12u}) {
        CHECK(bit_equal(dfs_gradient(det, x, n, 0.0, 0.3, rng), det_base));
        CHECK(bit_equal(gaussian_gradient(det, x, n, 0.0, rng), det_base));
    }
}

TEST_CASE("dfs chain is centred on the previous sample") {
    const GradFn f = noisy_nonlinear();
    std::mt19937_64 gen(43);
    const Tensor x = testutil::random_tensor({1, 6, 6}, gen, 0.0, 1.0);
    const double beta = 1.5, eps = 0.1;
    std::size_t checked = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        std::vector<Tensor> chain;
        dfs_gradient(f, x, 12, beta, eps, RngStream(seed), &chain);
        REQUIRE(chain.size() == 13);
        CHECK(bit_equal(chain[0], x));
        CHECK(chain_deviation_bound_check(chain, beta, eps));
        for (std::size_t i = 1; i < chain.size(); ++i) CHECK(linf_distance(chain[i], chain[i - 1]) <= beta * eps);
        ++checked;
    }
    CHECK(checked == 1000);

    // The walk drifts: on average the last sample is farther from x than the first step.
    double first = 0.0, last = 0.0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        std::vector<Tensor> chain;
        dfs_gradient(f, x, 12, beta, eps, RngStream(seed), &chain);
        for (std::size_t i = 0; i < x.size(); ++i) {
            first += std::fabs(chain[1][i] - x[i]);
            last += std::fabs(chain[12][i] - x[i]);
        }
    }
    CHECK(last > 2.0 * first);
}

TEST_CASE("chain bound check rejects a fabricated violation") {
    const Tensor x({4}, 0.5);
    std::vector<Tensor> chain{x, x, x, x};
    chain[1][0] += 0.1;
    chain[2][0] += 0.2;
    CHECK(chain_deviation_bound_check(chain, 1.0, 0.1));
    chain[3][0] += 0.45;
    CHECK_FALSE(chain_deviation_bound_check(chain, 1.0, 0.1));
}

TEST_CASE("monte carlo mean of dfs on an affine gradient") {
    const std::size_t n = 4;
    const Affine aff = make_affine(n, 47);
    const GradFn f = [&](const Tensor& p, RngStream&) { return aff(p); };
    const Tensor x = Tensor::from({0.2, 0.4, 0.6, 0.8});
    const Tensor want = aff(x);
    const int runs = 10000;
    std::vector<double> sum(n, 0.0), sumsq(n, 0.0);
    for (int r = 0; r < runs; ++r) {
        const Tensor g = dfs_gradient(f, x, 12, 1.5, 0.3, RngStream(1000 + r));
        for (std::size_t i = 0; i < n; ++i) {
            sum[i] += g[i];
            sumsq[i] += g[i] * g[i];
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double mean = sum[i] / runs;
        const double var = sumsq[i] / runs - mean * mean;
        const double se = std::sqrt(var / runs);
        CHECK(std::fabs(mean - want[i]) < 3.0 * se);
    }
}

TEST_CASE("monte carlo mean of the gaussian sampler on an affine gradient") {
    const std::size_t n = 3;
    const Affine aff = make_affine(n, 53);
    const GradFn f = [&](const Tensor& p, RngStream&) { return aff(p); };
    const Tensor x = Tensor::from({0.1, 0.5, 0.9});
    const Tensor want = aff(x);
    const int runs = 10000;
    std::vector<double> sum(n, 0.0), sumsq(n, 0.0);
    for (int r = 0; r < runs; ++r) {
        const Tensor g = gaussian_gradient(f, x, 12, 0.26, RngStream(5000 + r));
        for (std::size_t i = 0; i < n; ++i) {
            sum[i] += g[i];
            sumsq[i] += g[i] * g[i];
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double mean = sum[i] / runs;
        const double se = std::sqrt((sumsq[i] / runs - mean * mean) / runs);
        CHECK(std::fabs(mean - want[i]) < 3.0 * se);
    }
}

TEST_CASE("sampler determinism and configuration") {
    std::mt19937_64 gen(59);
    const Tensor x = testutil::random_tensor({2, 5, 5}, gen, 0.0, 1.0);
    const GradFn f = noisy_nonlinear();
    for (auto cfg : {SamplerConfig::depth_first(), SamplerConfig::gaussian()}) {
        const Tensor a = sampled_gradient(cfg, f, x, 0.2, RngStream(3, 4, 5));
        const Tensor b = sampled_gradient(cfg, f, x, 0.2, RngStream(3, 4, 5));
        const Tensor c = sampled_gradient(cfg, f, x, 0.2, RngStream(3, 4, 6));
        CHECK(bit_equal(a, b));
        CHECK_FALSE(bit_equal(a, c));
    }
    CHECK(SamplerConfig::gaussian(12, 1.5).sigma_for(0.3) == doctest::Approx(1.5 * 0.3 / std::sqrt(3.0)));
    CHECK(SamplerConfig::gaussian(12, 1.5, 0.05).sigma_for(0.3) == 0.05);
    CHECK_THROWS_AS(SamplerConfig::depth_first(12, -1.0).validate(), ConfigError);
    CHECK_THROWS_AS(SamplerConfig::gaussian(12, 1.5, -0.1).validate(), ConfigError);
    SamplerConfig::depth_first(0, 0.0).validate();
}
