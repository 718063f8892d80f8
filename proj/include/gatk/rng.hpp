#pragma once

#include <cstdint>
#include <random>

namespace gatk {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Deterministic random stream addressed by (run seed, image index,
/// iteration index). The draw sequence depends only on these coordinates,
/// never on which thread consumes it. `child(tag)` derives an independent
/// sub-stream, e.g. one per sampled point.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t image = 0, std::uint64_t iteration = 0)
        : key_(splitmix64(splitmix64(splitmix64(seed) ^ image) ^ (iteration * 0x632be59bd9b4e019ULL))),
          engine_(key_) {}

    RngStream child(std::uint64_t tag) const {
        return RngStream(ChildTag{}, splitmix64(key_ ^ splitmix64(tag ^ 0xd1b54a32d192ed03ULL)));
    }

    std::uint64_t key() const noexcept { return key_; }
    std::mt19937_64& engine() noexcept { return engine_; }

    double uniform(double lo, double hi) {
        if (!(hi > lo)) return lo;
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    double normal(double mean, double stddev) {
        if (!(stddev > 0.0)) return mean;
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }
    std::size_t uniform_index(std::size_t lo, std::size_t hi_inclusive) {
        return std::uniform_int_distribution<std::size_t>(lo, hi_inclusive)(engine_);
    }
    bool bernoulli(double p) {
        if (p <= 0.0) return false;
        if (p >= 1.0) return true;
        return uniform(0.0, 1.0) < p;
    }

private:
    struct ChildTag {};
    RngStream(ChildTag, std::uint64_t key) : key_(key), engine_(key) {}

    std::uint64_t key_;
    std::mt19937_64 engine_;
};

}  // namespace gatk
