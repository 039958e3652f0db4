#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace xfuse {

namespace detail {

inline uint64_t mix64(uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
}

inline uint64_t fnv1a64(const void* bytes, size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(bytes);
    uint64_t h = 14695981039346656037ull;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline uint64_t fnv1a64(std::string_view s) {
    return fnv1a64(s.data(), s.size());
}

} // namespace detail

// Counter-based generator: draw i is a pure function of (key, i), so streams
// can be derived per sample / per parameter and replayed independently of
// call order elsewhere. No global state anywhere.
class Rng {
  public:
    explicit Rng(uint64_t seed) : key_(detail::mix64(seed + 0x9E3779B97F4A7C15ull)), counter_(0) {}

    uint64_t next_u64() {
        ++counter_;
        return detail::mix64(key_ + counter_ * 0x9E3779B97F4A7C15ull);
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Multiply-shift; bias is negligible at desk scale.
    uint64_t below(uint64_t n) {
        return static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller, cosine branch. Always consumes exactly two draws.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Independent child stream named by a string (parameter name, stage, ...).
    Rng derive(std::string_view name) const {
        Rng child(0);
        child.key_ = detail::mix64(key_ ^ detail::fnv1a64(name));
        child.counter_ = 0;
        return child;
    }

    // Independent child stream for an index (sample id, epoch, ...).
    Rng derive(uint64_t index) const {
        Rng child(0);
        child.key_ = detail::mix64(key_ ^ detail::mix64(index + 0x632BE59BD9B4E019ull));
        child.counter_ = 0;
        return child;
    }

  private:
    uint64_t key_;
    uint64_t counter_;
};

} // namespace xfuse
