#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace mta {

// Deterministic PRNG (xoshiro256++ seeded via splitmix64). The standard
// library distributions are implementation-defined, so everything that has
// to be byte-reproducible across runs and platforms draws from this.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Independent stream seed for a named pipeline stage or per-item stream.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t s = seed ^ (0xA0761D6478BD642FULL * (stream + 1));
    return splitmix64(s);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : s_) word = splitmix64(sm);
    }

    std::uint64_t u64() {
        const std::uint64_t result = rotl_(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl_(s_[3], 45);
        return result;
    }

    // [0, 1)
    double uniform() { return static_cast<double>(u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // (0, 1]; safe as a log argument
    double uniform_pos() { return 1.0 - uniform(); }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u = uniform_pos();
        const double v = uniform();
        const double r = std::sqrt(-2.0 * std::log(u));
        spare_ = r * std::sin(2.0 * M_PI * v);
        has_spare_ = true;
        return r * std::cos(2.0 * M_PI * v);
    }

    double exponential(double mean) { return -mean * std::log(uniform_pos()); }

    // k >= 0 with P(k) = p (1-p)^k; mean (1-p)/p
    std::uint64_t geometric(double p) {
        if (p >= 1.0) return 0;
        return static_cast<std::uint64_t>(std::floor(std::log(uniform_pos()) / std::log1p(-p)));
    }

    bool bernoulli(double p) { return uniform() < p; }

    std::size_t index(std::size_t n) { return static_cast<std::size_t>(u64() % n); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static std::uint64_t rotl_(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t s_[4]{};
    double spare_{0.0};
    bool has_spare_{false};
};

} // namespace mta
