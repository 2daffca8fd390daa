#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

#include "symmflow/core/errors.hpp"

namespace symmflow {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

// Derives the seed of a named substream from a master seed. All randomness in
// a run fans out from one master seed through these, so results do not depend
// on batching layout or evaluation order.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stream,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t h = detail::splitmix64(master ^ detail::fnv1a64(stream));
    h = detail::splitmix64(h ^ detail::splitmix64(a ^ 0xa5a5a5a5a5a5a5a5ULL));
    h = detail::splitmix64(h ^ detail::splitmix64(b ^ 0x5a5a5a5a5a5a5a5aULL));
    return h;
}

// mt19937_64 with hand-rolled output transforms. std::*_distribution output is
// implementation defined, which would tie reproducibility to the stdlib; the
// transforms below pin the byte stream to this code alone.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed), seed_(seed) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t next_u64() { return gen_(); }

    // [0, 1), 53-bit resolution
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller with one cached draw
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // [0, n) by rejection, bias free
    std::uint64_t uniform_index(std::uint64_t n) {
        if (n == 0) throw InvalidArgument("uniform_index: n must be positive");
        std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    template <typename It>
    void shuffle(It first, It last) {
        auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            std::uint64_t j = uniform_index(i);
            std::swap(first[i - 1], first[j]);
        }
    }

    template <typename Scalar>
    void fill_normal(Scalar* data, long n) {
        for (long i = 0; i < n; ++i) data[i] = static_cast<Scalar>(normal());
    }

    template <typename Scalar>
    void fill_uniform(Scalar* data, long n, double lo, double hi) {
        for (long i = 0; i < n; ++i) data[i] = static_cast<Scalar>(uniform(lo, hi));
    }

private:
    std::mt19937_64 gen_;
    std::uint64_t seed_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace symmflow
