// Copyright (c) 2026, The Distilltron Authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic RNG. All randomness in the project flows through this class so
// that runs are byte-reproducible from declared seeds. uniform() converts
// mt19937_64 output explicitly (53-bit mantissa) instead of relying on the
// implementation-defined std distributions, and stream() derives independent
// sub-generators from (seed, tag, a, b) without consuming state, so consumers
// can draw in any order (or be resumed mid-run) without perturbing each other.

#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace distilltron {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), eng_(mix(seed)) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; pairs cached for determinism and speed.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Unbiased integer in [0, n) by rejection.
    std::size_t uniform_index(std::size_t n) {
        if (n <= 1) return 0;
        std::uint64_t range = n;
        std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
        std::uint64_t v = eng_();
        while (v >= limit) v = eng_();
        return static_cast<std::size_t>(v % range);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derived generator for an independent purpose/step/member stream.
    Rng stream(std::string_view tag, std::uint64_t a = 0, std::uint64_t b = 0) const {
        std::uint64_t h = 0xcbf29ce484222325ull;
        auto eat = [&h](std::uint64_t v) {
            for (int i = 0; i < 8; ++i) {
                h ^= (v >> (8 * i)) & 0xff;
                h *= 0x100000001b3ull;
            }
        };
        eat(seed_);
        for (char c : tag) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ull;
        }
        eat(a);
        eat(b);
        return Rng(h);
    }

    std::uint64_t seed() const { return seed_; }

private:
    // splitmix64 step; decorrelates adjacent seeds before feeding mt19937_64.
    static std::uint64_t mix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    std::uint64_t seed_;
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace distilltron
