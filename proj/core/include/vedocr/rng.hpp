// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

namespace vedocr {

/// Deterministic 64-bit generator (splitmix64). Every seeded behaviour in the
/// library draws from this class rather than <random>, so identical seeds give
/// identical byte-level results on every platform and standard library.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n). n must be positive.
    uint64_t next_below(uint64_t n) {
        // Lemire's multiply-shift; the tiny modulo bias is irrelevant here and
        // the mapping is exactly reproducible.
        return static_cast<uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    /// Box-Muller normal draw (pairs cached).
    double next_normal(double mean, double stddev);

    /// In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// k distinct values from {0, ..., n-1}, order randomized.
    std::vector<int64_t> sample_without_replacement(int64_t n, int64_t k);

    /// Derives an independent stream seed; used to hand each sample/step its
    /// own reproducible generator.
    static uint64_t derive(uint64_t seed, uint64_t stream);

private:
    uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace vedocr
