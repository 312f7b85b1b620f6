// SPDX-License-Identifier: Apache-2.0
#include "vedocr/rng.hpp"

#include <cmath>

#include "vedocr/error.hpp"

namespace vedocr {

double Rng::next_normal(double mean, double stddev) {
    if (has_spare_) {
        has_spare_ = false;
        return mean + stddev * spare_;
    }
    // Box-Muller on two unit draws; u is kept away from 0 for the log.
    const double u = 1.0 - next_unit();
    const double v = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u));
    const double a = 2.0 * 3.141592653589793 * v;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return mean + stddev * r * std::cos(a);
}

std::vector<int64_t> Rng::sample_without_replacement(int64_t n, int64_t k) {
    if (k < 0 || k > n) {
        throw ContractError("sample_without_replacement: k out of range");
    }
    std::vector<int64_t> pool(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
    // Partial Fisher-Yates: the first k slots end up with the sample.
    for (int64_t i = 0; i < k; ++i) {
        const int64_t j =
            i + static_cast<int64_t>(next_below(static_cast<uint64_t>(n - i)));
        std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
    }
    pool.resize(static_cast<size_t>(k));
    return pool;
}

uint64_t Rng::derive(uint64_t seed, uint64_t stream) {
    Rng mixer(seed ^ (stream * 0x9e3779b97f4a7c15ull + 0x7f4a7c15ull));
    return mixer.next_u64();
}

} // namespace vedocr
