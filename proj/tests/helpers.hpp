#pragma once

#include "cachediff/rng.hpp"
#include "cachediff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace testing {

inline cachediff::Tensor4 random_tensor(cachediff::Shape4 shape, std::uint64_t seed, std::uint64_t stream = 7) {
    return cachediff::CounterRng(seed).normal_tensor(shape, stream);
}

inline cachediff::Tensor4 scalar_tensor(float v) { return cachediff::Tensor4({1, 1, 1, 1}, v); }

// max |a - b| / max(max |b|, tiny)
inline double rel_error(const cachediff::Tensor4& a, const cachediff::Tensor4& b) {
    double diff = 0.0;
    double scale = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(static_cast<double>(a[i]) - b[i]));
        scale = std::max(scale, std::abs(static_cast<double>(b[i])));
    }
    return diff / std::max(scale, 1e-30);
}

inline double max_abs_diff(const cachediff::Tensor4& a, const cachediff::Tensor4& b) {
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(static_cast<double>(a[i]) - b[i]));
    return diff;
}

}  // namespace testing

namespace testing {

// Seeded values uniform in [-0.5, 0.5).
inline cachediff::Tensor4 uniform_tensor(cachediff::Shape4 shape, std::uint64_t seed, std::uint64_t stream = 11) {
    cachediff::CounterRng rng(seed);
    cachediff::Tensor4 out(shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(rng.uniform(stream, i) - 0.5);
    return out;
}

}  // namespace testing
