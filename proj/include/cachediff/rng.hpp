#pragma once

#include "cachediff/tensor.hpp"

#include <cstdint>

namespace cachediff {

// Counter-based generator: every draw is a pure function of
// (seed, stream, index), so the order in which branches consume noise
// cannot change the values they see.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t bits(std::uint64_t stream, std::uint64_t index) const;
    // Uniform in (0, 1).
    double uniform(std::uint64_t stream, std::uint64_t index) const;
    double normal(std::uint64_t stream, std::uint64_t index) const;

    // Fills a tensor with standard normal draws from one stream.
    Tensor4 normal_tensor(Shape4 shape, std::uint64_t stream) const;

private:
    std::uint64_t seed_;
};

// Well-known stream ids.
inline constexpr std::uint64_t kInitialNoiseStream = 0;
// Step s of an ancestral sampler draws from stream kStepNoiseStreamBase + s.
inline constexpr std::uint64_t kStepNoiseStreamBase = 1;

}  // namespace cachediff
