#include "cachediff/predictor.hpp"

#include <numeric>

namespace cachediff {

std::uint64_t MacBreakdown::hookable() const {
    return std::accumulate(layers.begin(), layers.end(), std::uint64_t{0});
}

std::uint64_t MacBreakdown::full() const { return base + hookable(); }

}  // namespace cachediff
