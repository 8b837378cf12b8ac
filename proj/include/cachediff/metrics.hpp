#pragma once

#include "cachediff/tensor.hpp"

#include <limits>

namespace cachediff {

// Returned by psnr() when the inputs are identical.
inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

double mse(const Tensor4& a, const Tensor4& b);

// 10 log10(peak^2 / mse) in dB, or kInfinitePsnr when mse == 0.
double psnr(const Tensor4& a, const Tensor4& b, double peak);

// Mean SSIM over every (frame, channel) plane: 11x11 Gaussian window with
// sigma 1.5, valid-region filtering, C1 = (0.01 peak)^2, C2 = (0.03 peak)^2.
double ssim(const Tensor4& a, const Tensor4& b, double peak);

inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

}  // namespace cachediff
