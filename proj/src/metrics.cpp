#include "cachediff/metrics.hpp"

#include "cachediff/error.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace cachediff {

namespace {

std::array<double, kSsimWindow> gaussian_taps() {
    std::array<double, kSsimWindow> taps{};
    const double mid = static_cast<double>(kSsimWindow / 2);
    double total = 0.0;
    for (std::size_t i = 0; i < kSsimWindow; ++i) {
        const double d = static_cast<double>(i) - mid;
        taps[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        total += taps[i];
    }
    for (double& t : taps) t /= total;
    return taps;
}

// Separable valid-region Gaussian filter of one plane.
std::vector<double> filter_valid(const std::vector<double>& src, std::size_t h, std::size_t w,
                                 const std::array<double, kSsimWindow>& taps) {
    const std::size_t oh = h - kSsimWindow + 1;
    const std::size_t ow = w - kSsimWindow + 1;
    std::vector<double> rows(h * ow, 0.0);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::size_t k = 0; k < kSsimWindow; ++k) acc += taps[k] * src[y * w + x + k];
            rows[y * ow + x] = acc;
        }
    }
    std::vector<double> out(oh * ow, 0.0);
    for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::size_t k = 0; k < kSsimWindow; ++k) acc += taps[k] * rows[(y + k) * ow + x];
            out[y * ow + x] = acc;
        }
    }
    return out;
}

}  // namespace

double mse(const Tensor4& a, const Tensor4& b) {
    require_same_shape(a, b, "mse");
    if (a.empty()) throw ShapeError("mse: empty tensors");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

double psnr(const Tensor4& a, const Tensor4& b, double peak) {
    if (!(peak > 0.0)) throw std::invalid_argument("psnr: peak must be positive");
    const double err = mse(a, b);
    if (err == 0.0) return kInfinitePsnr;
    return 10.0 * std::log10(peak * peak / err);
}

double ssim(const Tensor4& a, const Tensor4& b, double peak) {
    require_same_shape(a, b, "ssim");
    if (!(peak > 0.0)) throw std::invalid_argument("ssim: peak must be positive");
    const Shape4& sh = a.shape();
    if (sh.height < kSsimWindow || sh.width < kSsimWindow) {
        throw ShapeError("ssim: spatial size " + sh.str() + " is smaller than the 11x11 window");
    }
    if (sh.frames == 0 || sh.channels == 0) throw ShapeError("ssim: empty tensor");
    const auto taps = gaussian_taps();
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);
    const std::size_t h = sh.height;
    const std::size_t w = sh.width;

    double total = 0.0;
    std::size_t planes = 0;
    std::vector<double> pa(h * w), pb(h * w), paa(h * w), pbb(h * w), pab(h * w);
    for (std::size_t f = 0; f < sh.frames; ++f) {
        for (std::size_t c = 0; c < sh.channels; ++c) {
            const std::size_t off = a.plane_offset(f, c);
            for (std::size_t i = 0; i < h * w; ++i) {
                const double x = a[off + i];
                const double y = b[off + i];
                pa[i] = x;
                pb[i] = y;
                paa[i] = x * x;
                pbb[i] = y * y;
                pab[i] = x * y;
            }
            const auto mu_a = filter_valid(pa, h, w, taps);
            const auto mu_b = filter_valid(pb, h, w, taps);
            const auto e_aa = filter_valid(paa, h, w, taps);
            const auto e_bb = filter_valid(pbb, h, w, taps);
            const auto e_ab = filter_valid(pab, h, w, taps);
            double plane_sum = 0.0;
            for (std::size_t i = 0; i < mu_a.size(); ++i) {
                const double var_a = e_aa[i] - mu_a[i] * mu_a[i];
                const double var_b = e_bb[i] - mu_b[i] * mu_b[i];
                const double cov = e_ab[i] - mu_a[i] * mu_b[i];
                const double num = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2);
                const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (var_a + var_b + c2);
                plane_sum += num / den;
            }
            total += plane_sum / static_cast<double>(mu_a.size());
            ++planes;
        }
    }
    return total / static_cast<double>(planes);
}

}  // namespace cachediff
