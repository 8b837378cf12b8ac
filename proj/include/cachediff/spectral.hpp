#pragma once

#include "cachediff/tensor.hpp"

#include <complex>
#include <cstdint>
#include <vector>

namespace cachediff {

// Per-frame, per-channel 2-D spectrum. `centered` marks the layout: false is
// the natural DFT layout with DC at (0,0); true is center-shifted, DC at
// (H/2, W/2).
class Spectrum {
public:
    Spectrum() = default;
    Spectrum(Shape4 shape, bool centered);

    const Shape4& shape() const { return shape_; }
    bool centered() const { return centered_; }
    std::size_t size() const { return data_.size(); }

    std::complex<float>& operator[](std::size_t i) { return data_[i]; }
    const std::complex<float>& operator[](std::size_t i) const { return data_[i]; }
    std::span<std::complex<float>> data() { return data_; }
    std::span<const std::complex<float>> data() const { return data_; }

    std::complex<float>& at(std::size_t f, std::size_t c, std::size_t h, std::size_t w) {
        return data_[((f * shape_.channels + c) * shape_.height + h) * shape_.width + w];
    }
    const std::complex<float>& at(std::size_t f, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[((f * shape_.channels + c) * shape_.height + h) * shape_.width + w];
    }

    bool is_zero() const;

private:
    Shape4 shape_{};
    bool centered_ = false;
    std::vector<std::complex<float>> data_;
};

// Binary low/high partition of a centered H x W grid.
struct FrequencyMask {
    std::size_t height = 0;
    std::size_t width = 0;
    double cutoff = 0.0;
    std::vector<std::uint8_t> low;   // row-major, 1 = low band
    std::vector<std::uint8_t> high;  // complement of `low`

    std::size_t low_count() const;
};

// Unnormalized forward 2-D DFT over (H, W) of every (frame, channel) plane.
// The result is in natural layout.
Spectrum fft2(const Tensor4& x);

// Inverse of fft2 (scaled by 1/(H*W)); keeps the real part. Requires the
// natural layout.
Tensor4 ifft2(const Spectrum& s);

Spectrum center_shift(const Spectrum& s);
Spectrum center_unshift(const Spectrum& s);

// Low band is every bin whose centered radius r satisfies
// r <= cutoff * sqrt((H/2)^2 + (W/2)^2).
FrequencyMask make_masks(std::size_t height, std::size_t width, double cutoff);

// Zeroes bins of a centered spectrum outside the selected band.
Spectrum apply_mask(const Spectrum& centered, const FrequencyMask& mask, bool low_band);

struct FrequencySplit {
    Spectrum low;   // centered
    Spectrum high;  // centered
};

FrequencySplit split_frequency(const Tensor4& x, double cutoff);

Spectrum operator+(const Spectrum& a, const Spectrum& b);
Spectrum operator-(const Spectrum& a, const Spectrum& b);
Spectrum operator*(float s, const Spectrum& a);

// Sum of |bin|^2 over the whole spectrum.
double energy(const Spectrum& s);
// Sum of |bin|^2 over the bins of a centered spectrum selected by the band.
double band_energy(const Spectrum& centered, const FrequencyMask& mask, bool low_band);

}  // namespace cachediff
