#include "cachediff/spectral.hpp"

#include "cachediff/error.hpp"

#include <cassert>
#include <cmath>
#include <numbers>

namespace cachediff {

namespace {

using cd = std::complex<double>;

bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

// Plain product; operator* on std::complex takes a slow NaN-recovery path.
inline cd mul(const cd& a, const cd& b) {
    return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

// In-place 1-D transform of `n` values spaced by `stride` in `buf`.
// sign = -1 forward, +1 inverse (unscaled).
class Line {
public:
    Line(std::size_t n, int sign) : n_(n), sign_(sign), work_(n), twiddle_(n) {
        for (std::size_t k = 0; k < n; ++k) {
            const double a = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
            twiddle_[k] = cd(std::cos(a), std::sin(a));
        }
    }

    void run(cd* buf, std::size_t stride) {
        for (std::size_t i = 0; i < n_; ++i) work_[i] = buf[i * stride];
        if (is_power_of_two(n_)) {
            radix2();
        } else {
            direct();
        }
        for (std::size_t i = 0; i < n_; ++i) buf[i * stride] = work_[i];
    }

private:
    void radix2() {
        const std::size_t n = n_;
        for (std::size_t i = 1, j = 0; i < n; ++i) {
            std::size_t bit = n >> 1;
            for (; j & bit; bit >>= 1) j ^= bit;
            j ^= bit;
            if (i < j) std::swap(work_[i], work_[j]);
        }
        for (std::size_t len = 2; len <= n; len <<= 1) {
            const std::size_t step = n / len;
            for (std::size_t i = 0; i < n; i += len) {
                for (std::size_t k = 0; k < len / 2; ++k) {
                    const cd u = work_[i + k];
                    const cd v = mul(work_[i + k + len / 2], twiddle_[k * step]);
                    work_[i + k] = u + v;
                    work_[i + k + len / 2] = u - v;
                }
            }
        }
    }

    void direct() {
        std::vector<cd> out(n_);
        for (std::size_t k = 0; k < n_; ++k) {
            cd acc = 0.0;
            for (std::size_t j = 0; j < n_; ++j) acc += mul(work_[j], twiddle_[(k * j) % n_]);
            out[k] = acc;
        }
        work_.swap(out);
    }

    std::size_t n_;
    int sign_;
    std::vector<cd> work_;
    std::vector<cd> twiddle_;
};

// Row then column transforms of one H x W plane.
class PlaneTransform {
public:
    PlaneTransform(std::size_t h, std::size_t w, int sign) : h_(h), w_(w), rows_(w, sign), cols_(h, sign) {}

    void run(std::vector<cd>& plane) {
        for (std::size_t r = 0; r < h_; ++r) rows_.run(plane.data() + r * w_, 1);
        for (std::size_t c = 0; c < w_; ++c) cols_.run(plane.data() + c, w_);
    }

private:
    std::size_t h_;
    std::size_t w_;
    Line rows_;
    Line cols_;
};

Spectrum rolled(const Spectrum& s, bool to_centered) {
    const Shape4& sh = s.shape();
    Spectrum out(sh, to_centered);
    const std::size_t dh = sh.height / 2;
    const std::size_t dw = sh.width / 2;
    for (std::size_t f = 0; f < sh.frames; ++f) {
        for (std::size_t c = 0; c < sh.channels; ++c) {
            for (std::size_t y = 0; y < sh.height; ++y) {
                for (std::size_t x = 0; x < sh.width; ++x) {
                    if (to_centered) {
                        out.at(f, c, (y + dh) % sh.height, (x + dw) % sh.width) = s.at(f, c, y, x);
                    } else {
                        out.at(f, c, y, x) = s.at(f, c, (y + dh) % sh.height, (x + dw) % sh.width);
                    }
                }
            }
        }
    }
    return out;
}

void require_same_layout(const Spectrum& a, const Spectrum& b, const char* what) {
    if (a.shape() != b.shape() || a.centered() != b.centered()) {
        throw ShapeError(std::string(what) + ": spectrum layout mismatch");
    }
}

}  // namespace

Spectrum::Spectrum(Shape4 shape, bool centered)
    : shape_(shape), centered_(centered), data_(shape.numel()) {}

bool Spectrum::is_zero() const {
    for (const auto& v : data_) {
        if (v != std::complex<float>{}) return false;
    }
    return true;
}

std::size_t FrequencyMask::low_count() const {
    std::size_t n = 0;
    for (auto v : low) n += v;
    return n;
}

Spectrum fft2(const Tensor4& x) {
    const Shape4& sh = x.shape();
    if (x.empty()) throw ShapeError("fft2: empty tensor " + sh.str());
    Spectrum out(sh, false);
    PlaneTransform transform(sh.height, sh.width, -1);
    std::vector<cd> plane(sh.plane());
    for (std::size_t f = 0; f < sh.frames; ++f) {
        for (std::size_t c = 0; c < sh.channels; ++c) {
            const std::size_t off = x.plane_offset(f, c);
            for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = x[off + i];
            transform.run(plane);
            for (std::size_t i = 0; i < plane.size(); ++i) {
                out[off + i] = std::complex<float>(static_cast<float>(plane[i].real()),
                                                   static_cast<float>(plane[i].imag()));
            }
        }
    }
    return out;
}

Tensor4 ifft2(const Spectrum& s) {
    const Shape4& sh = s.shape();
    if (s.centered()) throw ShapeError("ifft2: spectrum is center-shifted; unshift it first");
    if (s.size() != sh.numel() || s.size() == 0) throw ShapeError("ifft2: spectrum does not match its declared shape");
    Tensor4 out(sh);
    PlaneTransform transform(sh.height, sh.width, +1);
    std::vector<cd> plane(sh.plane());
    const double scale = 1.0 / static_cast<double>(sh.plane());
    for (std::size_t f = 0; f < sh.frames; ++f) {
        for (std::size_t c = 0; c < sh.channels; ++c) {
            const std::size_t off = f * sh.channels * sh.plane() + c * sh.plane();
            for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = cd(s[off + i].real(), s[off + i].imag());
            transform.run(plane);
#ifndef NDEBUG
            double re2 = 0.0;
            double im2 = 0.0;
            for (const cd& v : plane) {
                re2 += v.real() * v.real();
                im2 += v.imag() * v.imag();
            }
            assert(std::sqrt(im2) <= 1e-5 * std::sqrt(re2 + im2) + 1e-6);
#endif
            for (std::size_t i = 0; i < plane.size(); ++i) out[off + i] = static_cast<float>(plane[i].real() * scale);
        }
    }
    out.require_finite("ifft2");
    return out;
}

Spectrum center_shift(const Spectrum& s) {
    if (s.centered()) throw ShapeError("center_shift: spectrum already centered");
    return rolled(s, true);
}

Spectrum center_unshift(const Spectrum& s) {
    if (!s.centered()) throw ShapeError("center_unshift: spectrum is not centered");
    return rolled(s, false);
}

FrequencyMask make_masks(std::size_t height, std::size_t width, double cutoff) {
    if (!(cutoff >= 0.0 && cutoff <= 1.0)) throw std::invalid_argument("make_masks: cutoff must lie in [0, 1]");
    if (height == 0 || width == 0) throw ShapeError("make_masks: empty grid");
    FrequencyMask m;
    m.height = height;
    m.width = width;
    m.cutoff = cutoff;
    m.low.assign(height * width, 0);
    m.high.assign(height * width, 0);
    const double hh = static_cast<double>(height) / 2.0;
    const double hw = static_cast<double>(width) / 2.0;
    const double limit2 = cutoff * cutoff * (hh * hh + hw * hw);
    const auto ch = static_cast<long>(height / 2);
    const auto cw = static_cast<long>(width / 2);
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            const double dy = static_cast<double>(static_cast<long>(y) - ch);
            const double dx = static_cast<double>(static_cast<long>(x) - cw);
            const bool low = dy * dy + dx * dx <= limit2;
            m.low[y * width + x] = low ? 1 : 0;
            m.high[y * width + x] = low ? 0 : 1;
        }
    }
    return m;
}

Spectrum apply_mask(const Spectrum& centered, const FrequencyMask& mask, bool low_band) {
    const Shape4& sh = centered.shape();
    if (!centered.centered()) throw ShapeError("apply_mask: spectrum must be centered");
    if (mask.height != sh.height || mask.width != sh.width) throw ShapeError("apply_mask: mask size mismatch");
    const auto& keep = low_band ? mask.low : mask.high;
    Spectrum out(sh, true);
    const std::size_t plane = sh.plane();
    for (std::size_t i = 0; i < centered.size(); ++i) {
        if (keep[i % plane]) out[i] = centered[i];
    }
    return out;
}

FrequencySplit split_frequency(const Tensor4& x, double cutoff) {
    const Spectrum centered = center_shift(fft2(x));
    const FrequencyMask mask = make_masks(x.shape().height, x.shape().width, cutoff);
    return {apply_mask(centered, mask, true), apply_mask(centered, mask, false)};
}

Spectrum operator+(const Spectrum& a, const Spectrum& b) {
    require_same_layout(a, b, "spectrum add");
    Spectrum out(a.shape(), a.centered());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

Spectrum operator-(const Spectrum& a, const Spectrum& b) {
    require_same_layout(a, b, "spectrum sub");
    Spectrum out(a.shape(), a.centered());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

Spectrum operator*(float s, const Spectrum& a) {
    Spectrum out(a.shape(), a.centered());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = s * a[i];
    return out;
}

double energy(const Spectrum& s) {
    double acc = 0.0;
    for (const auto& v : s.data()) acc += std::norm(std::complex<double>(v.real(), v.imag()));
    return acc;
}

double band_energy(const Spectrum& centered, const FrequencyMask& mask, bool low_band) {
    return energy(apply_mask(centered, mask, low_band));
}

}  // namespace cachediff
