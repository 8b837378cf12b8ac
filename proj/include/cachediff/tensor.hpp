#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace cachediff {

// (frames, channels, height, width)
struct Shape4 {
    std::size_t frames = 0;
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t numel() const { return frames * channels * height * width; }
    std::size_t plane() const { return height * width; }
    bool operator==(const Shape4&) const = default;
    std::string str() const;
};

// Dense row-major real tensor. Latents, noise predictions and cached
// attention features all use this type.
class Tensor4 {
public:
    Tensor4() = default;
    explicit Tensor4(Shape4 shape, float fill = 0.0f);
    Tensor4(Shape4 shape, std::vector<float> data);

    const Shape4& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<float> data() { return data_; }
    std::span<const float> data() const { return data_; }
    const std::vector<float>& vec() const { return data_; }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    float& at(std::size_t f, std::size_t c, std::size_t h, std::size_t w) {
        return data_[((f * shape_.channels + c) * shape_.height + h) * shape_.width + w];
    }
    float at(std::size_t f, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[((f * shape_.channels + c) * shape_.height + h) * shape_.width + w];
    }

    // Offset of the (f, c) spatial plane.
    std::size_t plane_offset(std::size_t f, std::size_t c) const {
        return (f * shape_.channels + c) * shape_.plane();
    }

    bool all_finite() const;
    // Throws NumericError naming `what` when any element is NaN/Inf.
    void require_finite(const char* what) const;

    bool operator==(const Tensor4& other) const = default;

private:
    Shape4 shape_{};
    std::vector<float> data_;
};

void require_same_shape(const Tensor4& a, const Tensor4& b, const char* what);

// out = alpha * a + beta * b
Tensor4 lincomb(float alpha, const Tensor4& a, float beta, const Tensor4& b);
Tensor4 operator+(const Tensor4& a, const Tensor4& b);
Tensor4 operator-(const Tensor4& a, const Tensor4& b);
Tensor4 operator*(float s, const Tensor4& a);

double sum(const Tensor4& a);
double sum_squares(const Tensor4& a);

}  // namespace cachediff
