#include "cachediff/tensor.hpp"

#include "cachediff/error.hpp"

#include <cmath>
#include <sstream>

namespace cachediff {

std::string Shape4::str() const {
    std::ostringstream os;
    os << "(" << frames << "," << channels << "," << height << "," << width << ")";
    return os.str();
}

Tensor4::Tensor4(Shape4 shape, float fill) : shape_(shape), data_(shape.numel(), fill) {}

Tensor4::Tensor4(Shape4 shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_.str());
    }
}

bool Tensor4::all_finite() const {
    for (float v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor4::require_finite(const char* what) const {
    if (!all_finite()) throw NumericError(std::string(what) + ": non-finite value in result");
}

void require_same_shape(const Tensor4& a, const Tensor4& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " +
                         b.shape().str());
    }
}

Tensor4 lincomb(float alpha, const Tensor4& a, float beta, const Tensor4& b) {
    require_same_shape(a, b, "lincomb");
    Tensor4 out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = alpha * a[i] + beta * b[i];
    return out;
}

Tensor4 operator+(const Tensor4& a, const Tensor4& b) { return lincomb(1.0f, a, 1.0f, b); }
Tensor4 operator-(const Tensor4& a, const Tensor4& b) { return lincomb(1.0f, a, -1.0f, b); }

Tensor4 operator*(float s, const Tensor4& a) {
    Tensor4 out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = s * a[i];
    return out;
}

double sum(const Tensor4& a) {
    double acc = 0.0;
    for (float v : a.data()) acc += v;
    return acc;
}

double sum_squares(const Tensor4& a) {
    double acc = 0.0;
    for (float v : a.data()) acc += static_cast<double>(v) * v;
    return acc;
}

}  // namespace cachediff
