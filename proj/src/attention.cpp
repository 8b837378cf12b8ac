#include "cachediff/attention.hpp"

#include "cachediff/error.hpp"

#include <algorithm>
#include <cmath>

namespace cachediff {

Matrix matmul(const Matrix& a, const Matrix& b, std::uint64_t* macs) {
    if (a.cols != b.rows) throw ShapeError("matmul: inner dimensions differ");
    Matrix c(a.rows, b.cols);
    const std::size_t n = b.cols;
    for (std::size_t i = 0; i < a.rows; ++i) {
        float* out = c.data.data() + i * n;
        const float* arow = a.data.data() + i * a.cols;
        for (std::size_t k = 0; k < a.cols; ++k) {
            const float s = arow[k];
            const float* brow = b.data.data() + k * n;
            for (std::size_t j = 0; j < n; ++j) out[j] += s * brow[j];
        }
    }
    if (macs != nullptr) *macs += static_cast<std::uint64_t>(a.rows) * a.cols * b.cols;
    return c;
}

Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v, std::size_t heads, std::uint64_t* macs,
                 AttentionProbe* probe) {
    if (q.cols != k.cols || k.cols != v.cols) throw ShapeError("attention: Q/K/V widths differ");
    if (k.rows != v.rows) throw ShapeError("attention: K and V token counts differ");
    if (heads == 0 || q.cols % heads != 0) throw ShapeError("attention: width not divisible by head count");
    if (k.rows == 0) throw ShapeError("attention: empty key set");
    const std::size_t d = q.cols;
    const std::size_t dh = d / heads;
    const std::size_t nq = q.rows;
    const std::size_t nk = k.rows;
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

    Matrix out(nq, d);
    std::vector<float> p(nk);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        for (std::size_t i = 0; i < nq; ++i) {
            const float* qi = q.data.data() + i * d + off;
            float mx = -INFINITY;
            for (std::size_t j = 0; j < nk; ++j) {
                const float* kj = k.data.data() + j * d + off;
                float dot = 0.0f;
                for (std::size_t e = 0; e < dh; ++e) dot += qi[e] * kj[e];
                p[j] = dot * scale;
                mx = std::max(mx, p[j]);
            }
            float total = 0.0f;
            for (std::size_t j = 0; j < nk; ++j) {
                p[j] = std::exp(p[j] - mx);
                total += p[j];
            }
            const float inv = 1.0f / total;
            float* oi = out.data.data() + i * d + off;
            double row_sum = 0.0;
            for (std::size_t j = 0; j < nk; ++j) {
                const float w = p[j] * inv;
                row_sum += w;
                const float* vj = v.data.data() + j * d + off;
                for (std::size_t e = 0; e < dh; ++e) oi[e] += w * vj[e];
            }
            if (probe != nullptr) {
                probe->max_row_sum_error = std::max(probe->max_row_sum_error, std::abs(row_sum - 1.0));
                ++probe->rows_checked;
            }
        }
    }
    if (macs != nullptr) *macs += 2 * static_cast<std::uint64_t>(nq) * nk * d;
    return out;
}

}  // namespace cachediff
