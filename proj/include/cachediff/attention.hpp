#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace cachediff {

// Row-major dense matrix of token rows.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, float fill = 0.0f) : rows(r), cols(c), data(r * c, fill) {}

    float& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    float operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<float> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const float> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

// Collects softmax row sums when attached to attention(); diagnostics only.
struct AttentionProbe {
    double max_row_sum_error = 0.0;
    std::size_t rows_checked = 0;
};

// a * b; adds rows*inner*cols to *macs when given.
Matrix matmul(const Matrix& a, const Matrix& b, std::uint64_t* macs = nullptr);

// softmax(Q K^T / sqrt(d_head)) V per head, heads concatenated along columns.
// q is nq x d, k and v are nk x d, d divisible by `heads`.
Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v, std::size_t heads,
                 std::uint64_t* macs = nullptr, AttentionProbe* probe = nullptr);

// MACs of one self-attention call over n tokens of width d: scores, apply,
// and the Q/K/V/O projections.
constexpr std::uint64_t self_attention_macs(std::uint64_t n, std::uint64_t d) {
    return 2 * n * n * d + 4 * n * d * d;
}

// Q/O projections of n query tokens, K/V projections of m context tokens,
// scores and apply.
constexpr std::uint64_t cross_attention_macs(std::uint64_t n, std::uint64_t m, std::uint64_t d) {
    return 2 * n * m * d + 2 * n * d * d + 2 * m * d * d;
}

// Two-layer MLP with a 4x hidden width.
constexpr std::uint64_t ffn_macs(std::uint64_t n, std::uint64_t d) { return 8 * n * d * d; }

}  // namespace cachediff
