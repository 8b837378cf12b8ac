#pragma once

#include "cachediff/attention.hpp"
#include "cachediff/predictor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cachediff {

struct TinyDiTConfig {
    std::size_t layers = 4;  // even blocks attend spatially, odd blocks temporally
    std::size_t embed_dim = 32;
    std::size_t heads = 4;
    std::size_t patch = 4;
    std::size_t channels = 4;  // latent channels
    std::size_t condition_vocab = 16;
    std::size_t condition_tokens = 4;
    std::uint64_t init_seed = 0;

    // Throws ConfigError when the config is inconsistent, or when `shape`
    // is given and its spatial size is not divisible by the patch size.
    void validate() const;
    void validate(const Shape4& shape) const;
};

// Analytic MAC count of one predict() call. `layers` holds the self-attention
// cost of each block (the hookable part); everything else is in `base`.
MacBreakdown count_macs(const TinyDiTConfig& config, const Shape4& shape);

// Small seeded-random diffusion transformer:
// patchify -> + time/position embedding -> blocks -> final norm -> unpatchify.
// Each block is pre-norm self-attention (spatial or temporal, hooked), then
// cross-attention against the condition tokens, then a GELU MLP, each with a
// residual add. Hook features have shape (frames, tokens per frame, dim, 1).
class TinyDiT final : public NoisePredictor {
public:
    explicit TinyDiT(TinyDiTConfig config);

    std::string name() const override { return "tiny_dit"; }
    std::size_t layer_count() const override { return config_.layers; }
    Tensor4 predict(const Tensor4& x_t, int t, int condition, LayerHooks* hooks,
                    std::uint64_t* macs = nullptr) const override;
    MacBreakdown mac_breakdown(const Shape4& shape) const override { return count_macs(config_, shape); }

    // Same as predict() without hooks, collecting softmax row statistics.
    Tensor4 predict_probed(const Tensor4& x_t, int t, int condition, AttentionProbe& probe) const;

    const TinyDiTConfig& config() const { return config_; }

    // Writes `<base>.bin` (little-endian float32, tensors back to back) and
    // `<base>.json` (config and tensor table).
    void save(const std::filesystem::path& base) const;
    static TinyDiT load(const std::filesystem::path& base);

    // Condition embedding tokens; the null condition maps to all zeros.
    Matrix condition_embedding(int condition) const;

private:
    struct Block {
        Matrix wq, wk, wv, wo;  // self-attention
        Matrix cq, ck, cv, co;  // cross-attention
        Matrix w1, w2;          // MLP
    };

    // Calls fn(name, matrix) for every weight tensor in file order.
    template <class Self, class Fn>
    static void for_each_tensor(Self& self, Fn&& fn);

    Tensor4 forward(const Tensor4& x_t, int t, int condition, LayerHooks* hooks, std::uint64_t* macs,
                    AttentionProbe* probe) const;
    Matrix self_attention(const Block& block, bool spatial, const Matrix& h, std::size_t frames,
                          std::size_t sites, std::uint64_t* macs, AttentionProbe* probe) const;

    TinyDiTConfig config_;
    Matrix patch_in_;
    Matrix patch_out_;
    std::vector<Block> blocks_;
};

}  // namespace cachediff
