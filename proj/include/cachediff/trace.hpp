#pragma once

#include "cachediff/tensor.hpp"

#include <cstdint>
#include <vector>

namespace cachediff {

// Everything the sampler did at one sampling step.
struct StepRecord {
    int step = 0;
    int t = 0;
    Tensor4 x_t;  // sampler state the step started from
    Tensor4 eps_cond;
    Tensor4 eps_uncond;  // evaluated or reconstructed, see uncond_evaluated
    Tensor4 eps;         // guided combination
    bool cond_evaluated = true;
    bool uncond_evaluated = true;
    bool cond_attn_reused = false;
    bool uncond_attn_reused = false;
    bool bias_recorded = false;
    int full_attention_evals = 0;  // branch evaluations that computed every hooked layer
    std::uint64_t macs = 0;        // counted model MACs at this step
    std::vector<Tensor4> cond_features;  // per hooked layer, only when recording features
};

using StepTrace = std::vector<StepRecord>;

}  // namespace cachediff
