#pragma once

#include "cachediff/cache_engine.hpp"
#include "cachediff/cfg_cache.hpp"
#include "cachediff/diffusion.hpp"
#include "cachediff/predictor.hpp"
#include "cachediff/trace.hpp"

#include <array>
#include <string>

namespace cachediff {

enum class Strategy { no_cache, vanilla_fr, dynamic_fr, cfg_cache_only, fastercache, cond_copy, stale_uncond };

inline constexpr std::array<Strategy, 7> kAllStrategies = {
    Strategy::no_cache,   Strategy::vanilla_fr, Strategy::dynamic_fr,  Strategy::cfg_cache_only,
    Strategy::fastercache, Strategy::cond_copy, Strategy::stale_uncond};

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& name);

// How a strategy fills in the unconditional output on steps where that
// branch is not evaluated.
enum class UncondSource { evaluated, cfg_cache, cond_copy, stale };

struct CacheStrategy {
    Strategy kind = Strategy::no_cache;
    CacheConfig config{};

    PlanParts parts() const;
    UncondSource uncond_source() const;
    // vanilla_fr forces WeightMode::none.
    WeightMode weight_mode() const;
    StepPlan plan(int steps) const;
};

struct SamplerConfig {
    int steps = 30;
    double guidance_scale = 7.5;
    std::uint64_t seed = 0;
    int condition_id = 1;
    ScheduleKind schedule_kind = ScheduleKind::cosine;
    int timesteps = 1000;  // T
    SamplerMode mode = SamplerMode::ddim;
    bool record_features = true;

    void validate() const;
};

struct SampleResult {
    Tensor4 x_final;
    StepTrace trace;
    StepPlan plan;
    std::vector<int> timesteps;  // t_s per step plus a trailing 0
    int switch_t = -1;           // CFG enhancement switch timestep t0, -1 if unused
};

// Runs S steps from seeded Gaussian noise of shape `latent`. Every step
// evaluates the conditional branch (with attention reuse when planned),
// evaluates or reconstructs the unconditional branch, combines them with the
// guidance scale and takes one reverse step.
SampleResult sample(const NoisePredictor& model, const Shape4& latent, const SamplerConfig& config,
                    const CacheStrategy& strategy);

// MACs the plan predicts for a full run: every evaluation pays the base cost
// plus the hooked layers it computes.
std::uint64_t predicted_macs(const StepPlan& plan, const MacBreakdown& macs);

}  // namespace cachediff
