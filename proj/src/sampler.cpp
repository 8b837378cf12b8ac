#include "cachediff/sampler.hpp"

#include "cachediff/error.hpp"

#include <optional>
#include <stdexcept>

namespace cachediff {

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::no_cache: return "no_cache";
        case Strategy::vanilla_fr: return "vanilla_fr";
        case Strategy::dynamic_fr: return "dynamic_fr";
        case Strategy::cfg_cache_only: return "cfg_cache_only";
        case Strategy::fastercache: return "fastercache";
        case Strategy::cond_copy: return "cond_copy";
        case Strategy::stale_uncond: return "stale_uncond";
    }
    return "no_cache";
}

Strategy strategy_from_string(const std::string& name) {
    for (Strategy s : kAllStrategies) {
        if (to_string(s) == name) return s;
    }
    throw ConfigError("unknown strategy '" + name + "'");
}

PlanParts CacheStrategy::parts() const {
    switch (kind) {
        case Strategy::no_cache: return {false, false};
        case Strategy::vanilla_fr:
        case Strategy::dynamic_fr: return {true, false};
        case Strategy::cfg_cache_only:
        case Strategy::cond_copy:
        case Strategy::stale_uncond: return {false, true};
        case Strategy::fastercache: return {true, true};
    }
    return {false, false};
}

UncondSource CacheStrategy::uncond_source() const {
    switch (kind) {
        case Strategy::cfg_cache_only:
        case Strategy::fastercache: return UncondSource::cfg_cache;
        case Strategy::cond_copy: return UncondSource::cond_copy;
        case Strategy::stale_uncond: return UncondSource::stale;
        default: return UncondSource::evaluated;
    }
}

WeightMode CacheStrategy::weight_mode() const {
    return kind == Strategy::vanilla_fr ? WeightMode::none : config.dfr_weight_mode;
}

StepPlan CacheStrategy::plan(int steps) const { return build_plan(steps, config, parts()); }

void SamplerConfig::validate() const {
    if (steps < 2) throw ConfigError("steps must be at least 2");
    if (!(guidance_scale >= 0.0)) throw ConfigError("guidance_scale must be non-negative");
    if (timesteps < steps) throw ConfigError("diffusion timesteps T must be at least the sampling step count");
    if (condition_id < 0) throw ConfigError("condition_id must be non-negative");
}

std::uint64_t predicted_macs(const StepPlan& plan, const MacBreakdown& macs) {
    std::uint64_t total = 0;
    for (const auto& d : plan.steps) {
        if (d.cond_full) total += macs.base + (d.attn_reuse ? 0 : macs.hookable());
        if (d.uncond_full) total += macs.base + (d.uncond_attn_reuse ? 0 : macs.hookable());
    }
    return total;
}

SampleResult sample(const NoisePredictor& model, const Shape4& latent, const SamplerConfig& config,
                    const CacheStrategy& strategy) {
    config.validate();
    strategy.config.validate();
    const NoiseSchedule sched = make_schedule(config.schedule_kind, config.timesteps);
    SampleResult result;
    result.timesteps = sampling_timesteps(config.steps, config.timesteps);
    result.plan = strategy.plan(config.steps);
    if (static_cast<int>(result.plan.size()) != config.steps) throw std::logic_error("plan length differs from step count");

    const StepPlan& plan = result.plan;
    const UncondSource source = strategy.uncond_source();
    const CacheConfig& cc = strategy.config;
    if (plan.cfg_start >= 0) {
        result.switch_t = switch_timestep(result.timesteps[static_cast<std::size_t>(plan.cfg_start)],
                                          result.timesteps[static_cast<std::size_t>(config.steps - 1)], cc.t0_fraction);
    }

    const CounterRng rng(config.seed);
    Tensor4 x = rng.normal_tensor(latent, kInitialNoiseStream);
    FeatureCache cond_cache(model.layer_count());
    FeatureCache uncond_cache(model.layer_count());
    std::optional<CfgBiasCache> bias;
    std::optional<Tensor4> last_uncond;
    const std::size_t layers = model.layer_count();

    for (int s = 0; s < config.steps; ++s) {
        const auto& d = plan.steps[static_cast<std::size_t>(s)];
        StepRecord rec;
        rec.step = s;
        rec.t = result.timesteps[static_cast<std::size_t>(s)];
        rec.x_t = x;

        std::vector<Tensor4>* snapshots = config.record_features ? &rec.cond_features : nullptr;
        CacheHooks cond_hooks =
            apply_strategy(cond_cache, plan, s, false, strategy.weight_mode(), cc.dfr_constant_weight, snapshots);
        rec.eps_cond = model.predict(x, rec.t, config.condition_id, &cond_hooks, &rec.macs);
        rec.cond_attn_reused = d.attn_reuse;
        rec.full_attention_evals += cond_hooks.computed_layers() == static_cast<int>(layers) ? 1 : 0;

        if (d.uncond_full) {
            CacheHooks uncond_hooks =
                apply_strategy(uncond_cache, plan, s, true, strategy.weight_mode(), cc.dfr_constant_weight);
            rec.eps_uncond = model.predict(x, rec.t, kNullCondition, &uncond_hooks, &rec.macs);
            rec.uncond_attn_reused = d.uncond_attn_reuse;
            rec.full_attention_evals += uncond_hooks.computed_layers() == static_cast<int>(layers) ? 1 : 0;
            last_uncond = rec.eps_uncond;
            if (d.record_cfg_bias && source == UncondSource::cfg_cache) {
                bias = record_bias(rec.eps_cond, rec.eps_uncond, cc.rho, s);
                rec.bias_recorded = true;
            } else {
                rec.bias_recorded = d.record_cfg_bias;
            }
        } else {
            rec.uncond_evaluated = false;
            switch (source) {
                case UncondSource::cfg_cache: {
                    if (!bias) throw std::logic_error("CFG reuse step " + std::to_string(s) + " has no recorded bias");
                    const auto [w1, w2] = enhancement_weights(rec.t, result.switch_t, cc.alpha1, cc.alpha2);
                    rec.eps_uncond = reconstruct_uncond(rec.eps_cond, *bias, w1, w2, cc.rho);
                    break;
                }
                case UncondSource::cond_copy: rec.eps_uncond = baseline_cond_copy(rec.eps_cond); break;
                case UncondSource::stale:
                    if (!last_uncond) throw std::logic_error("stale reuse step " + std::to_string(s) + " has no prior uncond");
                    rec.eps_uncond = *last_uncond;
                    break;
                case UncondSource::evaluated: throw std::logic_error("plan skipped the unconditional branch");
            }
        }

        rec.eps = cfg_combine(rec.eps_cond, rec.eps_uncond, config.guidance_scale);
        x = reverse_step(x, rec.eps, rec.t, result.timesteps[static_cast<std::size_t>(s) + 1], sched, config.mode, rng,
                         kStepNoiseStreamBase + static_cast<std::uint64_t>(s));
        result.trace.push_back(std::move(rec));
    }
    result.x_final = std::move(x);
    return result;
}

}  // namespace cachediff
