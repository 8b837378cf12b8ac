#include "cachediff/cache_engine.hpp"

#include "cachediff/error.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace cachediff {

std::string to_string(WeightMode mode) {
    switch (mode) {
        case WeightMode::linear: return "linear";
        case WeightMode::constant: return "constant";
        case WeightMode::none: return "none";
    }
    return "linear";
}

WeightMode weight_mode_from_string(const std::string& name) {
    if (name == "linear") return WeightMode::linear;
    if (name == "constant") return WeightMode::constant;
    if (name == "none") return WeightMode::none;
    throw ConfigError("unknown dfr_weight_mode '" + name + "'");
}

void CacheConfig::validate() const {
    if (dfr_interval < 1) throw ConfigError("dfr_interval must be at least 1");
    if (cfg_interval < 1) throw ConfigError("cfg_interval must be at least 1");
    if (!(cfg_start_fraction >= 0.0 && cfg_start_fraction < 1.0)) throw ConfigError("cfg_start_fraction must lie in [0, 1)");
    if (!(alpha1 >= -1.0) || !(alpha2 >= -1.0)) throw ConfigError("alpha1 and alpha2 must be at least -1");
    if (!(t0_fraction >= 0.0 && t0_fraction <= 1.0)) throw ConfigError("t0_fraction must lie in [0, 1]");
    if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("rho must lie in [0, 1]");
    if (!std::isfinite(dfr_constant_weight)) throw ConfigError("dfr_constant_weight must be finite");
}

int StepPlan::cond_full_attention_steps() const {
    int n = 0;
    for (const auto& d : steps) n += d.cond_full && !d.attn_reuse;
    return n;
}

int StepPlan::attention_reuse_steps() const {
    int n = 0;
    for (const auto& d : steps) n += d.attn_reuse;
    return n;
}

int StepPlan::uncond_evaluations() const {
    int n = 0;
    for (const auto& d : steps) n += d.uncond_full;
    return n;
}

int StepPlan::uncond_full_attention_evaluations() const {
    int n = 0;
    for (const auto& d : steps) n += d.uncond_full && !d.uncond_attn_reuse;
    return n;
}

int StepPlan::reconstructed_uncond_steps() const {
    return static_cast<int>(steps.size()) - uncond_evaluations();
}

int StepPlan::bias_refresh_steps() const {
    int n = 0;
    for (const auto& d : steps) n += d.record_cfg_bias;
    return n;
}

StepPlan build_plan(int steps, const CacheConfig& config, PlanParts parts) {
    if (steps < 2) throw ConfigError("build_plan: need at least two sampling steps");
    config.validate();
    StepPlan plan;
    plan.steps.resize(static_cast<std::size_t>(steps));

    if (parts.feature_reuse) {
        int full_seen = 0;
        for (int s = 0; s < steps; ++s) {
            auto& d = plan.steps[static_cast<std::size_t>(s)];
            if (s % config.dfr_interval == 0 || full_seen < 2 || s == steps - 1) {
                ++full_seen;
            } else {
                d.attn_reuse = true;
            }
        }
    }

    if (parts.cfg_reuse) {
        const double raw = config.cfg_start_fraction * static_cast<double>(steps);
        int start = static_cast<int>(std::ceil(raw - 1e-9));
        start = std::min(std::max(start, 0), steps - 1);
        plan.cfg_start = start;
        for (int s = start; s < steps; ++s) {
            auto& d = plan.steps[static_cast<std::size_t>(s)];
            if ((s - start) % config.cfg_interval == 0) {
                d.record_cfg_bias = true;
                if (d.attn_reuse) {
                    d.attn_reuse = false;
                    d.cache_features = false;
                }
            } else {
                d.uncond_full = false;
            }
        }
    }

    // Mirror the runtime caches: each remembers the steps of its last two
    // recordings. The unconditional branch may only extrapolate from the same
    // pair of steps as the conditional one.
    std::pair<int, int> cond_slots{-1, -1};
    std::pair<int, int> uncond_slots{-1, -1};
    auto push = [](std::pair<int, int>& slots, int s) { slots = {s, slots.first}; };
    for (int s = 0; s < steps; ++s) {
        auto& d = plan.steps[static_cast<std::size_t>(s)];
        if (d.attn_reuse && plan.dfr_start < 0) plan.dfr_start = s;
        if (d.uncond_full && d.attn_reuse && uncond_slots == cond_slots) d.uncond_attn_reuse = true;
        if (!d.cache_features) continue;
        if (!d.attn_reuse) push(cond_slots, s);
        if (d.uncond_full && !d.uncond_attn_reuse) push(uncond_slots, s);
    }
    return plan;
}

double w_of(int s, int reuse_start, int steps, WeightMode mode, double constant_weight) {
    if (reuse_start < 0 || s < reuse_start || s > steps - 1) {
        throw std::invalid_argument("w_of: step " + std::to_string(s) + " outside the reuse span [" +
                                    std::to_string(reuse_start) + ", " + std::to_string(steps - 1) + "]");
    }
    switch (mode) {
        case WeightMode::none: return 0.0;
        case WeightMode::constant: return constant_weight;
        case WeightMode::linear: {
            const int span = steps - 1 - reuse_start;
            if (span == 0) return 1.0;
            return static_cast<double>(s - reuse_start) / static_cast<double>(span);
        }
    }
    return 0.0;
}

Tensor4 dynamic_reuse(const Tensor4& last, const Tensor4& prev, double w) {
    require_same_shape(last, prev, "dynamic_reuse");
    const float wf = static_cast<float>(w);
    Tensor4 out(last.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = last[i] + (last[i] - prev[i]) * wf;
    out.require_finite("dynamic_reuse");
    return out;
}

void FeatureCache::record(std::size_t layer, int step, const Tensor4& feature) {
    auto& last = last_.at(layer);
    if (last.has_value() && step <= last->step) {
        throw std::logic_error("FeatureCache: steps must be recorded in increasing order");
    }
    prev_[layer] = std::move(last);
    last = Entry{step, feature};
}

Tensor4 FeatureCache::extrapolate(std::size_t layer, int step, double w) const {
    if (!ready(layer)) {
        throw std::logic_error("FeatureCache: reuse requested for layer " + std::to_string(layer) +
                               " before two full steps were cached");
    }
    const int ahead = step - last_[layer]->step;
    const int gap = last_[layer]->step - prev_[layer]->step;
    if (ahead <= 0) throw std::logic_error("FeatureCache: reuse step does not follow the cached steps");
    const double scale = 2.0 * static_cast<double>(ahead) / static_cast<double>(gap);
    return dynamic_reuse(last_[layer]->feature, prev_[layer]->feature, w * scale);
}

CacheHooks::CacheHooks(FeatureCache& cache, int step, bool reuse, double w, bool record,
                       std::vector<Tensor4>* snapshots)
    : cache_(cache), step_(step), reuse_(reuse), w_(w), record_(record), snapshots_(snapshots) {
    if (snapshots_ != nullptr) snapshots_->assign(cache_.layers(), Tensor4{});
}

const Tensor4* CacheHooks::replacement(std::size_t layer) {
    if (!reuse_) return nullptr;
    scratch_ = cache_.extrapolate(layer, step_, w_);
    return &scratch_;
}

void CacheHooks::observe(std::size_t layer, const Tensor4& feature, bool computed) {
    if (computed) {
        if (record_) cache_.record(layer, step_, feature);
        ++computed_;
    }
    if (snapshots_ != nullptr) (*snapshots_)[layer] = feature;
}

CacheHooks apply_strategy(FeatureCache& cache, const StepPlan& plan, int step, bool uncond_branch, WeightMode mode,
                          double constant_weight, std::vector<Tensor4>* snapshots) {
    const auto& d = plan.steps.at(static_cast<std::size_t>(step));
    const bool reuse = uncond_branch ? d.uncond_attn_reuse : d.attn_reuse;
    const double w = reuse ? w_of(step, plan.dfr_start, static_cast<int>(plan.size()), mode, constant_weight) : 0.0;
    return CacheHooks(cache, step, reuse, w, d.cache_features, snapshots);
}

std::string plan_to_csv(const StepPlan& plan, const std::vector<int>& timesteps) {
    if (timesteps.size() < plan.size()) throw std::invalid_argument("plan_to_csv: missing timesteps");
    std::ostringstream os;
    os << "step,t,cond_full,uncond_full,attn_reuse,record_cfg_bias\n";
    for (std::size_t s = 0; s < plan.size(); ++s) {
        const auto& d = plan.steps[s];
        os << s << ',' << timesteps[s] << ',' << int(d.cond_full) << ',' << int(d.uncond_full) << ','
           << int(d.attn_reuse) << ',' << int(d.record_cfg_bias) << '\n';
    }
    return os.str();
}

}  // namespace cachediff
