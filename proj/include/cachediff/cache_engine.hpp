#pragma once

#include "cachediff/predictor.hpp"
#include "cachediff/tensor.hpp"

#include <optional>
#include <string>
#include <vector>

namespace cachediff {

enum class WeightMode { linear, constant, none };

std::string to_string(WeightMode mode);
WeightMode weight_mode_from_string(const std::string& name);

struct CacheConfig {
    int dfr_interval = 2;  // full attention every n-th step
    WeightMode dfr_weight_mode = WeightMode::linear;
    double dfr_constant_weight = 0.5;        // w used by WeightMode::constant
    double cfg_start_fraction = 1.0 / 3.0;   // CFG reuse begins at ceil(fraction * S)
    int cfg_interval = 5;                    // both branches refresh every n-th step
    double alpha1 = 0.2;                     // low-frequency boost before the switch
    double alpha2 = 0.2;                     // high-frequency boost after the switch
    double t0_fraction = 0.5;                // switch point inside the CFG-reuse span
    double rho = 0.25;                       // low/high radial cutoff

    void validate() const;
};

struct StepDirective {
    bool cond_full = true;             // conditional branch is evaluated
    bool uncond_full = true;           // unconditional branch is evaluated (else reconstructed)
    bool attn_reuse = false;           // conditional branch substitutes cached attention
    bool uncond_attn_reuse = false;    // unconditional branch substitutes cached attention
    bool record_cfg_bias = false;      // re-record the cond/uncond frequency bias
    bool cache_features = true;        // fully computed features enter the feature cache

    bool operator==(const StepDirective&) const = default;
};

struct StepPlan {
    std::vector<StepDirective> steps;
    int dfr_start = -1;  // first attention-reuse step, -1 if none
    int cfg_start = -1;  // first step of the CFG reuse phase, -1 if disabled

    std::size_t size() const { return steps.size(); }
    const StepDirective& operator[](std::size_t s) const { return steps[s]; }

    int cond_full_attention_steps() const;
    int attention_reuse_steps() const;
    int uncond_evaluations() const;
    int uncond_full_attention_evaluations() const;
    int reconstructed_uncond_steps() const;
    int bias_refresh_steps() const;
    // Model evaluations (either branch) that compute every attention layer.
    int full_attention_evaluations() const { return cond_full_attention_steps() + uncond_full_attention_evaluations(); }
};

struct PlanParts {
    bool feature_reuse = true;
    bool cfg_reuse = true;
};

// Step schedule for S sampling steps.
//  Attention: steps with s % dfr_interval == 0 are full; the rest reuse,
//  except that a reuse step is promoted to full until two full steps exist,
//  and the final step (which produces the sample) is always full.
//  CFG: before ceil(cfg_start_fraction * S) (capped at S - 1) both branches
//  run; afterwards both run and the bias is re-recorded every cfg_interval
//  steps, otherwise only the conditional branch runs.
//  A bias refresh that lands on a reuse step computes full attention in both
//  branches so the recorded bias compares two exact outputs; those features
//  are kept out of the cache to preserve the dfr_interval cadence.
//  The unconditional branch reuses attention only when its cache holds the
//  same two steps as the conditional one.
StepPlan build_plan(int steps, const CacheConfig& config, PlanParts parts = {});

// Reuse weight at sampling step s, where `reuse_start` is the first reuse
// step. linear ramps 0 -> 1 over [reuse_start, S - 1]; constant returns
// `constant_weight`; none returns 0.
double w_of(int s, int reuse_start, int steps, WeightMode mode, double constant_weight = 0.5);

// last + (last - prev) * w
Tensor4 dynamic_reuse(const Tensor4& last, const Tensor4& prev, double w);

// The two most recent fully computed outputs of every hooked layer.
class FeatureCache {
public:
    struct Entry {
        int step = -1;
        Tensor4 feature;
    };

    explicit FeatureCache(std::size_t layers) : last_(layers), prev_(layers) {}

    std::size_t layers() const { return last_.size(); }
    void record(std::size_t layer, int step, const Tensor4& feature);
    bool ready(std::size_t layer) const { return last_.at(layer).has_value() && prev_.at(layer).has_value(); }
    const std::optional<Entry>& last(std::size_t layer) const { return last_.at(layer); }
    const std::optional<Entry>& prev(std::size_t layer) const { return prev_.at(layer); }

    // Feature estimate for `step`: dynamic_reuse of the two slots with the
    // weight scaled by 2 (step - last) / (last - prev), the look-ahead
    // relative to a one-step reuse after a two-step cache gap (factor 1 on
    // the regular interval-2 cadence). Throws std::logic_error when a slot is
    // empty.
    Tensor4 extrapolate(std::size_t layer, int step, double w) const;

private:
    std::vector<std::optional<Entry>> last_;
    std::vector<std::optional<Entry>> prev_;
};

// Hooks for one branch evaluation at step s. Full steps record every layer
// output into the cache; reuse steps substitute the extrapolated feature.
// When `snapshots` is given, the feature each layer ends up with is copied
// into it.
class CacheHooks final : public LayerHooks {
public:
    CacheHooks(FeatureCache& cache, int step, bool reuse, double w, bool record = true,
               std::vector<Tensor4>* snapshots = nullptr);

    std::size_t size() const override { return cache_.layers(); }
    const Tensor4* replacement(std::size_t layer) override;
    void observe(std::size_t layer, const Tensor4& feature, bool computed) override;

    int computed_layers() const { return computed_; }

private:
    FeatureCache& cache_;
    int step_;
    bool reuse_;
    double w_;
    bool record_;
    std::vector<Tensor4>* snapshots_;
    Tensor4 scratch_;
    int computed_ = 0;
};

// Hook set for step s of a plan.
CacheHooks apply_strategy(FeatureCache& cache, const StepPlan& plan, int step, bool uncond_branch, WeightMode mode,
                          double constant_weight, std::vector<Tensor4>* snapshots = nullptr);

// Plan rendered as CSV: step,t,cond_full,uncond_full,attn_reuse,record_cfg_bias
std::string plan_to_csv(const StepPlan& plan, const std::vector<int>& timesteps);

}  // namespace cachediff
