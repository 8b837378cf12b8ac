#pragma once

#include "cachediff/cfg_cache.hpp"
#include "cachediff/sampler.hpp"
#include "cachediff/tiny_dit.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace cachediff {

inline constexpr int kSchemaVersion = 1;

// Environment variable naming the default output directory.
inline constexpr const char* kOutputDirEnv = "CACHEDIFF_OUTPUT_DIR";

enum class ModelKind { analytic, tiny_dit };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

struct AnalyticWorldConfig {
    std::size_t conditions = 8;  // including the null condition
    double variance = 0.5;
    std::uint64_t world_seed = 0;
};

struct ExperimentConfig {
    ModelKind model = ModelKind::analytic;
    AnalyticWorldConfig analytic{};
    TinyDiTConfig tiny_dit{};
    std::string weights;  // tiny_dit only: load `<weights>.bin/.json` instead of seeded init
    Shape4 latent{4, 4, 16, 16};
    SamplerConfig sampler{};
    CacheConfig cache{};
    Strategy strategy = Strategy::fastercache;
    int repetitions = 5;  // timed runs after one untimed warm-up
    std::string output_dir;

    // Throws ConfigError on any inconsistency between the parts.
    void validate() const;
};

// Strict conversion: unknown keys and wrong types are ConfigErrors. Missing
// keys keep their defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::string& path);

std::unique_ptr<NoisePredictor> make_model(const ExperimentConfig& config);

struct LatencyStats {
    std::vector<double> samples;  // seconds
    double mean = 0.0;
    double median = 0.0;
    double stddev = 0.0;
};

LatencyStats summarize_latency(std::vector<double> samples);

// One strategy evaluated against the no_cache reference of the same config.
struct StrategyReport {
    std::string label;
    Strategy strategy = Strategy::no_cache;
    std::optional<double> sweep_value;
    std::uint64_t total_macs = 0;      // instrumented
    std::uint64_t predicted_macs = 0;  // from the plan
    std::uint64_t reference_macs = 0;
    int full_attention_evals = 0;
    int predicted_full_attention_evals = 0;
    int uncond_evals = 0;
    int reconstructed_uncond_steps = 0;
    double mse = 0.0;
    double psnr = 0.0;  // kInfinitePsnr when identical to the reference
    double ssim = 0.0;
    std::vector<double> feature_mse;  // per step, mean over hooked layers
    std::vector<BiasEnergy> bias_trend;
    std::uint64_t step0_digest = 0;   // FNV-1a of the step-0 conditional output
    LatencyStats latency;
    double speedup = 1.0;

    double mac_ratio() const;
};

struct RunReport {
    std::string command;  // run, ablate or sweep
    ExperimentConfig config;
    std::string sweep_parameter;
    double peak = 1.0;  // value range of the reference sample, used for PSNR/SSIM
    std::vector<BiasEnergy> reference_bias_trend;
    std::vector<StrategyReport> entries;
};

// Executes the reference and `config.strategy` with identical seeds.
RunReport run(const ExperimentConfig& config);

// The fixed variant grid, every variant sharing the seed. `on_entry` is called
// after each finished variant so callers can persist partial results.
RunReport ablate(const ExperimentConfig& config,
                 const std::function<void(const RunReport&)>& on_entry = {});

// Any subset of strategies against the no_cache reference (placed first),
// recorded and timed together like ablate().
RunReport compare(const ExperimentConfig& config, std::vector<Strategy> strategies);

inline constexpr std::array<const char*, 7> kSweepParameters = {"dfr_interval", "cfg_interval", "alpha1", "alpha2",
                                                                 "rho",          "t0_fraction",  "g"};

// Copy of `config` with the named parameter set; ConfigError for unknown names.
ExperimentConfig with_parameter(ExperimentConfig config, const std::string& name, double value);

RunReport sweep(const ExperimentConfig& config, const std::string& parameter, const std::vector<double>& values);

}  // namespace cachediff
