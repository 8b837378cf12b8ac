#include "cachediff/experiment.hpp"

#include "cachediff/analytic_denoiser.hpp"
#include "cachediff/error.hpp"
#include "cachediff/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <initializer_list>
#include <numeric>

namespace cachediff {

using nlohmann::json;

std::string to_string(ModelKind kind) { return kind == ModelKind::analytic ? "analytic" : "tiny_dit"; }

ModelKind model_kind_from_string(const std::string& name) {
    if (name == "analytic") return ModelKind::analytic;
    if (name == "tiny_dit") return ModelKind::tiny_dit;
    throw ConfigError("unknown model '" + name + "'");
}

void ExperimentConfig::validate() const {
    sampler.validate();
    cache.validate();
    if (latent.numel() == 0) throw ConfigError("latent shape " + latent.str() + " is empty");
    if (repetitions < 1) throw ConfigError("repetitions must be at least 1");
    if (sampler.condition_id == kNullCondition) throw ConfigError("condition_id 0 is the null condition");
    if (model == ModelKind::analytic) {
        if (analytic.conditions < 2) throw ConfigError("analytic world needs at least two conditions");
        if (!(analytic.variance >= 0.0)) throw ConfigError("analytic variance must be non-negative");
        if (static_cast<std::size_t>(sampler.condition_id) >= analytic.conditions) {
            throw ConfigError("condition_id " + std::to_string(sampler.condition_id) + " outside the analytic world");
        }
        if (!weights.empty()) throw ConfigError("weights only apply to the tiny_dit model");
    } else {
        tiny_dit.validate(latent);
        if (static_cast<std::size_t>(sampler.condition_id) >= tiny_dit.condition_vocab) {
            throw ConfigError("condition_id " + std::to_string(sampler.condition_id) + " outside the condition vocabulary");
        }
    }
}

namespace {

void check_keys(const json& j, const char* where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(std::string(where) + ": expected a JSON object");
    for (const auto& item : j.items()) {
        const bool known =
            std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; });
        if (!known) throw ConfigError(std::string(where) + ": unknown key '" + item.key() + "'");
    }
}

template <class T>
void read(const json& j, const char* key, T& out, const char* where) {
    auto it = j.find(key);
    if (it == j.end()) return;
    try {
        out = it->template get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string(where) + "." + key + ": wrong type");
    }
}

template <class E, class Parse>
void read_enum(const json& j, const char* key, E& out, const char* where, Parse parse) {
    std::string name;
    if (!j.contains(key)) return;
    read(j, key, name, where);
    out = parse(name);
}

void read_count(const json& j, const char* key, std::size_t& out, const char* where) {
    std::int64_t v = static_cast<std::int64_t>(out);
    read(j, key, v, where);
    if (v < 0) throw ConfigError(std::string(where) + "." + key + " must be non-negative");
    out = static_cast<std::size_t>(v);
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    check_keys(j, "config",
               {"schema_version", "model", "analytic", "tiny_dit", "weights", "latent", "sampler", "cache", "strategy",
                "repetitions", "output_dir"});
    if (j.contains("schema_version")) {
        int version = 0;
        read(j, "schema_version", version, "config");
        if (version != kSchemaVersion) throw ConfigError("config: unsupported schema_version " + std::to_string(version));
    }
    read_enum(j, "model", c.model, "config", model_kind_from_string);
    read(j, "weights", c.weights, "config");
    read(j, "repetitions", c.repetitions, "config");
    read(j, "output_dir", c.output_dir, "config");
    read_enum(j, "strategy", c.strategy, "config", strategy_from_string);

    if (j.contains("analytic")) {
        const json& a = j.at("analytic");
        check_keys(a, "analytic", {"conditions", "variance", "world_seed"});
        read_count(a, "conditions", c.analytic.conditions, "analytic");
        read(a, "variance", c.analytic.variance, "analytic");
        read(a, "world_seed", c.analytic.world_seed, "analytic");
    }
    if (j.contains("tiny_dit")) {
        const json& t = j.at("tiny_dit");
        check_keys(t, "tiny_dit",
                   {"layers", "embed_dim", "heads", "patch", "channels", "condition_vocab", "condition_tokens", "init_seed"});
        read_count(t, "layers", c.tiny_dit.layers, "tiny_dit");
        read_count(t, "embed_dim", c.tiny_dit.embed_dim, "tiny_dit");
        read_count(t, "heads", c.tiny_dit.heads, "tiny_dit");
        read_count(t, "patch", c.tiny_dit.patch, "tiny_dit");
        read_count(t, "channels", c.tiny_dit.channels, "tiny_dit");
        read_count(t, "condition_vocab", c.tiny_dit.condition_vocab, "tiny_dit");
        read_count(t, "condition_tokens", c.tiny_dit.condition_tokens, "tiny_dit");
        read(t, "init_seed", c.tiny_dit.init_seed, "tiny_dit");
    }
    if (j.contains("latent")) {
        const json& l = j.at("latent");
        check_keys(l, "latent", {"frames", "channels", "height", "width"});
        read_count(l, "frames", c.latent.frames, "latent");
        read_count(l, "channels", c.latent.channels, "latent");
        read_count(l, "height", c.latent.height, "latent");
        read_count(l, "width", c.latent.width, "latent");
    }
    if (j.contains("sampler")) {
        const json& s = j.at("sampler");
        check_keys(s, "sampler",
                   {"steps", "guidance_scale", "seed", "condition_id", "schedule_kind", "timesteps", "mode"});
        read(s, "steps", c.sampler.steps, "sampler");
        read(s, "guidance_scale", c.sampler.guidance_scale, "sampler");
        read(s, "seed", c.sampler.seed, "sampler");
        read(s, "condition_id", c.sampler.condition_id, "sampler");
        read_enum(s, "schedule_kind", c.sampler.schedule_kind, "sampler", schedule_kind_from_string);
        read(s, "timesteps", c.sampler.timesteps, "sampler");
        read_enum(s, "mode", c.sampler.mode, "sampler", sampler_mode_from_string);
    }
    if (j.contains("cache")) {
        const json& k = j.at("cache");
        check_keys(k, "cache",
                   {"dfr_interval", "dfr_weight_mode", "dfr_constant_weight", "cfg_start_fraction", "cfg_interval",
                    "alpha1", "alpha2", "t0_fraction", "rho"});
        read(k, "dfr_interval", c.cache.dfr_interval, "cache");
        read_enum(k, "dfr_weight_mode", c.cache.dfr_weight_mode, "cache", weight_mode_from_string);
        read(k, "dfr_constant_weight", c.cache.dfr_constant_weight, "cache");
        read(k, "cfg_start_fraction", c.cache.cfg_start_fraction, "cache");
        read(k, "cfg_interval", c.cache.cfg_interval, "cache");
        read(k, "alpha1", c.cache.alpha1, "cache");
        read(k, "alpha2", c.cache.alpha2, "cache");
        read(k, "t0_fraction", c.cache.t0_fraction, "cache");
        read(k, "rho", c.cache.rho, "cache");
    }
    c.validate();
    return c;
}

json to_json(const ExperimentConfig& c) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["model"] = to_string(c.model);
    j["analytic"] = {{"conditions", c.analytic.conditions},
                     {"variance", c.analytic.variance},
                     {"world_seed", c.analytic.world_seed}};
    j["tiny_dit"] = {{"layers", c.tiny_dit.layers},
                     {"embed_dim", c.tiny_dit.embed_dim},
                     {"heads", c.tiny_dit.heads},
                     {"patch", c.tiny_dit.patch},
                     {"channels", c.tiny_dit.channels},
                     {"condition_vocab", c.tiny_dit.condition_vocab},
                     {"condition_tokens", c.tiny_dit.condition_tokens},
                     {"init_seed", c.tiny_dit.init_seed}};
    j["weights"] = c.weights;
    j["latent"] = {{"frames", c.latent.frames},
                   {"channels", c.latent.channels},
                   {"height", c.latent.height},
                   {"width", c.latent.width}};
    j["sampler"] = {{"steps", c.sampler.steps},
                    {"guidance_scale", c.sampler.guidance_scale},
                    {"seed", c.sampler.seed},
                    {"condition_id", c.sampler.condition_id},
                    {"schedule_kind", to_string(c.sampler.schedule_kind)},
                    {"timesteps", c.sampler.timesteps},
                    {"mode", to_string(c.sampler.mode)}};
    j["cache"] = {{"dfr_interval", c.cache.dfr_interval},
                  {"dfr_weight_mode", to_string(c.cache.dfr_weight_mode)},
                  {"dfr_constant_weight", c.cache.dfr_constant_weight},
                  {"cfg_start_fraction", c.cache.cfg_start_fraction},
                  {"cfg_interval", c.cache.cfg_interval},
                  {"alpha1", c.cache.alpha1},
                  {"alpha2", c.cache.alpha2},
                  {"t0_fraction", c.cache.t0_fraction},
                  {"rho", c.cache.rho}};
    j["strategy"] = to_string(c.strategy);
    j["repetitions"] = c.repetitions;
    j["output_dir"] = c.output_dir;
    return j;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

std::unique_ptr<NoisePredictor> make_model(const ExperimentConfig& config) {
    config.validate();
    if (config.model == ModelKind::analytic) {
        GaussianWorld world = make_gaussian_world(config.latent, config.analytic.conditions, config.analytic.variance,
                                                  config.analytic.world_seed);
        return std::make_unique<AnalyticDenoiser>(std::move(world),
                                                  make_schedule(config.sampler.schedule_kind, config.sampler.timesteps));
    }
    if (!config.weights.empty()) {
        TinyDiT model = TinyDiT::load(config.weights);
        model.config().validate(config.latent);
        return std::make_unique<TinyDiT>(std::move(model));
    }
    return std::make_unique<TinyDiT>(config.tiny_dit);
}

LatencyStats summarize_latency(std::vector<double> samples) {
    LatencyStats out;
    if (samples.empty()) return out;
    out.samples = samples;
    const double n = static_cast<double>(samples.size());
    out.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
    double var = 0.0;
    for (double s : samples) var += (s - out.mean) * (s - out.mean);
    out.stddev = samples.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
    std::sort(samples.begin(), samples.end());
    const std::size_t mid = samples.size() / 2;
    out.median = samples.size() % 2 ? samples[mid] : 0.5 * (samples[mid - 1] + samples[mid]);
    return out;
}

double StrategyReport::mac_ratio() const {
    return reference_macs == 0 ? 0.0 : static_cast<double>(total_macs) / static_cast<double>(reference_macs);
}

namespace {

std::uint64_t fnv1a(const Tensor4& t) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (float v : t.data()) {
        unsigned char bytes[sizeof(float)];
        std::memcpy(bytes, &v, sizeof(float));
        for (unsigned char b : bytes) {
            h ^= b;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

double value_range(const Tensor4& t) {
    const auto data = t.data();
    const auto [lo, hi] = std::minmax_element(data.begin(), data.end());
    const double range = static_cast<double>(*hi) - static_cast<double>(*lo);
    return range > 0.0 ? range : 1.0;
}

SampleResult record_run(const NoisePredictor& model, const ExperimentConfig& config, Strategy strategy) {
    return sample(model, config.latent, config.sampler, {strategy, config.cache});
}

// The recorded runs double as the warm-up. Repetitions go round-robin across
// strategies so drift in machine load hits them all alike; timed runs skip
// feature snapshots and must reproduce the recorded sample.
std::vector<LatencyStats> time_round_robin(const NoisePredictor& model, const ExperimentConfig& config,
                                           const std::vector<Strategy>& strategies,
                                           const std::vector<const SampleResult*>& recorded) {
    SamplerConfig timed = config.sampler;
    timed.record_features = false;
    std::vector<std::vector<double>> samples(strategies.size());
    for (int r = 0; r < config.repetitions; ++r) {
        for (std::size_t i = 0; i < strategies.size(); ++i) {
            const auto start = std::chrono::steady_clock::now();
            const SampleResult again = sample(model, config.latent, timed, {strategies[i], config.cache});
            const auto stop = std::chrono::steady_clock::now();
            if (!(again.x_final == recorded[i]->x_final)) throw std::runtime_error("sampler is not deterministic");
            samples[i].push_back(std::chrono::duration<double>(stop - start).count());
        }
    }
    std::vector<LatencyStats> out;
    for (auto& s : samples) out.push_back(summarize_latency(std::move(s)));
    return out;
}

void set_timing(StrategyReport& entry, const LatencyStats& own, const LatencyStats& ref) {
    entry.latency = own;
    entry.speedup = own.median > 0.0 ? ref.median / own.median : 1.0;
}

std::uint64_t total_macs(const StepTrace& trace) {
    std::uint64_t total = 0;
    for (const auto& r : trace) total += r.macs;
    return total;
}

StrategyReport evaluate(const NoisePredictor& model, const ExperimentConfig& config, Strategy strategy,
                        const SampleResult& r, const SampleResult& ref, double peak) {
    StrategyReport out;
    out.strategy = strategy;
    out.label = to_string(strategy);
    out.total_macs = total_macs(r.trace);
    out.reference_macs = total_macs(ref.trace);
    out.predicted_macs = predicted_macs(r.plan, model.mac_breakdown(config.latent));
    for (const auto& rec : r.trace) out.full_attention_evals += rec.full_attention_evals;
    out.predicted_full_attention_evals = r.plan.full_attention_evaluations();
    out.uncond_evals = r.plan.uncond_evaluations();
    out.reconstructed_uncond_steps = r.plan.reconstructed_uncond_steps();

    const Tensor4& a = r.x_final;
    const Tensor4& b = ref.x_final;
    out.mse = mse(a, b);
    out.psnr = psnr(a, b, peak);
    const bool ssim_ok = a.shape().height >= kSsimWindow && a.shape().width >= kSsimWindow;
    out.ssim = ssim_ok ? ssim(a, b, peak) : std::nan("");

    for (std::size_t s = 0; s < r.trace.size(); ++s) {
        const auto& fa = r.trace[s].cond_features;
        const auto& fb = ref.trace[s].cond_features;
        double acc = 0.0;
        for (std::size_t l = 0; l < fa.size() && l < fb.size(); ++l) acc += mse(fa[l], fb[l]);
        out.feature_mse.push_back(fa.empty() ? 0.0 : acc / static_cast<double>(fa.size()));
    }
    out.bias_trend = bias_frequency_trend(r.trace, config.cache.rho);
    out.step0_digest = fnv1a(r.trace.front().eps_cond);
    return out;
}

RunReport start_report(const std::string& command, const ExperimentConfig& config, const SampleResult& ref) {
    RunReport report;
    report.command = command;
    report.config = config;
    report.peak = value_range(ref.x_final);
    report.reference_bias_trend = bias_frequency_trend(ref.trace, config.cache.rho);
    return report;
}

}  // namespace

namespace {

// Records `strategies` (the first must be no_cache), reporting each entry as
// soon as it is evaluated, then times them all and fills in the latencies.
RunReport compare_strategies(const std::string& command, const ExperimentConfig& config,
                             const std::vector<Strategy>& strategies,
                             const std::function<void(const RunReport&)>& on_entry) {
    const auto model = make_model(config);
    std::vector<SampleResult> results;
    results.reserve(strategies.size());
    RunReport report;
    for (Strategy s : strategies) {
        results.push_back(record_run(*model, config, s));
        if (results.size() == 1) report = start_report(command, config, results.front());
        report.entries.push_back(evaluate(*model, config, s, results.back(), results.front(), report.peak));
        if (on_entry) on_entry(report);
    }
    std::vector<const SampleResult*> recorded;
    for (const auto& r : results) recorded.push_back(&r);
    const auto latency = time_round_robin(*model, config, strategies, recorded);
    for (std::size_t i = 0; i < strategies.size(); ++i) set_timing(report.entries[i], latency[i], latency[0]);
    return report;
}

}  // namespace

RunReport run(const ExperimentConfig& config) {
    config.validate();
    std::vector<Strategy> strategies{Strategy::no_cache};
    if (config.strategy != Strategy::no_cache) strategies.push_back(config.strategy);
    return compare_strategies("run", config, strategies, {});
}

RunReport ablate(const ExperimentConfig& config, const std::function<void(const RunReport&)>& on_entry) {
    config.validate();
    return compare_strategies("ablate", config, {kAllStrategies.begin(), kAllStrategies.end()}, on_entry);
}

RunReport compare(const ExperimentConfig& config, std::vector<Strategy> strategies) {
    config.validate();
    std::erase(strategies, Strategy::no_cache);
    strategies.insert(strategies.begin(), Strategy::no_cache);
    return compare_strategies("compare", config, strategies, {});
}

ExperimentConfig with_parameter(ExperimentConfig config, const std::string& name, double value) {
    auto as_interval = [&](int& slot) {
        if (!(value >= 1.0) || std::floor(value) != value) {
            throw ConfigError(name + " must be a positive integer, got " + std::to_string(value));
        }
        slot = static_cast<int>(value);
    };
    if (name == "dfr_interval") {
        as_interval(config.cache.dfr_interval);
    } else if (name == "cfg_interval") {
        as_interval(config.cache.cfg_interval);
    } else if (name == "alpha1") {
        config.cache.alpha1 = value;
    } else if (name == "alpha2") {
        config.cache.alpha2 = value;
    } else if (name == "rho") {
        config.cache.rho = value;
    } else if (name == "t0_fraction") {
        config.cache.t0_fraction = value;
    } else if (name == "g") {
        config.sampler.guidance_scale = value;
    } else {
        throw ConfigError("unknown sweep parameter '" + name + "'");
    }
    config.validate();
    return config;
}

RunReport sweep(const ExperimentConfig& config, const std::string& parameter, const std::vector<double>& values) {
    config.validate();
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    for (double v : values) with_parameter(config, parameter, v);

    const auto model = make_model(config);
    RunReport report;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const ExperimentConfig c = with_parameter(config, parameter, values[i]);
        const SampleResult ref = record_run(*model, c, Strategy::no_cache);
        const SampleResult res = record_run(*model, c, c.strategy);
        const auto latency = time_round_robin(*model, c, {Strategy::no_cache, c.strategy}, {&ref, &res});
        const double peak = value_range(ref.x_final);
        if (i == 0) {
            report = start_report("sweep", config, ref);
            report.sweep_parameter = parameter;
        }
        // Only the guidance scale changes the reference sample itself.
        if (parameter == "g" || i == 0) {
            StrategyReport base = evaluate(*model, c, Strategy::no_cache, ref, ref, peak);
            set_timing(base, latency[0], latency[0]);
            if (parameter == "g") base.sweep_value = values[i];
            report.entries.push_back(std::move(base));
        }
        StrategyReport row = evaluate(*model, c, c.strategy, res, ref, peak);
        set_timing(row, latency[1], latency[0]);
        row.sweep_value = values[i];
        report.entries.push_back(std::move(row));
    }
    return report;
}

}  // namespace cachediff
