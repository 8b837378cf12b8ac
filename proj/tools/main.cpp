// cachediff command-line harness.
//
//   cachediff run     --seed 0 --steps 30 --strategy fastercache --out results/
//   cachediff ablate  --config experiment.json
//   cachediff sweep   --config experiment.json --param cfg_interval --values 1,3,5,7
//   cachediff plot    results/run_fastercache.json --out plots/
//   cachediff plan-dump --steps 30 --strategy fastercache
//
// Exit codes: 0 success, 2 configuration error, 3 runtime failure.

#include "cachediff/cache_engine.hpp"
#include "cachediff/error.hpp"
#include "cachediff/experiment.hpp"
#include "cachediff/report.hpp"
#include "cachediff/svg_plot.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace cachediff;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Overrides {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> steps;
    std::optional<std::string> strategy;
    std::optional<std::string> out;
    std::optional<std::string> model;
    std::optional<std::string> weights;
    std::optional<std::string> schedule;
    std::optional<std::string> mode;
    std::optional<double> guidance;
    std::optional<int> condition;
    std::optional<int> repetitions;
    std::optional<std::vector<std::size_t>> latent;
    std::optional<double> variance;
    std::optional<std::uint64_t> world_seed;
    std::optional<int> dfr_interval;
    std::optional<std::string> weight_mode;
    std::optional<double> constant_weight;
    std::optional<double> cfg_start_fraction;
    std::optional<int> cfg_interval;
    std::optional<double> alpha1;
    std::optional<double> alpha2;
    std::optional<double> t0_fraction;
    std::optional<double> rho;
};

void add_common(CLI::App* cmd, Overrides& o, bool with_strategy, bool with_out) {
    cmd->add_option("--config", o.config_path, "JSON experiment config")->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "sampler seed");
    cmd->add_option("--steps", o.steps, "sampling steps S");
    if (with_strategy) cmd->add_option("--strategy", o.strategy, "no_cache|vanilla_fr|dynamic_fr|cfg_cache_only|fastercache|cond_copy|stale_uncond");
    if (with_out) cmd->add_option("--out", o.out, std::string("output directory (default: $") + kOutputDirEnv + ")");
    cmd->add_option("--model", o.model, "analytic|tiny_dit");
    cmd->add_option("--weights", o.weights, "tiny_dit weight file stem (<stem>.bin + <stem>.json)");
    cmd->add_option("--schedule", o.schedule, "linear_beta|cosine");
    cmd->add_option("--mode", o.mode, "ddim|ancestral");
    cmd->add_option("--guidance", o.guidance, "guidance scale g");
    cmd->add_option("--condition", o.condition, "condition id (0 is the null condition)");
    cmd->add_option("--repetitions", o.repetitions, "timed repetitions after one warm-up");
    cmd->add_option("--latent", o.latent, "latent shape F,C,H,W")->delimiter(',')->expected(4);
    cmd->add_option("--variance", o.variance, "analytic world data variance");
    cmd->add_option("--world-seed", o.world_seed, "analytic world seed");
    cmd->add_option("--dfr-interval", o.dfr_interval, "full attention every n-th step");
    cmd->add_option("--weight-mode", o.weight_mode, "linear|constant|none");
    cmd->add_option("--constant-weight", o.constant_weight, "w for --weight-mode constant");
    cmd->add_option("--cfg-start-fraction", o.cfg_start_fraction, "fraction of S before CFG reuse starts");
    cmd->add_option("--cfg-interval", o.cfg_interval, "bias refresh every n-th step");
    cmd->add_option("--alpha1", o.alpha1, "low-frequency enhancement");
    cmd->add_option("--alpha2", o.alpha2, "high-frequency enhancement");
    cmd->add_option("--t0-fraction", o.t0_fraction, "switch point inside the CFG reuse span");
    cmd->add_option("--rho", o.rho, "low/high radial cutoff");
}

template <class T>
void set(T& slot, const std::optional<T>& value) {
    if (value) slot = *value;
}

ExperimentConfig resolve(const Overrides& o, bool need_strategy, bool need_out) {
    ExperimentConfig c;
    if (!o.config_path.empty()) {
        c = load_config(o.config_path);
    } else {
        std::vector<std::string> missing;
        if (!o.seed) missing.push_back("--seed");
        if (!o.steps) missing.push_back("--steps");
        if (need_strategy && !o.strategy) missing.push_back("--strategy");
        if (need_out && !o.out && !std::getenv(kOutputDirEnv)) missing.push_back("--out");
        if (!missing.empty()) {
            std::string list;
            for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
            throw ConfigError("without --config these flags are required: " + list);
        }
    }
    set(c.sampler.seed, o.seed);
    set(c.sampler.steps, o.steps);
    if (o.strategy) c.strategy = strategy_from_string(*o.strategy);
    if (o.model) c.model = model_kind_from_string(*o.model);
    set(c.weights, o.weights);
    if (o.schedule) c.sampler.schedule_kind = schedule_kind_from_string(*o.schedule);
    if (o.mode) c.sampler.mode = sampler_mode_from_string(*o.mode);
    set(c.sampler.guidance_scale, o.guidance);
    set(c.sampler.condition_id, o.condition);
    set(c.repetitions, o.repetitions);
    if (o.latent) c.latent = {(*o.latent)[0], (*o.latent)[1], (*o.latent)[2], (*o.latent)[3]};
    set(c.analytic.variance, o.variance);
    set(c.analytic.world_seed, o.world_seed);
    set(c.cache.dfr_interval, o.dfr_interval);
    if (o.weight_mode) c.cache.dfr_weight_mode = weight_mode_from_string(*o.weight_mode);
    set(c.cache.dfr_constant_weight, o.constant_weight);
    set(c.cache.cfg_start_fraction, o.cfg_start_fraction);
    set(c.cache.cfg_interval, o.cfg_interval);
    set(c.cache.alpha1, o.alpha1);
    set(c.cache.alpha2, o.alpha2);
    set(c.cache.t0_fraction, o.t0_fraction);
    set(c.cache.rho, o.rho);
    if (o.out) {
        c.output_dir = *o.out;
    } else if (c.output_dir.empty()) {
        if (const char* env = std::getenv(kOutputDirEnv)) c.output_dir = env;
    }
    if (need_out && c.output_dir.empty()) throw ConfigError("no output directory: pass --out or set " + std::string(kOutputDirEnv));
    c.validate();
    return c;
}

void print_summary(const RunReport& report, const fs::path& json_path) {
    std::cout << summary_csv(report) << "report: " << json_path.string() << '\n';
}

int cmd_plot(const std::vector<std::string>& reports, std::optional<std::string> out) {
    if (reports.empty()) throw ConfigError("plot needs at least one report");
    for (const auto& path : reports) {
        if (!fs::exists(path)) throw ConfigError("report '" + path + "' does not exist");
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_text(path));
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError("report '" + path + "' is not valid JSON: " + e.what());
        }
        const RunReport report = report_from_json(j);
        const fs::path dir = out ? fs::path(*out) : fs::path(path).parent_path();
        std::error_code ec;
        fs::create_directories(dir.empty() ? fs::path(".") : dir, ec);
        if (ec) throw std::runtime_error("cannot create '" + dir.string() + "': " + ec.message());
        const std::string stem = fs::path(path).stem().string();
        write_text(dir / (stem + "_feature_mse.svg"), feature_mse_plot(report));
        write_text(dir / (stem + "_bias_trend.svg"), bias_trend_plot(report));
        write_text(dir / (stem + "_cost.svg"), cost_plot(report));
        std::cout << "plots: " << (dir / (stem + "_*.svg")).string() << '\n';
    }
    return 0;
}

int cmd_plan_dump(const Overrides& o) {
    ExperimentConfig c;
    if (!o.config_path.empty()) {
        c = load_config(o.config_path);
    } else if (!o.steps || !o.strategy) {
        throw ConfigError("without --config plan-dump requires --steps and --strategy");
    }
    set(c.sampler.steps, o.steps);
    if (o.strategy) c.strategy = strategy_from_string(*o.strategy);
    set(c.cache.dfr_interval, o.dfr_interval);
    if (o.weight_mode) c.cache.dfr_weight_mode = weight_mode_from_string(*o.weight_mode);
    set(c.cache.cfg_start_fraction, o.cfg_start_fraction);
    set(c.cache.cfg_interval, o.cfg_interval);
    c.validate();
    const CacheStrategy cs{c.strategy, c.cache};
    const std::string csv =
        with_schema_header(plan_to_csv(cs.plan(c.sampler.steps), sampling_timesteps(c.sampler.steps, c.sampler.timesteps)));
    if (o.out) {
        const fs::path path(*o.out);
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        write_text(path, csv);
    } else {
        std::cout << csv;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Feature and guidance caching for diffusion sampling: experiments, sweeps and plots"};
    app.require_subcommand(1);

    Overrides run_o, ablate_o, sweep_o, plan_o;
    auto* run_cmd = app.add_subcommand("run", "run one strategy against the no_cache reference");
    add_common(run_cmd, run_o, true, true);

    auto* ablate_cmd = app.add_subcommand("ablate", "run every strategy with shared seeds");
    add_common(ablate_cmd, ablate_o, false, true);

    std::string param;
    std::vector<double> values;
    auto* sweep_cmd = app.add_subcommand("sweep", "sweep one parameter of the chosen strategy");
    add_common(sweep_cmd, sweep_o, true, true);
    sweep_cmd->add_option("--param", param, "dfr_interval|cfg_interval|alpha1|alpha2|rho|t0_fraction|g")->required();
    sweep_cmd->add_option("--values", values, "comma-separated values")->delimiter(',')->required();

    std::vector<std::string> report_paths;
    std::optional<std::string> plot_out;
    auto* plot_cmd = app.add_subcommand("plot", "render SVG charts from report JSON files");
    plot_cmd->add_option("reports", report_paths, "report JSON files")->required();
    plot_cmd->add_option("--out", plot_out, "output directory (default: next to each report)");

    auto* plan_cmd = app.add_subcommand("plan-dump", "print the step plan as CSV");
    plan_cmd->add_option("--config", plan_o.config_path, "JSON experiment config")->check(CLI::ExistingFile);
    plan_cmd->add_option("--steps", plan_o.steps, "sampling steps S");
    plan_cmd->add_option("--strategy", plan_o.strategy, "strategy whose plan to dump");
    plan_cmd->add_option("--dfr-interval", plan_o.dfr_interval, "full attention every n-th step");
    plan_cmd->add_option("--cfg-start-fraction", plan_o.cfg_start_fraction, "fraction of S before CFG reuse starts");
    plan_cmd->add_option("--cfg-interval", plan_o.cfg_interval, "bias refresh every n-th step");
    plan_cmd->add_option("--out", plan_o.out, "CSV file (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*run_cmd) {
            const ExperimentConfig c = resolve(run_o, true, true);
            const RunReport report = run(c);
            print_summary(report, write_report(report, c.output_dir, "run_" + to_string(c.strategy)));
        } else if (*ablate_cmd) {
            const ExperimentConfig c = resolve(ablate_o, false, true);
            // Persist after every variant so a failure keeps what finished.
            const RunReport report =
                ablate(c, [&](const RunReport& partial) { write_report(partial, c.output_dir, "ablate"); });
            print_summary(report, write_report(report, c.output_dir, "ablate"));
        } else if (*sweep_cmd) {
            const ExperimentConfig c = resolve(sweep_o, true, true);
            const RunReport report = sweep(c, param, values);
            print_summary(report, write_report(report, c.output_dir, "sweep_" + param));
        } else if (*plot_cmd) {
            return cmd_plot(report_paths, plot_out);
        } else if (*plan_cmd) {
            return cmd_plan_dump(plan_o);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return 0;
}
