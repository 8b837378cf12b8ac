#include "cachediff/report.hpp"

#include "cachediff/error.hpp"
#include "cachediff/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace cachediff {

using nlohmann::json;

namespace {

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or_nan(const json& j) { return j.is_number() ? j.get<double>() : std::nan(""); }

std::string hex64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

json trend_json(const std::vector<BiasEnergy>& trend) {
    json out = json::array();
    for (const auto& e : trend) out.push_back({{"t", e.t}, {"low_energy", e.low_energy}, {"high_energy", e.high_energy}});
    return out;
}

std::vector<BiasEnergy> trend_from_json(const json& j) {
    std::vector<BiasEnergy> out;
    for (const auto& e : j) out.push_back({e.at("t").get<int>(), e.at("low_energy").get<double>(), e.at("high_energy").get<double>()});
    return out;
}

// Shortest decimal that round-trips, so CSV cells match the JSON numbers.
std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return json(v).dump();
}

}  // namespace

json to_json(const StrategyReport& e) {
    json j;
    j["label"] = e.label;
    j["strategy"] = to_string(e.strategy);
    if (e.sweep_value) j["sweep_value"] = *e.sweep_value;
    j["macs"] = {{"total", e.total_macs},
                 {"predicted", e.predicted_macs},
                 {"reference", e.reference_macs},
                 {"ratio", e.mac_ratio()}};
    j["evals"] = {{"full_attention", e.full_attention_evals},
                  {"predicted_full_attention", e.predicted_full_attention_evals},
                  {"uncond", e.uncond_evals},
                  {"reconstructed_uncond", e.reconstructed_uncond_steps}};
    j["fidelity"] = {{"mse", finite_or_null(e.mse)},
                     {"psnr", finite_or_null(e.psnr)},
                     {"psnr_infinite", e.psnr == kInfinitePsnr},
                     {"ssim", finite_or_null(e.ssim)}};
    j["feature_mse"] = e.feature_mse;
    j["bias_trend"] = trend_json(e.bias_trend);
    j["step0_digest"] = hex64(e.step0_digest);
    j["timing"] = {{"latency_mean_s", e.latency.mean},
                   {"latency_median_s", e.latency.median},
                   {"latency_stddev_s", e.latency.stddev},
                   {"samples_s", e.latency.samples},
                   {"speedup", e.speedup}};
    return j;
}

json to_json(const RunReport& r) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["command"] = r.command;
    if (!r.sweep_parameter.empty()) j["sweep_parameter"] = r.sweep_parameter;
    j["config"] = to_json(r.config);
    j["peak"] = r.peak;
    j["reference_bias_trend"] = trend_json(r.reference_bias_trend);
    j["entries"] = json::array();
    for (const auto& e : r.entries) j["entries"].push_back(to_json(e));
    return j;
}

RunReport report_from_json(const json& j) {
    try {
        if (j.at("schema_version").get<int>() != kSchemaVersion) {
            throw ConfigError("unsupported report schema_version");
        }
        RunReport r;
        r.command = j.at("command").get<std::string>();
        r.sweep_parameter = j.value("sweep_parameter", std::string());
        r.config = config_from_json(j.at("config"));
        r.peak = j.at("peak").get<double>();
        r.reference_bias_trend = trend_from_json(j.at("reference_bias_trend"));
        for (const auto& je : j.at("entries")) {
            StrategyReport e;
            e.label = je.at("label").get<std::string>();
            e.strategy = strategy_from_string(je.at("strategy").get<std::string>());
            if (je.contains("sweep_value")) e.sweep_value = je.at("sweep_value").get<double>();
            const json& m = je.at("macs");
            e.total_macs = m.at("total").get<std::uint64_t>();
            e.predicted_macs = m.at("predicted").get<std::uint64_t>();
            e.reference_macs = m.at("reference").get<std::uint64_t>();
            const json& ev = je.at("evals");
            e.full_attention_evals = ev.at("full_attention").get<int>();
            e.predicted_full_attention_evals = ev.at("predicted_full_attention").get<int>();
            e.uncond_evals = ev.at("uncond").get<int>();
            e.reconstructed_uncond_steps = ev.at("reconstructed_uncond").get<int>();
            const json& f = je.at("fidelity");
            e.mse = number_or_nan(f.at("mse"));
            e.psnr = f.at("psnr_infinite").get<bool>() ? kInfinitePsnr : number_or_nan(f.at("psnr"));
            e.ssim = number_or_nan(f.at("ssim"));
            e.feature_mse = je.at("feature_mse").get<std::vector<double>>();
            e.bias_trend = trend_from_json(je.at("bias_trend"));
            try {
                e.step0_digest = std::stoull(je.at("step0_digest").get<std::string>(), nullptr, 16);
            } catch (const std::logic_error&) {
                throw ConfigError("malformed report: bad step0_digest");
            }
            const json& t = je.at("timing");
            e.latency.mean = t.at("latency_mean_s").get<double>();
            e.latency.median = t.at("latency_median_s").get<double>();
            e.latency.stddev = t.at("latency_stddev_s").get<double>();
            e.latency.samples = t.at("samples_s").get<std::vector<double>>();
            e.speedup = t.at("speedup").get<double>();
            r.entries.push_back(std::move(e));
        }
        return r;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed report: ") + e.what());
    }
}

json strip_timing(json j) {
    if (j.is_object()) {
        j.erase("timing");
        for (auto& [key, value] : j.items()) value = strip_timing(value);
    } else if (j.is_array()) {
        for (auto& value : j) value = strip_timing(value);
    }
    return j;
}

std::string summary_csv(const RunReport& r) {
    std::ostringstream os;
    os << "label,strategy,sweep_value,total_macs,predicted_macs,mac_ratio,full_attention_evals,uncond_evals,"
          "latency_median_s,latency_stddev_s,speedup,mse,psnr,ssim\n";
    for (const auto& e : r.entries) {
        os << e.label << ',' << to_string(e.strategy) << ',' << (e.sweep_value ? num(*e.sweep_value) : "") << ','
           << e.total_macs << ',' << e.predicted_macs << ',' << num(e.mac_ratio()) << ',' << e.full_attention_evals
           << ',' << e.uncond_evals << ',' << num(e.latency.median) << ',' << num(e.latency.stddev) << ','
           << num(e.speedup) << ',' << num(e.mse) << ',' << num(e.psnr) << ',' << num(e.ssim) << '\n';
    }
    return os.str();
}

std::string feature_mse_csv(const RunReport& r) {
    std::ostringstream os;
    os << "step";
    for (const auto& e : r.entries) {
        os << ',' << e.label;
        if (e.sweep_value) os << '@' << num(*e.sweep_value);
    }
    os << '\n';
    std::size_t steps = 0;
    for (const auto& e : r.entries) steps = std::max(steps, e.feature_mse.size());
    for (std::size_t s = 0; s < steps; ++s) {
        os << s;
        for (const auto& e : r.entries) os << ',' << (s < e.feature_mse.size() ? num(e.feature_mse[s]) : "");
        os << '\n';
    }
    return os.str();
}

std::string bias_trend_csv(const std::vector<BiasEnergy>& trend) {
    std::ostringstream os;
    os << "t,low_energy,high_energy\n";
    for (const auto& e : trend) os << e.t << ',' << num(e.low_energy) << ',' << num(e.high_energy) << '\n';
    return os.str();
}

std::string with_schema_header(const std::string& csv) {
    return "# schema_version: " + std::to_string(kSchemaVersion) + "\n" + csv;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << text;
    out.close();
    if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::filesystem::path write_report(const RunReport& report, const std::filesystem::path& dir, const std::string& stem) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory '" + dir.string() + "': " + ec.message());
    const auto json_path = dir / (stem + ".json");
    write_text(json_path, to_json(report).dump(2) + "\n");
    write_text(dir / (stem + "_summary.csv"), with_schema_header(summary_csv(report)));
    write_text(dir / (stem + "_feature_mse.csv"), with_schema_header(feature_mse_csv(report)));
    write_text(dir / (stem + "_bias_trend.csv"), with_schema_header(bias_trend_csv(report.reference_bias_trend)));
    return json_path;
}

}  // namespace cachediff
