#include "cachediff/cache_engine.hpp"
#include "cachediff/cfg_cache.hpp"
#include "cachediff/error.hpp"
#include "cachediff/experiment.hpp"
#include "cachediff/metrics.hpp"
#include "cachediff/report.hpp"
#include "cachediff/sampler.hpp"
#include "cachediff/spectral.hpp"

#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <complex>

namespace py = pybind11;
using namespace cachediff;

namespace {

using RealArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using ComplexArray = py::array_t<std::complex<float>, py::array::c_style | py::array::forcecast>;

Shape4 shape_of(const py::array& a) {
    if (a.ndim() != 4) throw ShapeError("expected a 4-D array (frames, channels, height, width), got " +
                                        std::to_string(a.ndim()) + " dimensions");
    return {static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
            static_cast<std::size_t>(a.shape(2)), static_cast<std::size_t>(a.shape(3))};
}

std::vector<py::ssize_t> dims(const Shape4& s) {
    return {static_cast<py::ssize_t>(s.frames), static_cast<py::ssize_t>(s.channels),
            static_cast<py::ssize_t>(s.height), static_cast<py::ssize_t>(s.width)};
}

Tensor4 to_tensor(const RealArray& a) {
    const Shape4 sh = shape_of(a);
    return Tensor4(sh, std::vector<float>(a.data(), a.data() + a.size()));
}

RealArray to_array(const Tensor4& t) {
    RealArray out(dims(t.shape()));
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

Spectrum to_spectrum(const ComplexArray& a, bool centered) {
    Spectrum s(shape_of(a), centered);
    std::copy(a.data(), a.data() + a.size(), s.data().begin());
    return s;
}

ComplexArray to_array(const Spectrum& s) {
    ComplexArray out(dims(s.shape()));
    std::copy(s.data().begin(), s.data().end(), out.mutable_data());
    return out;
}

Shape4 to_shape(const std::vector<std::size_t>& v) {
    if (v.size() != 4) throw ShapeError("shape must have four entries (frames, channels, height, width)");
    return {v[0], v[1], v[2], v[3]};
}

ExperimentConfig parse_config(const std::string& text) {
    nlohmann::json j;
    try {
        j = text.empty() ? nlohmann::json::object() : nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    ExperimentConfig c = config_from_json(j);
    c.validate();
    return c;
}

py::dict plan_dict(const StepPlan& plan) {
    py::list steps;
    for (const auto& d : plan.steps) {
        py::dict s;
        s["cond_full"] = d.cond_full;
        s["uncond_full"] = d.uncond_full;
        s["attn_reuse"] = d.attn_reuse;
        s["uncond_attn_reuse"] = d.uncond_attn_reuse;
        s["record_cfg_bias"] = d.record_cfg_bias;
        s["cache_features"] = d.cache_features;
        steps.append(s);
    }
    py::dict out;
    out["steps"] = steps;
    out["dfr_start"] = plan.dfr_start;
    out["cfg_start"] = plan.cfg_start;
    out["full_attention_evaluations"] = plan.full_attention_evaluations();
    out["uncond_evaluations"] = plan.uncond_evaluations();
    out["reconstructed_uncond_steps"] = plan.reconstructed_uncond_steps();
    return out;
}

py::dict mac_dict(const MacBreakdown& b) {
    py::dict out;
    out["base"] = b.base;
    out["layers"] = b.layers;
    out["full"] = b.full();
    return out;
}

class Model {
public:
    explicit Model(const std::string& config) : model_(make_model(parse_config(config))) {}

    std::string name() const { return model_->name(); }
    std::size_t layer_count() const { return model_->layer_count(); }

    py::tuple predict(const RealArray& x_t, int t, int condition) const {
        const Tensor4 x = to_tensor(x_t);
        std::uint64_t macs = 0;
        Tensor4 eps;
        {
            py::gil_scoped_release release;
            eps = model_->predict(x, t, condition, nullptr, &macs);
        }
        return py::make_tuple(to_array(eps), macs);
    }

    py::dict mac_breakdown(const std::vector<std::size_t>& shape) const { return mac_dict(model_->mac_breakdown(to_shape(shape))); }

private:
    std::unique_ptr<NoisePredictor> model_;
};

std::string report_text(const RunReport& r) { return to_json(r).dump(); }

RunReport parse_report(const std::string& text) { return report_from_json(nlohmann::json::parse(text)); }

}  // namespace

PYBIND11_MODULE(_cachediff, m) {
    m.doc() = "Feature and guidance caching for diffusion sampling";
    m.attr("SCHEMA_VERSION") = kSchemaVersion;
    m.attr("STRATEGIES") = [] {
        std::vector<std::string> names;
        for (Strategy s : kAllStrategies) names.push_back(to_string(s));
        return names;
    }();

    auto config_error = py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    (void)config_error;

    m.def("default_config", [] { return to_json(ExperimentConfig{}).dump(); }, "Default experiment config as JSON");
    m.def("normalize_config", [](const std::string& c) { return to_json(parse_config(c)).dump(); }, py::arg("config"),
          "Strict parse plus validation; returns the complete config JSON");

    m.def("fft2", [](const RealArray& x) { return to_array(fft2(to_tensor(x))); }, py::arg("x"),
          "Unnormalized 2-D DFT of every (frame, channel) plane, natural layout");
    m.def("ifft2", [](const ComplexArray& s) { return to_array(ifft2(to_spectrum(s, false))); }, py::arg("spectrum"),
          "Inverse of fft2; returns the real part");
    m.def("center_shift", [](const ComplexArray& s) { return to_array(center_shift(to_spectrum(s, false))); });
    m.def("center_unshift", [](const ComplexArray& s) { return to_array(center_unshift(to_spectrum(s, true))); });
    m.def(
        "make_masks",
        [](std::size_t h, std::size_t w, double cutoff) {
            const FrequencyMask mask = make_masks(h, w, cutoff);
            py::array_t<bool> low({h, w});
            py::array_t<bool> high({h, w});
            std::copy(mask.low.begin(), mask.low.end(), low.mutable_data());
            std::copy(mask.high.begin(), mask.high.end(), high.mutable_data());
            return py::make_tuple(low, high);
        },
        py::arg("height"), py::arg("width"), py::arg("cutoff"), "Centered low/high band masks");
    m.def(
        "split_frequency",
        [](const RealArray& x, double cutoff) {
            const FrequencySplit s = split_frequency(to_tensor(x), cutoff);
            return py::make_tuple(to_array(s.low), to_array(s.high));
        },
        py::arg("x"), py::arg("cutoff"), "Centered low and high band spectra");

    m.def(
        "build_plan",
        [](int steps, const std::string& strategy, const std::string& config) {
            const ExperimentConfig c = parse_config(config);
            return plan_dict(CacheStrategy{strategy_from_string(strategy), c.cache}.plan(steps));
        },
        py::arg("steps"), py::arg("strategy") = "fastercache", py::arg("config") = "");
    m.def(
        "plan_csv",
        [](int steps, const std::string& strategy, const std::string& config) {
            const ExperimentConfig c = parse_config(config);
            const StepPlan plan = CacheStrategy{strategy_from_string(strategy), c.cache}.plan(steps);
            return with_schema_header(plan_to_csv(plan, sampling_timesteps(steps, c.sampler.timesteps)));
        },
        py::arg("steps"), py::arg("strategy") = "fastercache", py::arg("config") = "");
    m.def(
        "w_of",
        [](int s, int reuse_start, int steps, const std::string& mode, double constant_weight) {
            return w_of(s, reuse_start, steps, weight_mode_from_string(mode), constant_weight);
        },
        py::arg("step"), py::arg("reuse_start"), py::arg("steps"), py::arg("mode") = "linear",
        py::arg("constant_weight") = 0.5);
    m.def(
        "dynamic_reuse",
        [](const RealArray& last, const RealArray& prev, double w) {
            return to_array(dynamic_reuse(to_tensor(last), to_tensor(prev), w));
        },
        py::arg("last"), py::arg("prev"), py::arg("w"), "last + (last - prev) * w");

    py::class_<CfgBiasCache>(m, "CfgBias")
        .def_property_readonly("delta_lf", [](const CfgBiasCache& b) { return to_array(b.delta_lf); })
        .def_property_readonly("delta_hf", [](const CfgBiasCache& b) { return to_array(b.delta_hf); })
        .def_readonly("recorded_step", &CfgBiasCache::recorded_step)
        .def_readonly("rho", &CfgBiasCache::rho)
        .def_property_readonly("low_energy", [](const CfgBiasCache& b) { return energy(b.delta_lf); })
        .def_property_readonly("high_energy", [](const CfgBiasCache& b) { return energy(b.delta_hf); });
    m.def(
        "record_bias",
        [](const RealArray& c, const RealArray& u, double rho, int step) {
            return record_bias(to_tensor(c), to_tensor(u), rho, step);
        },
        py::arg("eps_cond"), py::arg("eps_uncond"), py::arg("rho") = 0.25, py::arg("step") = -1);
    m.def(
        "reconstruct_uncond",
        [](const RealArray& c, const CfgBiasCache& bias, double w1, double w2, double rho) {
            return to_array(reconstruct_uncond(to_tensor(c), bias, w1, w2, rho));
        },
        py::arg("eps_cond"), py::arg("bias"), py::arg("w1") = 1.0, py::arg("w2") = 1.0, py::arg("rho") = 0.25);
    m.def("enhancement_weights", &enhancement_weights, py::arg("t"), py::arg("t0"), py::arg("alpha1"), py::arg("alpha2"));
    m.def("switch_timestep", &switch_timestep, py::arg("start_t"), py::arg("last_t"), py::arg("fraction"));

    m.def("mse", [](const RealArray& a, const RealArray& b) { return mse(to_tensor(a), to_tensor(b)); });
    m.def(
        "psnr", [](const RealArray& a, const RealArray& b, double peak) { return psnr(to_tensor(a), to_tensor(b), peak); },
        py::arg("a"), py::arg("b"), py::arg("peak") = 1.0);
    m.def(
        "ssim", [](const RealArray& a, const RealArray& b, double peak) { return ssim(to_tensor(a), to_tensor(b), peak); },
        py::arg("a"), py::arg("b"), py::arg("peak") = 1.0);

    py::class_<Model>(m, "Model")
        .def(py::init<const std::string&>(), py::arg("config") = "")
        .def_property_readonly("name", &Model::name)
        .def_property_readonly("layer_count", &Model::layer_count)
        .def("predict", &Model::predict, py::arg("x_t"), py::arg("t"), py::arg("condition"),
             "Returns (eps, macs)")
        .def("mac_breakdown", &Model::mac_breakdown, py::arg("shape"));

    m.def(
        "sample",
        [](const std::string& config, const std::string& strategy) {
            const ExperimentConfig c = parse_config(config);
            const Strategy kind = strategy.empty() ? c.strategy : strategy_from_string(strategy);
            SampleResult r;
            {
                py::gil_scoped_release release;
                const auto model = make_model(c);
                r = sample(*model, c.latent, c.sampler, CacheStrategy{kind, c.cache});
            }
            std::vector<std::uint64_t> macs;
            for (const auto& rec : r.trace) macs.push_back(rec.macs);
            py::dict out;
            out["x_final"] = to_array(r.x_final);
            out["timesteps"] = r.timesteps;
            out["plan"] = plan_dict(r.plan);
            out["step_macs"] = macs;
            out["switch_t"] = r.switch_t;
            return out;
        },
        py::arg("config") = "", py::arg("strategy") = "");

    m.def(
        "run", [](const std::string& c) { return report_text(run(parse_config(c))); }, py::arg("config") = "",
        py::call_guard<py::gil_scoped_release>());
    m.def(
        "ablate", [](const std::string& c) { return report_text(ablate(parse_config(c))); }, py::arg("config") = "",
        py::call_guard<py::gil_scoped_release>());
    m.def(
        "compare",
        [](const std::string& c, const std::vector<std::string>& names) {
            std::vector<Strategy> kinds;
            for (const auto& n : names) kinds.push_back(strategy_from_string(n));
            return report_text(compare(parse_config(c), kinds));
        },
        py::arg("config"), py::arg("strategies"), py::call_guard<py::gil_scoped_release>());
    m.def(
        "sweep",
        [](const std::string& c, const std::string& parameter, const std::vector<double>& values) {
            return report_text(sweep(parse_config(c), parameter, values));
        },
        py::arg("config"), py::arg("parameter"), py::arg("values"), py::call_guard<py::gil_scoped_release>());
    m.def(
        "write_report",
        [](const std::string& report, const std::string& dir, const std::string& stem) {
            return write_report(parse_report(report), dir, stem).string();
        },
        py::arg("report"), py::arg("directory"), py::arg("stem"));
    m.def(
        "strip_timing", [](const std::string& report) { return strip_timing(nlohmann::json::parse(report)).dump(); },
        py::arg("report"));
}
