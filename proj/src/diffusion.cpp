#include "cachediff/diffusion.hpp"

#include "cachediff/error.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cachediff {

std::string to_string(ScheduleKind kind) {
    return kind == ScheduleKind::linear_beta ? "linear_beta" : "cosine";
}

std::string to_string(SamplerMode mode) { return mode == SamplerMode::ddim ? "ddim" : "ancestral"; }

ScheduleKind schedule_kind_from_string(const std::string& name) {
    if (name == "linear_beta") return ScheduleKind::linear_beta;
    if (name == "cosine") return ScheduleKind::cosine;
    throw ConfigError("unknown schedule kind '" + name + "'");
}

SamplerMode sampler_mode_from_string(const std::string& name) {
    if (name == "ddim") return SamplerMode::ddim;
    if (name == "ancestral") return SamplerMode::ancestral;
    throw ConfigError("unknown sampler mode '" + name + "'");
}

double NoiseSchedule::at(int t) const {
    if (t < 0 || t > T) throw std::out_of_range("timestep " + std::to_string(t) + " outside [0, " + std::to_string(T) + "]");
    return alpha_bar[static_cast<std::size_t>(t)];
}

NoiseSchedule make_schedule(ScheduleKind kind, int T) {
    if (T < 2) throw std::invalid_argument("make_schedule: T must be at least 2");
    NoiseSchedule s;
    s.kind = kind;
    s.T = T;
    s.alpha_bar.assign(static_cast<std::size_t>(T) + 1, 1.0);
    if (kind == ScheduleKind::linear_beta) {
        constexpr double lo = 1e-4;
        constexpr double hi = 2e-2;
        double prod = 1.0;
        for (int t = 1; t <= T; ++t) {
            const double beta = lo + (hi - lo) * static_cast<double>(t - 1) / static_cast<double>(T - 1);
            prod *= 1.0 - beta;
            s.alpha_bar[static_cast<std::size_t>(t)] = prod;
        }
    } else {
        constexpr double offset = 0.008;
        constexpr double floor = 1e-5;
        auto f = [&](int t) {
            const double u = (static_cast<double>(t) / T + offset) / (1.0 + offset);
            const double c = std::cos(u * std::numbers::pi / 2.0);
            return c * c;
        };
        const double f0 = f(0);
        for (int t = 1; t <= T; ++t) {
            const double raw = std::max(f(t) / f0, 0.0);
            s.alpha_bar[static_cast<std::size_t>(t)] = floor + (1.0 - floor) * raw;
        }
    }
    return s;
}

std::vector<int> sampling_timesteps(int steps, int T) {
    if (steps < 2) throw ConfigError("sampling steps must be at least 2");
    if (steps > T) throw ConfigError("sampling steps exceed diffusion timesteps");
    std::vector<int> ts(static_cast<std::size_t>(steps) + 1, 0);
    for (int s = 0; s < steps; ++s) {
        ts[static_cast<std::size_t>(s)] =
            static_cast<int>(std::lround(static_cast<double>(T) * (1.0 - static_cast<double>(s) / steps)));
    }
    return ts;
}

Tensor4 q_sample(const Tensor4& x0, int t, const Tensor4& noise, const NoiseSchedule& sched) {
    require_same_shape(x0, noise, "q_sample");
    const double ab = sched.at(t);
    Tensor4 out = lincomb(static_cast<float>(std::sqrt(ab)), x0, static_cast<float>(std::sqrt(1.0 - ab)), noise);
    out.require_finite("q_sample");
    return out;
}

Tensor4 cfg_combine(const Tensor4& eps_cond, const Tensor4& eps_uncond, double guidance) {
    Tensor4 out = lincomb(static_cast<float>(1.0 + guidance), eps_cond, static_cast<float>(-guidance), eps_uncond);
    out.require_finite("cfg_combine");
    return out;
}

Tensor4 predict_x0(const Tensor4& x_t, const Tensor4& eps, int t, const NoiseSchedule& sched) {
    require_same_shape(x_t, eps, "predict_x0");
    const double ab = sched.at(t);
    if (!(ab > 0.0)) throw NumericError("predict_x0: alpha_bar is zero");
    const double inv = 1.0 / std::sqrt(ab);
    const double k = std::sqrt(1.0 - ab) * inv;
    Tensor4 out(x_t.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(inv * x_t[i] - k * eps[i]);
    return out;
}

AncestralCoefficients ancestral_coefficients(int t, int t_next, const NoiseSchedule& sched) {
    const double ab = sched.at(t);
    const double ab_next = sched.at(t_next);
    AncestralCoefficients c;
    const double var = (1.0 - ab_next) / (1.0 - ab) * (1.0 - ab / ab_next);
    c.sigma = std::sqrt(std::max(var, 0.0));
    c.eps_coeff = std::sqrt(std::max(1.0 - ab_next - var, 0.0));
    return c;
}

Tensor4 ancestral_mean(const Tensor4& x_t, const Tensor4& eps, int t, int t_next, const NoiseSchedule& sched) {
    const Tensor4 x0 = predict_x0(x_t, eps, t, sched);
    const auto c = ancestral_coefficients(t, t_next, sched);
    return lincomb(static_cast<float>(std::sqrt(sched.at(t_next))), x0, static_cast<float>(c.eps_coeff), eps);
}

Tensor4 reverse_step(const Tensor4& x_t, const Tensor4& eps, int t, int t_next, const NoiseSchedule& sched,
                     SamplerMode mode, const CounterRng& rng, std::uint64_t noise_stream) {
    if (t_next >= t) throw std::invalid_argument("reverse_step: t_next must precede t");
    Tensor4 out;
    if (mode == SamplerMode::ddim) {
        const Tensor4 x0 = predict_x0(x_t, eps, t, sched);
        const double ab_next = sched.at(t_next);
        out = lincomb(static_cast<float>(std::sqrt(ab_next)), x0, static_cast<float>(std::sqrt(1.0 - ab_next)), eps);
    } else {
        out = ancestral_mean(x_t, eps, t, t_next, sched);
        const auto c = ancestral_coefficients(t, t_next, sched);
        if (c.sigma > 0.0) {
            for (std::size_t i = 0; i < out.size(); ++i) {
                out[i] += static_cast<float>(c.sigma * rng.normal(noise_stream, i));
            }
        }
    }
    out.require_finite("reverse_step");
    return out;
}

}  // namespace cachediff
