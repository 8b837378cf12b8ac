#pragma once

#include "cachediff/rng.hpp"
#include "cachediff/tensor.hpp"

#include <string>
#include <vector>

namespace cachediff {

enum class ScheduleKind { linear_beta, cosine };
enum class SamplerMode { ddim, ancestral };

std::string to_string(ScheduleKind kind);
std::string to_string(SamplerMode mode);
ScheduleKind schedule_kind_from_string(const std::string& name);
SamplerMode sampler_mode_from_string(const std::string& name);

// Cumulative signal coefficients alpha_bar[t] for t = 0..T.
struct NoiseSchedule {
    ScheduleKind kind = ScheduleKind::linear_beta;
    int T = 0;
    std::vector<double> alpha_bar;

    double at(int t) const;
};

// linear_beta: beta linear in [1e-4, 2e-2] over t = 1..T.
// cosine: squared-cosine alpha_bar (offset 0.008) mapped affinely onto
// [1e-5, 1] so it stays strictly decreasing and positive.
NoiseSchedule make_schedule(ScheduleKind kind, int T);

// Diffusion timestep of each sampling step, t_s = round(T (1 - s/S)),
// plus a trailing 0 so that step s moves from t_s to t_{s+1}.
std::vector<int> sampling_timesteps(int steps, int T);

// sqrt(abar_t) x0 + sqrt(1 - abar_t) noise
Tensor4 q_sample(const Tensor4& x0, int t, const Tensor4& noise, const NoiseSchedule& sched);

// (1 + g) eps_c - g eps_u
Tensor4 cfg_combine(const Tensor4& eps_cond, const Tensor4& eps_uncond, double guidance);

// x0 estimate implied by a noise prediction.
Tensor4 predict_x0(const Tensor4& x_t, const Tensor4& eps, int t, const NoiseSchedule& sched);

struct AncestralCoefficients {
    double sigma = 0.0;      // std of the injected noise
    double eps_coeff = 0.0;  // sqrt(1 - abar' - sigma^2)
};

AncestralCoefficients ancestral_coefficients(int t, int t_next, const NoiseSchedule& sched);

// Deterministic part of the ancestral update: sqrt(abar') x0_hat + eps_coeff eps.
Tensor4 ancestral_mean(const Tensor4& x_t, const Tensor4& eps, int t, int t_next, const NoiseSchedule& sched);

// One reverse move from timestep t to t_next < t. DDIM ignores the rng;
// ancestral adds sigma * z with z drawn from `noise_stream`.
Tensor4 reverse_step(const Tensor4& x_t, const Tensor4& eps, int t, int t_next, const NoiseSchedule& sched,
                     SamplerMode mode, const CounterRng& rng, std::uint64_t noise_stream);

}  // namespace cachediff
