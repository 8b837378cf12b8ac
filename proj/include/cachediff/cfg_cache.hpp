#pragma once

#include "cachediff/spectral.hpp"
#include "cachediff/trace.hpp"

#include <utility>
#include <vector>

namespace cachediff {

// Frequency-split difference between unconditional and conditional outputs,
// stored center-shifted. record_bias also keeps the inverse transform of each
// band; a cache built by hand without them gets them derived on demand.
struct CfgBiasCache {
    Spectrum delta_lf;
    Spectrum delta_hf;
    int recorded_step = -1;
    double rho = 0.25;
    Tensor4 spatial_lf;
    Tensor4 spatial_hf;
};

// delta_lf = low(FFT eps_u) - low(FFT eps_c); delta_hf likewise for the high band.
// Both come from one transform of eps_u - eps_c.
CfgBiasCache record_bias(const Tensor4& eps_cond, const Tensor4& eps_uncond, double rho, int step = -1);

// w1 = 1 + alpha1 [t > t0], w2 = 1 + alpha2 [t <= t0]; t is the diffusion timestep.
std::pair<double, double> enhancement_weights(int t, int t0, double alpha1, double alpha2);

// IFFT(delta_lf * w1 + low(FFT eps_c) + delta_hf * w2 + high(FFT eps_c)).
// The two bands of FFT eps_c sum to FFT eps_c, so this is evaluated as
// eps_c + w1 IFFT(delta_lf) + w2 IFFT(delta_hf) without transforming eps_c.
// `rho` must match the cutoff the bias was recorded with.
Tensor4 reconstruct_uncond(const Tensor4& eps_cond, const CfgBiasCache& bias, double w1, double w2, double rho);

// Naive same-step baseline: the conditional output stands in for the
// unconditional one.
Tensor4 baseline_cond_copy(const Tensor4& eps_cond);

// Naive cross-step baseline: the most recent evaluated unconditional output
// strictly before `step`. Throws std::invalid_argument when none exists.
const Tensor4& baseline_stale_uncond(const StepTrace& trace, int step);

struct BiasEnergy {
    int t = 0;
    double low_energy = 0.0;
    double high_energy = 0.0;
};

// Per step with both branches evaluated, the energy of the eps_u - eps_c
// spectrum inside the low and high bands. Throws when no such step exists.
std::vector<BiasEnergy> bias_frequency_trend(const StepTrace& trace, double rho);

// Switching timestep t0: `fraction` of the way from the timestep where CFG
// reuse starts down to the last sampling timestep.
int switch_timestep(int start_t, int last_t, double fraction);

}  // namespace cachediff
