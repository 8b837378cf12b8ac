#include "cachediff/cfg_cache.hpp"

#include "cachediff/error.hpp"

#include <cmath>
#include <stdexcept>

namespace cachediff {

namespace {

Tensor4 band_to_spatial(const Spectrum& band) { return ifft2(center_unshift(band)); }

}  // namespace

CfgBiasCache record_bias(const Tensor4& eps_cond, const Tensor4& eps_uncond, double rho, int step) {
    require_same_shape(eps_cond, eps_uncond, "record_bias");
    FrequencySplit delta = split_frequency(eps_uncond - eps_cond, rho);
    CfgBiasCache out{std::move(delta.low), std::move(delta.high), step, rho, {}, {}};
    out.spatial_lf = band_to_spatial(out.delta_lf);
    out.spatial_hf = band_to_spatial(out.delta_hf);
    return out;
}

std::pair<double, double> enhancement_weights(int t, int t0, double alpha1, double alpha2) {
    const double w1 = 1.0 + alpha1 * (t > t0 ? 1.0 : 0.0);
    const double w2 = 1.0 + alpha2 * (t <= t0 ? 1.0 : 0.0);
    return {w1, w2};
}

Tensor4 reconstruct_uncond(const Tensor4& eps_cond, const CfgBiasCache& bias, double w1, double w2, double rho) {
    if (rho != bias.rho) throw std::invalid_argument("reconstruct_uncond: cutoff differs from the recorded bias");
    if (bias.delta_lf.shape() != eps_cond.shape() || bias.delta_hf.shape() != eps_cond.shape()) {
        throw ShapeError("reconstruct_uncond: bias recorded for " + bias.delta_lf.shape().str() + ", got " +
                         eps_cond.shape().str());
    }
    const auto spatial = [&](const Tensor4& kept, const Spectrum& band) {
        return kept.shape() == eps_cond.shape() ? kept : band_to_spatial(band);
    };
    const Tensor4 low = spatial(bias.spatial_lf, bias.delta_lf);
    const Tensor4 high = spatial(bias.spatial_hf, bias.delta_hf);
    Tensor4 out(eps_cond.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<float>(static_cast<double>(eps_cond[i]) + w1 * low[i] + w2 * high[i]);
    }
    out.require_finite("reconstruct_uncond");
    return out;
}

Tensor4 baseline_cond_copy(const Tensor4& eps_cond) { return eps_cond; }

const Tensor4& baseline_stale_uncond(const StepTrace& trace, int step) {
    for (auto it = trace.rbegin(); it != trace.rend(); ++it) {
        if (it->step < step && it->uncond_evaluated) return it->eps_uncond;
    }
    throw std::invalid_argument("baseline_stale_uncond: no evaluated unconditional output before step " +
                                std::to_string(step));
}

std::vector<BiasEnergy> bias_frequency_trend(const StepTrace& trace, double rho) {
    std::vector<BiasEnergy> out;
    for (const auto& rec : trace) {
        if (!rec.uncond_evaluated || !rec.cond_evaluated) continue;
        const CfgBiasCache bias = record_bias(rec.eps_cond, rec.eps_uncond, rho, rec.step);
        out.push_back({rec.t, energy(bias.delta_lf), energy(bias.delta_hf)});
    }
    if (out.empty()) throw std::invalid_argument("bias_frequency_trend: trace has no evaluated unconditional outputs");
    return out;
}

int switch_timestep(int start_t, int last_t, double fraction) {
    return static_cast<int>(std::lround(static_cast<double>(start_t) - fraction * static_cast<double>(start_t - last_t)));
}

}  // namespace cachediff
