#include "cachediff/analytic_denoiser.hpp"
#include "cachediff/cfg_cache.hpp"
#include "cachediff/error.hpp"
#include "cachediff/metrics.hpp"
#include "cachediff/sampler.hpp"

#include "helpers.hpp"
#include "oracles.hpp"

#include <doctest.h>

using namespace cachediff;

namespace {

StepRecord record_with(int step, int t, const Tensor4& c, const Tensor4& u, bool uncond = true) {
    StepRecord r;
    r.step = step;
    r.t = t;
    r.eps_cond = c;
    r.eps_uncond = u;
    r.uncond_evaluated = uncond;
    return r;
}

// Oracle band energies of (u - c) from the direct DFT.
std::pair<double, double> oracle_bias_energy(const Tensor4& c, const Tensor4& u, double rho) {
    const Shape4& sh = c.shape();
    double low = 0.0;
    double high = 0.0;
    for (std::size_t f = 0; f < sh.frames; ++f) {
        for (std::size_t ch = 0; ch < sh.channels; ++ch) {
            const auto fc = oracle::dft2(oracle::plane(c, f, ch), sh.height, sh.width);
            const auto fu = oracle::dft2(oracle::plane(u, f, ch), sh.height, sh.width);
            for (std::size_t y = 0; y < sh.height; ++y) {
                for (std::size_t x = 0; x < sh.width; ++x) {
                    const double e = std::norm(fu[y * sh.width + x] - fc[y * sh.width + x]);
                    (oracle::in_low_band(y, x, sh.height, sh.width, rho) ? low : high) += e;
                }
            }
        }
    }
    return {low, high};
}

struct AnalyticRun {
    Shape4 shape{4, 4, 16, 16};
    AnalyticDenoiser model{make_gaussian_world(shape, 8, 0.5, 0), make_schedule(ScheduleKind::cosine, 1000)};
    SamplerConfig cfg;

    SampleResult operator()(Strategy k, CacheConfig c = {}) const { return sample(model, shape, cfg, CacheStrategy{k, c}); }
    Tensor4 true_uncond(const StepRecord& r) const { return model.predict(r.x_t, r.t, kNullCondition, nullptr); }
};

}  // namespace

TEST_CASE("record_bias of equal outputs is zero") {
    const Tensor4 a = testing::random_tensor({2, 2, 8, 8}, 1);
    const CfgBiasCache b = record_bias(a, a, 0.25, 4);
    CHECK(b.delta_lf.is_zero());
    CHECK(b.delta_hf.is_zero());
    CHECK(b.recorded_step == 4);
    CHECK(b.delta_lf.centered());
}

TEST_CASE("record_bias of a constant offset is a single DC bin") {
    const Tensor4 c = testing::random_tensor({1, 2, 8, 6}, 2);
    const float kappa = 0.75f;
    Tensor4 u = c;
    for (float& v : u.data()) v += kappa;
    const CfgBiasCache b = record_bias(c, u, 0.25);
    for (std::size_t i = 0; i < b.delta_hf.size(); ++i) CHECK(std::abs(b.delta_hf[i]) <= 1e-5f);
    for (std::size_t ch = 0; ch < 2; ++ch) {
        for (std::size_t y = 0; y < 8; ++y) {
            for (std::size_t x = 0; x < 6; ++x) {
                const auto v = b.delta_lf.at(0, ch, y, x);
                if (y == 4 && x == 3) {
                    CHECK(v.real() == doctest::Approx(kappa * 48).epsilon(1e-5));
                    CHECK(std::abs(v.imag()) <= 1e-5f);
                } else {
                    CHECK(std::abs(v) <= 1e-5f);
                }
            }
        }
    }
}

TEST_CASE("record_bias matches the direct DFT") {
    const Tensor4 c = testing::uniform_tensor({1, 1, 8, 8}, 5);
    const Tensor4 u = testing::uniform_tensor({1, 1, 8, 8}, 6);
    const double rho = 0.25;
    const CfgBiasCache b = record_bias(c, u, rho);
    const auto fc = oracle::dft2(oracle::plane(c, 0, 0), 8, 8);
    const auto fu = oracle::dft2(oracle::plane(u, 0, 0), 8, 8);
    for (std::size_t y = 0; y < 8; ++y) {
        for (std::size_t x = 0; x < 8; ++x) {
            const oracle::cd diff = fu[y * 8 + x] - fc[y * 8 + x];
            const bool low = oracle::in_low_band(y, x, 8, 8, rho);
            const auto lf = b.delta_lf.at(0, 0, (y + 4) % 8, (x + 4) % 8);
            const auto hf = b.delta_hf.at(0, 0, (y + 4) % 8, (x + 4) % 8);
            CHECK(std::abs(oracle::cd(lf.real(), lf.imag()) - (low ? diff : 0.0)) <= 1e-6);
            CHECK(std::abs(oracle::cd(hf.real(), hf.imag()) - (low ? 0.0 : diff)) <= 1e-6);
        }
    }
    CHECK_THROWS_AS(record_bias(c, Tensor4({1, 1, 8, 4}), rho), ShapeError);
}

TEST_CASE("bias spectra stay inside their bands") {
    for (double rho : {0.0, 0.25, 0.5, 1.0}) {
        const Tensor4 c = testing::random_tensor({2, 3, 16, 8}, 7);
        const Tensor4 u = testing::random_tensor({2, 3, 16, 8}, 8);
        const CfgBiasCache b = record_bias(c, u, rho);
        const FrequencyMask m = make_masks(16, 8, rho);
        for (std::size_t p = 0; p < 6; ++p) {
            for (std::size_t i = 0; i < 128; ++i) {
                if (m.high[i]) CHECK(b.delta_lf[p * 128 + i] == std::complex<float>{});
                if (m.low[i]) CHECK(b.delta_hf[p * 128 + i] == std::complex<float>{});
            }
        }
    }
}

TEST_CASE("enhancement weights") {
    CHECK(enhancement_weights(800, 500, 0.0, 0.0) == std::pair{1.0, 1.0});
    CHECK(enhancement_weights(300, 500, 0.0, 0.0) == std::pair{1.0, 1.0});
    CHECK(enhancement_weights(800, 500, 0.2, 0.2) == std::pair{1.2, 1.0});
    CHECK(enhancement_weights(300, 500, 0.2, 0.2) == std::pair{1.0, 1.2});
    CHECK(enhancement_weights(500, 500, 0.2, 0.3) == std::pair{1.0, 1.3});
}

TEST_CASE("switch timestep") {
    CHECK(switch_timestep(667, 33, 0.5) == 350);
    CHECK(switch_timestep(667, 33, 0.0) == 667);
    CHECK(switch_timestep(667, 33, 1.0) == 33);
}

TEST_CASE("reconstruction inverts the recorded bias") {
    for (double rho : {0.0, 0.25, 0.5, 1.0}) {
        const Tensor4 c = testing::random_tensor({2, 3, 16, 16}, 9);
        const Tensor4 u = testing::random_tensor({2, 3, 16, 16}, 10);
        const CfgBiasCache b = record_bias(c, u, rho);
        CHECK(testing::rel_error(reconstruct_uncond(c, b, 1.0, 1.0, rho), u) <= 1e-5);
    }
}

TEST_CASE("zero bias reconstruction is the conditional output") {
    const Tensor4 c = testing::random_tensor({1, 2, 8, 8}, 3);
    const CfgBiasCache zero = record_bias(c, c, 0.25);
    const Tensor4 out = reconstruct_uncond(c, zero, 1.2, 1.0, 0.25);
    CHECK(testing::rel_error(out, c) <= 1e-5);
    CHECK(baseline_cond_copy(c) == c);
    CHECK(testing::rel_error(out, baseline_cond_copy(c)) <= 1e-5);
    CHECK_THROWS(reconstruct_uncond(c, zero, 1.0, 1.0, 0.5));
    CHECK_THROWS_AS(reconstruct_uncond(Tensor4({1, 2, 8, 4}), zero, 1.0, 1.0, 0.25), ShapeError);
}

TEST_CASE("reconstruction is linear in its inputs") {
    const Shape4 sh{1, 2, 8, 8};
    const double rho = 0.25;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Tensor4 c1 = testing::random_tensor(sh, seed * 4 + 1);
        const Tensor4 c2 = testing::random_tensor(sh, seed * 4 + 2);
        const CfgBiasCache b1 = record_bias(c1, testing::random_tensor(sh, seed * 4 + 3), rho);
        const CfgBiasCache b2 = record_bias(c2, testing::random_tensor(sh, seed * 4 + 4), rho);
        const float a = 0.6f;
        const float b = -1.3f;
        CfgBiasCache mix{a * b1.delta_lf + b * b2.delta_lf, a * b1.delta_hf + b * b2.delta_hf, -1, rho};
        const Tensor4 lhs = reconstruct_uncond(lincomb(a, c1, b, c2), mix, 1.2, 0.9, rho);
        const Tensor4 rhs = lincomb(a, reconstruct_uncond(c1, b1, 1.2, 0.9, rho), b, reconstruct_uncond(c2, b2, 1.2, 0.9, rho));
        CHECK(testing::max_abs_diff(lhs, rhs) <= 1e-5);
    }
}

TEST_CASE("reconstruction matches the frequency-domain formula with and without kept bands") {
    const Shape4 sh{2, 3, 16, 12};
    for (double rho : {0.0, 0.3, 1.0}) {
        const Tensor4 c = testing::random_tensor(sh, 31);
        const CfgBiasCache b = record_bias(testing::random_tensor(sh, 32), testing::random_tensor(sh, 33), rho);
        const CfgBiasCache spectra_only{b.delta_lf, b.delta_hf, b.recorded_step, rho, {}, {}};
        const FrequencySplit cs = split_frequency(c, rho);
        const Tensor4 direct = ifft2(center_unshift(1.4f * b.delta_lf + cs.low + 0.7f * b.delta_hf + cs.high));
        CHECK(testing::max_abs_diff(reconstruct_uncond(c, b, 1.4, 0.7, rho), direct) <= 1e-5);
        CHECK(testing::max_abs_diff(reconstruct_uncond(c, spectra_only, 1.4, 0.7, rho), direct) <= 1e-5);
    }
}

TEST_CASE("stale unconditional baseline") {
    const Tensor4 u0 = testing::random_tensor({1, 1, 2, 2}, 1);
    const Tensor4 u1 = testing::random_tensor({1, 1, 2, 2}, 2);
    StepTrace trace;
    trace.push_back(record_with(0, 900, u0, u0));
    trace.push_back(record_with(1, 800, u1, u1));
    trace.push_back(record_with(2, 700, u0, u0, false));
    trace.push_back(record_with(3, 600, u0, u0, false));
    CHECK(baseline_stale_uncond(trace, 2) == u1);
    CHECK(baseline_stale_uncond(trace, 4) == u1);
    CHECK(baseline_stale_uncond(trace, 1) == u0);
    CHECK_THROWS(baseline_stale_uncond(trace, 0));
}

TEST_CASE("bias frequency trend") {
    const Shape4 sh{1, 1, 8, 8};
    StepTrace same;
    for (int s = 0; s < 3; ++s) {
        const Tensor4 c = testing::random_tensor(sh, s);
        same.push_back(record_with(s, 900 - 100 * s, c, c));
    }
    for (const auto& e : bias_frequency_trend(same, 0.25)) {
        CHECK(e.low_energy == 0.0);
        CHECK(e.high_energy == 0.0);
    }

    StepTrace offset;
    for (int s = 0; s < 3; ++s) {
        const Tensor4 c = testing::random_tensor(sh, s);
        Tensor4 u = c;
        for (float& v : u.data()) v += 0.5f * float(s + 1);
        offset.push_back(record_with(s, 900 - 100 * s, c, u));
    }
    for (const auto& e : bias_frequency_trend(offset, 0.25)) CHECK(e.high_energy <= 1e-8);

    StepTrace synthetic;
    for (int s = 0; s < 3; ++s) {
        synthetic.push_back(record_with(s, 900 - 100 * s, testing::uniform_tensor(sh, 10 + s), testing::uniform_tensor(sh, 20 + s)));
    }
    synthetic.push_back(record_with(3, 500, testing::uniform_tensor(sh, 1), testing::uniform_tensor(sh, 2), false));
    const auto trend = bias_frequency_trend(synthetic, 0.25);
    REQUIRE(trend.size() == 3);
    for (int s = 0; s < 3; ++s) {
        const auto [low, high] = oracle_bias_energy(synthetic[s].eps_cond, synthetic[s].eps_uncond, 0.25);
        CHECK(trend[s].t == 900 - 100 * s);
        CHECK(trend[s].low_energy == doctest::Approx(low).epsilon(1e-6));
        CHECK(trend[s].high_energy == doctest::Approx(high).epsilon(1e-6));
    }
    StepTrace none = {record_with(0, 10, testing::scalar_tensor(0), testing::scalar_tensor(0), false)};
    CHECK_THROWS(bias_frequency_trend(none, 0.25));
}

TEST_CASE("reconstructed uncond beats the stale and copy baselines against the analytic truth") {
    const AnalyticRun run;
    const SampleResult r = run(Strategy::cfg_cache_only);
    int reuse = 0;
    int beats_stale = 0;
    for (const auto& rec : r.trace) {
        if (rec.uncond_evaluated) continue;
        ++reuse;
        const Tensor4 truth = run.true_uncond(rec);
        const double cfg = mse(rec.eps_uncond, truth);
        beats_stale += cfg < mse(baseline_stale_uncond(r.trace, rec.step), truth);
        const CfgBiasCache true_bias = record_bias(rec.eps_cond, truth, 0.25);
        REQUIRE_FALSE(true_bias.delta_lf.is_zero());
        // The analytic bias decays to zero as t -> 0, so on the last two steps
        // the bias recorded at step 25 overshoots and the plain copy is closer.
        const double copy = mse(baseline_cond_copy(rec.eps_cond), truth);
        if (rec.step < 28) {
            CHECK(copy > cfg);
        } else {
            CHECK(copy < cfg);
        }
    }
    CHECK(reuse == 16);
    CHECK(beats_stale >= 0.8 * reuse);
}

TEST_CASE("cond_copy error equals the bias energy") {
    const AnalyticRun run;
    const SampleResult r = run(Strategy::no_cache);
    const Shape4& sh = run.shape;
    for (const auto& rec : r.trace) {
        const CfgBiasCache b = record_bias(rec.eps_cond, rec.eps_uncond, 0.25);
        // Unnormalised forward transform: energy = H W sum |x|^2.
        const double expect = (energy(b.delta_lf) + energy(b.delta_hf)) / double(sh.plane() * sh.numel());
        CHECK(mse(baseline_cond_copy(rec.eps_cond), rec.eps_uncond) == doctest::Approx(expect).epsilon(1e-4));
    }
}

TEST_CASE("end-to-end: stale reuse is worse than CFG-Cache, enhancement is neutral at zero") {
    const AnalyticRun run;
    const SampleResult ref = run(Strategy::no_cache);
    const double cfg = mse(run(Strategy::cfg_cache_only).x_final, ref.x_final);
    CHECK(mse(run(Strategy::stale_uncond).x_final, ref.x_final) > cfg);

    CacheConfig a;
    a.alpha1 = 0.0;
    a.alpha2 = 0.0;
    a.t0_fraction = 0.1;
    CacheConfig b = a;
    b.t0_fraction = 0.9;
    CHECK(run(Strategy::cfg_cache_only, a).x_final == run(Strategy::cfg_cache_only, b).x_final);
    CHECK(run(Strategy::fastercache, a).x_final == run(Strategy::fastercache, b).x_final);
}

TEST_CASE("cfg reuse steps use the recorded bias with current-step weights") {
    const AnalyticRun run;
    const SampleResult r = run(Strategy::cfg_cache_only);
    REQUIRE(r.switch_t > 0);
    std::optional<CfgBiasCache> bias;
    for (const auto& rec : r.trace) {
        if (rec.bias_recorded) bias = record_bias(rec.eps_cond, rec.eps_uncond, 0.25, rec.step);
        if (rec.uncond_evaluated) continue;
        REQUIRE(bias);
        const auto [w1, w2] = enhancement_weights(rec.t, r.switch_t, 0.2, 0.2);
        CHECK(reconstruct_uncond(rec.eps_cond, *bias, w1, w2, 0.25) == rec.eps_uncond);
    }
}
