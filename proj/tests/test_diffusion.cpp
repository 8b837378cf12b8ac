#include "cachediff/analytic_denoiser.hpp"
#include "cachediff/diffusion.hpp"
#include "cachediff/error.hpp"
#include "cachediff/sampler.hpp"
#include "cachediff/tiny_dit.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <cmath>

using namespace cachediff;

TEST_CASE("schedule endpoints and monotonicity") {
    for (ScheduleKind kind : {ScheduleKind::linear_beta, ScheduleKind::cosine}) {
        const NoiseSchedule s = make_schedule(kind, 1000);
        REQUIRE(s.alpha_bar.size() == 1001);
        CHECK(s.at(0) == 1.0);
        for (int t = 1; t <= 1000; ++t) {
            CHECK(s.at(t) < s.at(t - 1));
            CHECK(s.at(t) > 0.0);
        }
    }
    const NoiseSchedule two = make_schedule(ScheduleKind::linear_beta, 2);
    CHECK(two.at(1) == doctest::Approx(1 - 1e-4).epsilon(1e-15));
    CHECK(two.at(2) == doctest::Approx((1 - 1e-4) * (1 - 2e-2)).epsilon(1e-15));
    CHECK_THROWS(make_schedule(ScheduleKind::cosine, 1));
    CHECK_THROWS(two.at(3));
}

TEST_CASE("cosine schedule follows the squared cosine within its floor") {
    const NoiseSchedule s = make_schedule(ScheduleKind::cosine, 1000);
    CHECK(s.at(1000) == doctest::Approx(1e-5));
    const auto f = [](double t) {
        const double c = std::cos((t / 1000.0 + 0.008) / 1.008 * M_PI / 2.0);
        return c * c;
    };
    CHECK(s.at(500) == doctest::Approx(1e-5 + (1 - 1e-5) * f(500) / f(0)).epsilon(1e-12));
}

TEST_CASE("sampling timesteps descend on a uniform stride") {
    const auto ts = sampling_timesteps(30, 1000);
    REQUIRE(ts.size() == 31);
    CHECK(ts[0] == 1000);
    CHECK(ts[1] == 967);
    CHECK(ts[29] == 33);
    CHECK(ts[30] == 0);
    for (std::size_t i = 1; i < ts.size(); ++i) CHECK(ts[i] < ts[i - 1]);
    CHECK_THROWS_AS(sampling_timesteps(1, 1000), ConfigError);
}

TEST_CASE("q_sample examples") {
    const NoiseSchedule s = make_schedule(ScheduleKind::linear_beta, 1000);
    const Tensor4 x0 = testing::random_tensor({1, 2, 4, 4}, 1);
    const Tensor4 noise = testing::random_tensor({1, 2, 4, 4}, 2);
    CHECK(q_sample(x0, 0, noise, s) == x0);
    const Tensor4 no_noise = q_sample(x0, 400, Tensor4(x0.shape()), s);
    for (std::size_t i = 0; i < x0.size(); ++i) {
        CHECK(no_noise[i] == doctest::Approx(std::sqrt(s.at(400)) * x0[i]).epsilon(1e-6));
    }
    NoiseSchedule custom;
    custom.T = 2;
    custom.alpha_bar = {1.0, 0.36, 0.1};
    const Tensor4 c = q_sample(Tensor4({1, 1, 2, 2}), 1, Tensor4({1, 1, 2, 2}, 1.0f), custom);
    for (float v : c.data()) CHECK(v == doctest::Approx(0.8).epsilon(1e-7));
    CHECK_THROWS(q_sample(x0, 1001, noise, s));
    CHECK_THROWS_AS(q_sample(x0, 5, Tensor4({1, 1, 4, 4}), s), ShapeError);
}

TEST_CASE("cfg_combine examples") {
    const Tensor4 a = testing::random_tensor({1, 1, 3, 3}, 1);
    const Tensor4 b = testing::random_tensor({1, 1, 3, 3}, 2);
    CHECK(cfg_combine(a, b, 0.0) == a);
    CHECK(testing::max_abs_diff(cfg_combine(a, a, 7.5), a) <= 1e-5);
    CHECK(cfg_combine(testing::scalar_tensor(1.0f), testing::scalar_tensor(0.0f), 7.5)[0] == 8.5f);
    CHECK_THROWS_AS(cfg_combine(a, Tensor4({1, 1, 3, 2}), 1.0), ShapeError);
}

TEST_CASE("ddim with the true noise recovers x0 at every timestep") {
    for (ScheduleKind kind : {ScheduleKind::linear_beta, ScheduleKind::cosine}) {
        const NoiseSchedule s = make_schedule(kind, 1000);
        const Tensor4 x0 = testing::random_tensor({1, 2, 4, 4}, 3);
        const Tensor4 noise = testing::random_tensor({1, 2, 4, 4}, 4);
        const CounterRng rng(0);
        double worst = 0.0;
        for (int t = 1; t <= 1000; ++t) {
            const Tensor4 xt = q_sample(x0, t, noise, s);
            const Tensor4 back = reverse_step(xt, noise, t, 0, s, SamplerMode::ddim, rng, 0);
            worst = std::max(worst, testing::rel_error(back, x0));
        }
        CHECK(worst <= 1e-4);
    }
}

TEST_CASE("ddim with zero noise prediction rescales x_t") {
    const NoiseSchedule s = make_schedule(ScheduleKind::linear_beta, 1000);
    const Tensor4 x = testing::random_tensor({1, 1, 4, 4}, 5);
    const Tensor4 out = reverse_step(x, Tensor4(x.shape()), 700, 650, s, SamplerMode::ddim, CounterRng(0), 0);
    const double k = std::sqrt(s.at(650) / s.at(700));
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(out[i] == doctest::Approx(k * x[i]).epsilon(1e-6));
    CHECK_THROWS(reverse_step(x, x, 600, 600, s, SamplerMode::ddim, CounterRng(0), 0));
}

TEST_CASE("ancestral step statistics") {
    const NoiseSchedule s = make_schedule(ScheduleKind::linear_beta, 1000);
    const Tensor4 x = testing::scalar_tensor(0.7f);
    const Tensor4 eps = testing::scalar_tensor(-0.3f);
    const int t = 500;
    const int t_next = 450;
    const double mu = ancestral_mean(x, eps, t, t_next, s)[0];
    const double sigma = ancestral_coefficients(t, t_next, s).sigma;
    REQUIRE(sigma > 0.0);
    const CounterRng rng(123);
    constexpr int n = 10000;
    double sum = 0.0;
    double sum2 = 0.0;
    for (int k = 0; k < n; ++k) {
        const double v = reverse_step(x, eps, t, t_next, s, SamplerMode::ancestral, rng, 100 + k)[0];
        sum += v;
        sum2 += v * v;
    }
    const double mean = sum / n;
    CHECK(std::abs(mean - mu) <= 3.0 * sigma / 100.0);
    const double var = sum2 / n - mean * mean;
    CHECK(var == doctest::Approx(sigma * sigma).epsilon(0.05));

    // Ancestral posterior variance in closed form.
    const double ab = s.at(t);
    const double abn = s.at(t_next);
    CHECK(sigma * sigma == doctest::Approx((1 - abn) / (1 - ab) * (1 - ab / abn)).epsilon(1e-12));
}

namespace {

AnalyticDenoiser small_world(Shape4 shape, ScheduleKind kind, double variance = 0.5) {
    return AnalyticDenoiser(make_gaussian_world(shape, 4, variance, 3), make_schedule(kind, 1000));
}

}  // namespace

TEST_CASE("no_cache sampling matches the per-element affine recurrence") {
    const Shape4 shape{2, 2, 8, 8};
    for (ScheduleKind kind : {ScheduleKind::linear_beta, ScheduleKind::cosine}) {
        const AnalyticDenoiser model = small_world(shape, kind);
        SamplerConfig cfg;
        cfg.steps = 20;
        cfg.guidance_scale = 0.0;
        cfg.seed = 77;
        cfg.condition_id = 2;
        cfg.schedule_kind = kind;
        const SampleResult r = sample(model, shape, cfg, CacheStrategy{});

        // x_{s+1} = P x_s + Q mu, one (P, Q) pair per step, composed in double.
        const NoiseSchedule& sch = model.schedule();
        const double s2 = model.world().variance;
        double p = 1.0;
        double q = 0.0;
        for (int step = 0; step < cfg.steps; ++step) {
            const int t = static_cast<int>(std::lround(1000.0 * (1.0 - double(step) / cfg.steps)));
            const int tn = step + 1 == cfg.steps ? 0 : static_cast<int>(std::lround(1000.0 * (1.0 - double(step + 1) / cfg.steps)));
            const double ab = sch.at(t);
            const double abn = sch.at(tn);
            const double den = ab * s2 + 1 - ab;
            const double a = s2 * std::sqrt(ab) / den;  // x0_hat = a x + b mu
            const double b = (1 - ab) / den;
            const double ex = (1 - std::sqrt(ab) * a) / std::sqrt(1 - ab);  // eps = ex x + em mu
            const double em = -std::sqrt(ab) * b / std::sqrt(1 - ab);
            const double px = std::sqrt(abn) * a + std::sqrt(1 - abn) * ex;
            const double pm = std::sqrt(abn) * b + std::sqrt(1 - abn) * em;
            p = px * p;
            q = px * q + pm;
        }
        const Tensor4 x_T = CounterRng(cfg.seed).normal_tensor(shape, kInitialNoiseStream);
        const Tensor4& mu = model.world().means[2];
        Tensor4 expect(shape);
        for (std::size_t i = 0; i < expect.size(); ++i) expect[i] = static_cast<float>(p * x_T[i] + q * mu[i]);
        CHECK(testing::rel_error(r.x_final, expect) <= 1e-4);
    }
}

TEST_CASE("an all-full plan is bit-identical to no_cache") {
    const Shape4 shape{2, 2, 8, 8};
    const AnalyticDenoiser analytic = small_world(shape, ScheduleKind::cosine);
    TinyDiTConfig dc;
    dc.layers = 2;
    dc.embed_dim = 16;
    dc.heads = 2;
    dc.patch = 4;
    dc.channels = 2;
    const TinyDiT dit(dc);
    SamplerConfig cfg;
    cfg.steps = 8;
    for (const NoisePredictor* model : {static_cast<const NoisePredictor*>(&analytic), static_cast<const NoisePredictor*>(&dit)}) {
        const SampleResult ref = sample(*model, shape, cfg, CacheStrategy{});
        for (Strategy k : {Strategy::dynamic_fr, Strategy::vanilla_fr}) {
            CacheStrategy st{k, {}};
            st.config.dfr_interval = 1;
            const SampleResult r = sample(*model, shape, cfg, st);
            for (const auto& d : r.plan.steps) CHECK_FALSE(d.attn_reuse);
            CHECK(r.x_final == ref.x_final);
        }
    }
}

TEST_CASE("sampling is deterministic and the trace agrees with the plan") {
    const Shape4 shape{2, 2, 8, 8};
    const AnalyticDenoiser model = small_world(shape, ScheduleKind::cosine);
    SamplerConfig cfg;
    cfg.steps = 30;
    cfg.seed = 5;
    for (Strategy k : kAllStrategies) {
        const CacheStrategy st{k, {}};
        const SampleResult a = sample(model, shape, cfg, st);
        const SampleResult b = sample(model, shape, cfg, st);
        CHECK(a.x_final == b.x_final);
        REQUIRE(a.trace.size() == 30);
        int full = 0;
        int uncond = 0;
        for (std::size_t s = 0; s < a.trace.size(); ++s) {
            const auto& ra = a.trace[s];
            const auto& rb = b.trace[s];
            CHECK(ra.eps_cond == rb.eps_cond);
            CHECK(ra.eps_uncond == rb.eps_uncond);
            CHECK(ra.eps == rb.eps);
            CHECK(ra.cond_features == rb.cond_features);
            CHECK(ra.step == int(s));
            CHECK(ra.t == a.timesteps[s]);
            CHECK(ra.uncond_evaluated == a.plan[s].uncond_full);
            CHECK(ra.cond_attn_reused == a.plan[s].attn_reuse);
            full += ra.full_attention_evals;
            uncond += ra.uncond_evaluated;
        }
        CHECK(full == a.plan.full_attention_evaluations());
        CHECK(uncond == a.plan.uncond_evaluations());
    }
}

TEST_CASE("ancestral sampling is reproducible and seed dependent") {
    const Shape4 shape{1, 2, 8, 8};
    const AnalyticDenoiser model = small_world(shape, ScheduleKind::cosine);
    SamplerConfig cfg;
    cfg.steps = 10;
    cfg.mode = SamplerMode::ancestral;
    const SampleResult a = sample(model, shape, cfg, CacheStrategy{Strategy::fastercache, {}});
    const SampleResult b = sample(model, shape, cfg, CacheStrategy{Strategy::fastercache, {}});
    CHECK(a.x_final == b.x_final);
    cfg.seed = 1;
    CHECK_FALSE(sample(model, shape, cfg, CacheStrategy{Strategy::fastercache, {}}).x_final == a.x_final);
}

TEST_CASE("sampler config validation") {
    SamplerConfig cfg;
    cfg.steps = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.steps = 30;
    cfg.guidance_scale = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_THROWS_AS(strategy_from_string("nope"), ConfigError);
    for (Strategy k : kAllStrategies) CHECK(strategy_from_string(to_string(k)) == k);
    CHECK(schedule_kind_from_string("cosine") == ScheduleKind::cosine);
    CHECK(sampler_mode_from_string("ancestral") == SamplerMode::ancestral);
}
