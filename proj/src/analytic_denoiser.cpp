#include "cachediff/analytic_denoiser.hpp"

#include "cachediff/error.hpp"
#include "cachediff/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cachediff {

namespace {

void check_inputs(const Tensor4& x_t, int t, int condition, const GaussianWorld& world, const NoiseSchedule& sched) {
    if (t <= 0 || t > sched.T) throw std::invalid_argument("analytic denoiser: timestep must lie in [1, T]");
    if (condition < 0 || static_cast<std::size_t>(condition) >= world.conditions()) {
        throw std::invalid_argument("analytic denoiser: unknown condition id " + std::to_string(condition));
    }
    if (x_t.shape() != world.shape) throw ShapeError("analytic denoiser: latent shape does not match the world");
}

// Adds amplitude * sin(2 pi (u x / W + v y / H) + phase) to every plane.
void add_wave(Tensor4& out, std::size_t channel, double u, double v, double amplitude, double phase,
              double frame_drift) {
    const Shape4& sh = out.shape();
    for (std::size_t f = 0; f < sh.frames; ++f) {
        for (std::size_t y = 0; y < sh.height; ++y) {
            for (std::size_t x = 0; x < sh.width; ++x) {
                const double arg = 2.0 * std::numbers::pi *
                                       (u * static_cast<double>(x) / sh.width + v * static_cast<double>(y) / sh.height) +
                                   phase + frame_drift * static_cast<double>(f);
                out.at(f, channel, y, x) += static_cast<float>(amplitude * std::sin(arg));
            }
        }
    }
}

}  // namespace

GaussianWorld make_gaussian_world(Shape4 shape, std::size_t conditions, double variance, std::uint64_t seed) {
    if (conditions < 2) throw ConfigError("gaussian world needs the null condition and at least one other");
    if (!(variance >= 0.0)) throw ConfigError("gaussian world variance must be non-negative");
    if (shape.numel() == 0) throw ConfigError("gaussian world shape is empty");
    const CounterRng rng(seed);
    GaussianWorld world;
    world.shape = shape;
    world.variance = variance;

    Tensor4 base(shape);
    std::uint64_t draw = 0;
    constexpr std::uint64_t base_stream = 1000;
    for (std::size_t ch = 0; ch < shape.channels; ++ch) {
        for (int k = 0; k < 3; ++k) {
            const double u = std::floor(rng.uniform(base_stream, draw++) * 3.0);
            const double v = std::floor(rng.uniform(base_stream, draw++) * 3.0);
            const double phase = 2.0 * std::numbers::pi * rng.uniform(base_stream, draw++);
            add_wave(base, ch, u, v, 0.5, phase, 0.1);
        }
    }
    world.means.push_back(base);

    const double hi_lo = std::max(1.0, static_cast<double>(std::min(shape.height, shape.width)) / 4.0);
    const double hi_span = std::max(1.0, static_cast<double>(std::min(shape.height, shape.width)) / 2.0 - hi_lo);
    for (std::size_t c = 1; c < conditions; ++c) {
        Tensor4 mean = base;
        const std::uint64_t stream = base_stream + c;
        draw = 0;
        for (std::size_t ch = 0; ch < shape.channels; ++ch) {
            for (int k = 0; k < 2; ++k) {
                const double u = 1.0 + std::floor(rng.uniform(stream, draw++) * 2.0);
                const double v = std::floor(rng.uniform(stream, draw++) * 3.0);
                const double phase = 2.0 * std::numbers::pi * rng.uniform(stream, draw++);
                add_wave(mean, ch, u, v, 0.4, phase, 0.15);
            }
            for (int k = 0; k < 2; ++k) {
                const double u = hi_lo + std::floor(rng.uniform(stream, draw++) * hi_span);
                const double v = hi_lo + std::floor(rng.uniform(stream, draw++) * hi_span);
                const double phase = 2.0 * std::numbers::pi * rng.uniform(stream, draw++);
                add_wave(mean, ch, u, v, 0.2, phase, 0.3);
            }
        }
        world.means.push_back(std::move(mean));
    }
    return world;
}

Tensor4 analytic_x0(const Tensor4& x_t, int t, int condition, const GaussianWorld& world, const NoiseSchedule& sched) {
    check_inputs(x_t, t, condition, world, sched);
    const double ab = sched.at(t);
    const double s2 = world.variance;
    const double den = ab * s2 + 1.0 - ab;
    const double a = s2 * std::sqrt(ab) / den;
    const double b = (1.0 - ab) / den;
    const Tensor4& mu = world.means[static_cast<std::size_t>(condition)];
    Tensor4 out(x_t.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(a * x_t[i] + b * mu[i]);
    return out;
}

namespace {

Tensor4 eps_from_x0(const Tensor4& x_t, const Tensor4& x0, double ab) {
    const double inv = 1.0 / std::sqrt(1.0 - ab);
    const double k = std::sqrt(ab) * inv;
    Tensor4 out(x_t.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(inv * x_t[i] - k * x0[i]);
    return out;
}

}  // namespace

Tensor4 analytic_predict(const Tensor4& x_t, int t, int condition, const GaussianWorld& world,
                         const NoiseSchedule& sched) {
    const Tensor4 x0 = analytic_x0(x_t, t, condition, world, sched);
    Tensor4 eps = eps_from_x0(x_t, x0, sched.at(t));
    eps.require_finite("analytic_predict");
    return eps;
}

AnalyticDenoiser::AnalyticDenoiser(GaussianWorld world, NoiseSchedule sched)
    : world_(std::move(world)), sched_(std::move(sched)) {}

Tensor4 AnalyticDenoiser::predict(const Tensor4& x_t, int t, int condition, LayerHooks* hooks,
                                  std::uint64_t* macs) const {
    if (hooks != nullptr && hooks->size() != layer_count()) {
        throw std::invalid_argument("analytic denoiser: hook count does not match layer count");
    }
    check_inputs(x_t, t, condition, world_, sched_);
    const Tensor4* cached = hooks != nullptr ? hooks->replacement(0) : nullptr;
    Tensor4 x0;
    if (cached != nullptr) {
        require_same_shape(*cached, x_t, "analytic denoiser replacement");
        x0 = *cached;
    } else {
        x0 = analytic_x0(x_t, t, condition, world_, sched_);
        if (macs != nullptr) *macs += 2 * x_t.size();
    }
    if (hooks != nullptr) hooks->observe(0, x0, cached == nullptr);
    Tensor4 eps = eps_from_x0(x_t, x0, sched_.at(t));
    if (macs != nullptr) *macs += 2 * x_t.size();
    eps.require_finite("analytic denoiser");
    return eps;
}

MacBreakdown AnalyticDenoiser::mac_breakdown(const Shape4& shape) const {
    return MacBreakdown{2 * shape.numel(), {2 * shape.numel()}};
}

}  // namespace cachediff
