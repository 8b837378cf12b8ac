#pragma once

#include "cachediff/diffusion.hpp"
#include "cachediff/predictor.hpp"

#include <cstdint>
#include <vector>

namespace cachediff {

// Gaussian data distribution per condition: x0 ~ N(means[c], variance * I).
struct GaussianWorld {
    Shape4 shape{};
    double variance = 0.5;
    std::vector<Tensor4> means;  // index = condition id; 0 is the null condition

    std::size_t conditions() const { return means.size(); }
};

// Seeded world with `conditions` entries (including the null condition 0).
// The null mean carries only a smooth base pattern; every other condition adds
// its own mix of low- and high-frequency components on top of it.
GaussianWorld make_gaussian_world(Shape4 shape, std::size_t conditions, double variance, std::uint64_t seed);

// Posterior-mean x0 for x_t under condition c.
Tensor4 analytic_x0(const Tensor4& x_t, int t, int condition, const GaussianWorld& world, const NoiseSchedule& sched);

// Exact E[eps | x_t] under the Gaussian world.
Tensor4 analytic_predict(const Tensor4& x_t, int t, int condition, const GaussianWorld& world,
                         const NoiseSchedule& sched);

// Closed-form denoiser. Its single hookable layer is the posterior-mean x0
// estimate; the noise output is formed from x_t and that (possibly cached)
// estimate, mirroring an attention output feeding a residual path.
class AnalyticDenoiser final : public NoisePredictor {
public:
    AnalyticDenoiser(GaussianWorld world, NoiseSchedule sched);

    std::string name() const override { return "analytic"; }
    std::size_t layer_count() const override { return 1; }
    Tensor4 predict(const Tensor4& x_t, int t, int condition, LayerHooks* hooks,
                    std::uint64_t* macs = nullptr) const override;
    MacBreakdown mac_breakdown(const Shape4& shape) const override;

    const GaussianWorld& world() const { return world_; }
    const NoiseSchedule& schedule() const { return sched_; }

private:
    GaussianWorld world_;
    NoiseSchedule sched_;
};

}  // namespace cachediff
