#pragma once

#include "cachediff/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cachediff {

// Condition id reserved for the null (unconditional) prompt.
inline constexpr int kNullCondition = 0;

// Per-call hook points on the hookable (attention) layers of a predictor.
// Layer i is consulted before it runs: a non-null replacement skips the
// computation and is used as the layer output. observe() then sees whatever
// output the layer ended up with.
class LayerHooks {
public:
    virtual ~LayerHooks() = default;
    virtual std::size_t size() const = 0;
    virtual const Tensor4* replacement(std::size_t layer) = 0;
    virtual void observe(std::size_t layer, const Tensor4& feature, bool computed) = 0;
};

// MAC cost of one predict() call: `base` is paid on every call, each entry
// of `layers` only when that hookable layer is actually computed.
struct MacBreakdown {
    std::uint64_t base = 0;
    std::vector<std::uint64_t> layers;

    std::uint64_t full() const;
    std::uint64_t hookable() const;
};

class NoisePredictor {
public:
    virtual ~NoisePredictor() = default;

    virtual std::string name() const = 0;
    virtual std::size_t layer_count() const = 0;

    // Noise prediction for latent x_t at diffusion timestep t. `hooks` may be
    // null; otherwise hooks->size() must equal layer_count(). When `macs` is
    // non-null, every multiply-accumulate performed is added to it.
    virtual Tensor4 predict(const Tensor4& x_t, int t, int condition, LayerHooks* hooks,
                            std::uint64_t* macs = nullptr) const = 0;

    virtual MacBreakdown mac_breakdown(const Shape4& shape) const = 0;
};

// Hooks that only record layer outputs.
class RecordingHooks : public LayerHooks {
public:
    explicit RecordingHooks(std::size_t layers) : features_(layers) {}

    std::size_t size() const override { return features_.size(); }
    const Tensor4* replacement(std::size_t) override { return nullptr; }
    void observe(std::size_t layer, const Tensor4& feature, bool) override { features_.at(layer) = feature; }

    const std::vector<Tensor4>& features() const { return features_; }

private:
    std::vector<Tensor4> features_;
};

// Hooks that substitute a fixed set of layer outputs.
class ReplayHooks : public LayerHooks {
public:
    explicit ReplayHooks(std::vector<Tensor4> features) : features_(std::move(features)) {}

    std::size_t size() const override { return features_.size(); }
    const Tensor4* replacement(std::size_t layer) override { return &features_.at(layer); }
    void observe(std::size_t, const Tensor4&, bool) override {}

private:
    std::vector<Tensor4> features_;
};

}  // namespace cachediff
