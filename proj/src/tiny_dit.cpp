#include "cachediff/tiny_dit.hpp"

#include "cachediff/error.hpp"
#include "cachediff/rng.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace cachediff {

namespace {

constexpr int kWeightsSchemaVersion = 1;

void layer_norm_rows(Matrix& m) {
    for (std::size_t r = 0; r < m.rows; ++r) {
        auto row = m.row(r);
        double mean = 0.0;
        for (float v : row) mean += v;
        mean /= static_cast<double>(row.size());
        double var = 0.0;
        for (float v : row) var += (v - mean) * (v - mean);
        var /= static_cast<double>(row.size());
        const double inv = 1.0 / std::sqrt(var + 1e-5);
        for (float& v : row) v = static_cast<float>((v - mean) * inv);
    }
}

Matrix normalized(const Matrix& m) {
    Matrix out = m;
    layer_norm_rows(out);
    return out;
}

void add_into(Matrix& dst, const Matrix& src) {
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

void gelu_inplace(Matrix& m) {
    constexpr float k = 0.7978845608028654f;  // sqrt(2 / pi)
    // 0.5 (1 + tanh z) == 1 / (1 + exp(-2z)).
    for (float& v : m.data) v = v / (1.0f + std::exp(-2.0f * k * (v + 0.044715f * v * v * v)));
}

// Sinusoidal embedding of a scalar position into `dim` values.
void sinusoid(double position, std::span<float> out, double max_period = 10000.0) {
    const std::size_t half = out.size() / 2;
    for (std::size_t i = 0; i < half; ++i) {
        const double freq = std::pow(max_period, -static_cast<double>(i) / static_cast<double>(std::max<std::size_t>(half, 1)));
        out[2 * i] += static_cast<float>(std::sin(position * freq));
        out[2 * i + 1] += static_cast<float>(std::cos(position * freq));
    }
}

Matrix uniform_matrix(std::size_t rows, std::size_t cols, const CounterRng& rng, std::uint64_t stream) {
    Matrix m(rows, cols);
    const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        m.data[i] = static_cast<float>((2.0 * rng.uniform(stream, i) - 1.0) * bound);
    }
    return m;
}

nlohmann::json config_to_json(const TinyDiTConfig& c) {
    return {{"layers", c.layers},           {"embed_dim", c.embed_dim},
            {"heads", c.heads},             {"patch", c.patch},
            {"channels", c.channels},
            {"condition_vocab", c.condition_vocab}, {"condition_tokens", c.condition_tokens},
            {"init_seed", c.init_seed}};
}

TinyDiTConfig config_from_json(const nlohmann::json& j) {
    TinyDiTConfig c;
    c.layers = j.at("layers").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.patch = j.at("patch").get<std::size_t>();
    c.channels = j.at("channels").get<std::size_t>();
    c.condition_vocab = j.at("condition_vocab").get<std::size_t>();
    c.condition_tokens = j.at("condition_tokens").get<std::size_t>();
    c.init_seed = j.at("init_seed").get<std::uint64_t>();
    return c;
}

}  // namespace

void TinyDiTConfig::validate() const {
    if (layers == 0 || layers % 2 != 0) throw ConfigError("tiny_dit: layer count must be even and positive");
    if (embed_dim == 0 || embed_dim % 2 != 0) throw ConfigError("tiny_dit: embed_dim must be even and positive");
    if (heads == 0 || embed_dim % heads != 0) throw ConfigError("tiny_dit: embed_dim must be divisible by heads");
    if (patch == 0) throw ConfigError("tiny_dit: patch size must be positive");
    if (channels == 0) throw ConfigError("tiny_dit: channel count must be positive");
    if (condition_vocab < 2) throw ConfigError("tiny_dit: condition vocabulary needs at least two ids");
    if (condition_tokens == 0) throw ConfigError("tiny_dit: need at least one condition token");
}

void TinyDiTConfig::validate(const Shape4& shape) const {
    validate();
    if (shape.numel() == 0) throw ConfigError("tiny_dit: empty latent shape");
    if (shape.channels != channels) {
        throw ConfigError("tiny_dit: latent has " + std::to_string(shape.channels) + " channels, model expects " +
                          std::to_string(channels));
    }
    if (shape.height % patch != 0 || shape.width % patch != 0) {
        throw ConfigError("tiny_dit: latent " + shape.str() + " not divisible by patch size " + std::to_string(patch));
    }
}

MacBreakdown count_macs(const TinyDiTConfig& config, const Shape4& shape) {
    config.validate(shape);
    const std::uint64_t d = config.embed_dim;
    const std::uint64_t sites = (shape.height / config.patch) * (shape.width / config.patch);
    const std::uint64_t frames = shape.frames;
    const std::uint64_t tokens = sites * frames;
    const std::uint64_t patch_dim = shape.channels * config.patch * config.patch;
    const std::uint64_t m = config.condition_tokens;

    MacBreakdown out;
    out.base = 2 * tokens * patch_dim * d;  // patch embed + unembed
    for (std::size_t l = 0; l < config.layers; ++l) {
        const bool spatial = l % 2 == 0;
        const std::uint64_t attn =
            spatial ? frames * self_attention_macs(sites, d) : sites * self_attention_macs(frames, d);
        out.layers.push_back(attn);
        out.base += cross_attention_macs(tokens, m, d) + ffn_macs(tokens, d);
    }
    return out;
}

TinyDiT::TinyDiT(TinyDiTConfig config) : config_(config) {
    config_.validate();
    const std::size_t d = config_.embed_dim;
    const std::size_t patch_dim = config_.channels * config_.patch * config_.patch;
    patch_in_ = Matrix(patch_dim, d);
    patch_out_ = Matrix(d, patch_dim);
    blocks_.resize(config_.layers);
    for (auto& b : blocks_) {
        b.wq = Matrix(d, d);
        b.wk = Matrix(d, d);
        b.wv = Matrix(d, d);
        b.wo = Matrix(d, d);
        b.cq = Matrix(d, d);
        b.ck = Matrix(d, d);
        b.cv = Matrix(d, d);
        b.co = Matrix(d, d);
        b.w1 = Matrix(d, 4 * d);
        b.w2 = Matrix(4 * d, d);
    }
    const CounterRng rng(config_.init_seed);
    std::uint64_t stream = 1;
    for_each_tensor(*this, [&](const std::string&, Matrix& m) { m = uniform_matrix(m.rows, m.cols, rng, stream++); });
}

template <class Self, class Fn>
void TinyDiT::for_each_tensor(Self& self, Fn&& fn) {
    fn(std::string("patch_in"), self.patch_in_);
    fn(std::string("patch_out"), self.patch_out_);
    for (std::size_t l = 0; l < self.blocks_.size(); ++l) {
        const std::string p = "blocks." + std::to_string(l) + ".";
        auto& b = self.blocks_[l];
        fn(p + "wq", b.wq);
        fn(p + "wk", b.wk);
        fn(p + "wv", b.wv);
        fn(p + "wo", b.wo);
        fn(p + "cq", b.cq);
        fn(p + "ck", b.ck);
        fn(p + "cv", b.cv);
        fn(p + "co", b.co);
        fn(p + "w1", b.w1);
        fn(p + "w2", b.w2);
    }
}

Matrix TinyDiT::condition_embedding(int condition) const {
    if (condition < 0 || static_cast<std::size_t>(condition) >= config_.condition_vocab) {
        throw std::invalid_argument("tiny_dit: condition id " + std::to_string(condition) + " outside vocabulary");
    }
    Matrix tokens(config_.condition_tokens, config_.embed_dim);
    if (condition == kNullCondition) return tokens;
    const CounterRng hash(config_.init_seed ^ 0xc0d1u);
    for (std::size_t j = 0; j < tokens.rows; ++j) {
        const double phase = 1000.0 * hash.uniform(static_cast<std::uint64_t>(condition), j);
        sinusoid(phase, tokens.row(j));
    }
    return tokens;
}

Matrix TinyDiT::self_attention(const Block& block, bool spatial, const Matrix& h, std::size_t frames,
                               std::size_t sites, std::uint64_t* macs, AttentionProbe* probe) const {
    const std::size_t d = config_.embed_dim;
    const Matrix q = matmul(h, block.wq, macs);
    const Matrix k = matmul(h, block.wk, macs);
    const Matrix v = matmul(h, block.wv, macs);
    Matrix mixed(h.rows, d);

    const std::size_t sequences = spatial ? frames : sites;
    const std::size_t length = spatial ? sites : frames;
    Matrix qs(length, d), ks(length, d), vs(length, d);
    auto token = [&](std::size_t seq, std::size_t pos) {
        return spatial ? seq * sites + pos : pos * sites + seq;
    };
    for (std::size_t s = 0; s < sequences; ++s) {
        for (std::size_t p = 0; p < length; ++p) {
            const std::size_t r = token(s, p);
            std::copy_n(q.data.data() + r * d, d, qs.data.data() + p * d);
            std::copy_n(k.data.data() + r * d, d, ks.data.data() + p * d);
            std::copy_n(v.data.data() + r * d, d, vs.data.data() + p * d);
        }
        const Matrix o = attention(qs, ks, vs, config_.heads, macs, probe);
        for (std::size_t p = 0; p < length; ++p) {
            std::copy_n(o.data.data() + p * d, d, mixed.data.data() + token(s, p) * d);
        }
    }
    return matmul(mixed, block.wo, macs);
}

Tensor4 TinyDiT::forward(const Tensor4& x_t, int t, int condition, LayerHooks* hooks, std::uint64_t* macs,
                         AttentionProbe* probe) const {
    const Shape4& sh = x_t.shape();
    config_.validate(sh);
    if (hooks != nullptr && hooks->size() != layer_count()) {
        throw std::invalid_argument("tiny_dit: hook count " + std::to_string(hooks->size()) + " does not match " +
                                    std::to_string(layer_count()) + " layers");
    }
    const std::size_t p = config_.patch;
    const std::size_t d = config_.embed_dim;
    const std::size_t gw = sh.width / p;
    const std::size_t sites = (sh.height / p) * gw;
    const std::size_t tokens = sites * sh.frames;
    const std::size_t patch_dim = sh.channels * p * p;

    Matrix patches(tokens, patch_dim);
    for (std::size_t f = 0; f < sh.frames; ++f) {
        for (std::size_t c = 0; c < sh.channels; ++c) {
            for (std::size_t y = 0; y < sh.height; ++y) {
                for (std::size_t x = 0; x < sh.width; ++x) {
                    const std::size_t tok = f * sites + (y / p) * gw + x / p;
                    patches(tok, (c * p + y % p) * p + x % p) = x_t.at(f, c, y, x);
                }
            }
        }
    }
    Matrix hidden = matmul(patches, patch_in_, macs);
    std::vector<float> time_emb(d, 0.0f);
    sinusoid(static_cast<double>(t), time_emb);
    for (std::size_t f = 0; f < sh.frames; ++f) {
        std::vector<float> frame_emb(d, 0.0f);
        sinusoid(static_cast<double>(f), frame_emb, 50.0);
        for (std::size_t s = 0; s < sites; ++s) {
            auto row = hidden.row(f * sites + s);
            for (std::size_t e = 0; e < d; ++e) row[e] += time_emb[e] + 0.5f * frame_emb[e];
            sinusoid(static_cast<double>(s), row, 100.0);
        }
    }

    const Matrix cond = condition_embedding(condition);
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
        const Block& b = blocks_[l];
        const Tensor4* cached = hooks != nullptr ? hooks->replacement(l) : nullptr;
        Matrix attn;
        if (cached != nullptr) {
            if (cached->shape() != Shape4{sh.frames, sites, d, 1}) throw ShapeError("tiny_dit: replacement feature has wrong shape");
            attn = Matrix(tokens, d);
            std::copy(cached->data().begin(), cached->data().end(), attn.data.begin());
        } else {
            attn = self_attention(b, l % 2 == 0, normalized(hidden), sh.frames, sites, macs, probe);
        }
        if (hooks != nullptr) {
            hooks->observe(l, cached != nullptr ? *cached : Tensor4(Shape4{sh.frames, sites, d, 1}, attn.data),
                           cached == nullptr);
        }
        add_into(hidden, attn);

        const Matrix hq = normalized(hidden);
        const Matrix q = matmul(hq, b.cq, macs);
        const Matrix k = matmul(cond, b.ck, macs);
        const Matrix v = matmul(cond, b.cv, macs);
        add_into(hidden, matmul(attention(q, k, v, config_.heads, macs, probe), b.co, macs));

        Matrix mid = matmul(normalized(hidden), b.w1, macs);
        gelu_inplace(mid);
        add_into(hidden, matmul(mid, b.w2, macs));
    }

    const Matrix out_patches = matmul(normalized(hidden), patch_out_, macs);
    Tensor4 eps(sh);
    for (std::size_t f = 0; f < sh.frames; ++f) {
        for (std::size_t c = 0; c < sh.channels; ++c) {
            for (std::size_t y = 0; y < sh.height; ++y) {
                for (std::size_t x = 0; x < sh.width; ++x) {
                    const std::size_t tok = f * sites + (y / p) * gw + x / p;
                    eps.at(f, c, y, x) = out_patches(tok, (c * p + y % p) * p + x % p);
                }
            }
        }
    }
    eps.require_finite("tiny_dit predict");
    return eps;
}

Tensor4 TinyDiT::predict(const Tensor4& x_t, int t, int condition, LayerHooks* hooks, std::uint64_t* macs) const {
    return forward(x_t, t, condition, hooks, macs, nullptr);
}

Tensor4 TinyDiT::predict_probed(const Tensor4& x_t, int t, int condition, AttentionProbe& probe) const {
    return forward(x_t, t, condition, nullptr, nullptr, &probe);
}

void TinyDiT::save(const std::filesystem::path& base) const {
    static_assert(std::endian::native == std::endian::little, "weight files are written little-endian");
    nlohmann::json table = nlohmann::json::array();
    std::filesystem::path bin = base;
    bin += ".bin";
    std::ofstream out(bin, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + bin.string() + " for writing");
    std::size_t offset = 0;
    for_each_tensor(*this, [&](const std::string& name, const Matrix& m) {
        out.write(reinterpret_cast<const char*>(m.data.data()), static_cast<std::streamsize>(m.data.size() * sizeof(float)));
        table.push_back({{"name", name}, {"shape", {m.rows, m.cols}}, {"offset", offset}});
        offset += m.data.size();
    });
    if (!out) throw std::runtime_error("failed writing " + bin.string());
    nlohmann::json sidecar = {{"schema_version", kWeightsSchemaVersion},
                              {"format", "f32le"},
                              {"config", config_to_json(config_)},
                              {"total_elements", offset},
                              {"tensors", table}};
    std::filesystem::path meta = base;
    meta += ".json";
    std::ofstream js(meta);
    if (!js) throw std::runtime_error("cannot open " + meta.string() + " for writing");
    js << sidecar.dump(2) << "\n";
}

TinyDiT TinyDiT::load(const std::filesystem::path& base) {
    std::filesystem::path meta = base;
    meta += ".json";
    std::ifstream js(meta);
    if (!js) throw std::runtime_error("cannot open " + meta.string());
    nlohmann::json sidecar;
    try {
        js >> sidecar;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(meta.string() + ": " + e.what());
    }
    if (sidecar.value("schema_version", 0) != kWeightsSchemaVersion || sidecar.value("format", "") != "f32le") {
        throw std::runtime_error(meta.string() + ": unsupported weight file version or format");
    }
    TinyDiT model(config_from_json(sidecar.at("config")));

    std::filesystem::path bin = base;
    bin += ".bin";
    std::ifstream in(bin, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + bin.string());
    const auto& table = sidecar.at("tensors");
    std::size_t index = 0;
    for_each_tensor(model, [&](const std::string& name, Matrix& m) {
        if (index >= table.size()) throw std::runtime_error(meta.string() + ": tensor table does not match config");
        const auto& entry = table[index++];
        if (entry.at("name").get<std::string>() != name) {
            throw std::runtime_error(meta.string() + ": expected tensor " + name + ", found " +
                                     entry.at("name").get<std::string>());
        }
        const auto rows = entry.at("shape").at(0).get<std::size_t>();
        const auto cols = entry.at("shape").at(1).get<std::size_t>();
        if (rows != m.rows || cols != m.cols) throw std::runtime_error(meta.string() + ": shape mismatch for " + name);
        in.seekg(static_cast<std::streamoff>(entry.at("offset").get<std::size_t>() * sizeof(float)));
        in.read(reinterpret_cast<char*>(m.data.data()), static_cast<std::streamsize>(m.data.size() * sizeof(float)));
        if (!in) throw std::runtime_error(bin.string() + ": truncated weight data");
    });
    if (index != table.size()) throw std::runtime_error(meta.string() + ": tensor table does not match config");
    return model;
}

}  // namespace cachediff
