#include "uad/unet.hpp"

#include <cmath>

#include "uad/rng.hpp"

namespace uad {

namespace {

void resblock_specs(std::vector<ParamSpec>& out, const std::string& p, int cin, int cout,
                    int temb_dim) {
    out.push_back({p + ".gn1.g", {cin}, InitKind::One});
    out.push_back({p + ".gn1.b", {cin}, InitKind::Zero});
    out.push_back({p + ".conv1.w", {cout, cin, 3, 3}, InitKind::He});
    out.push_back({p + ".conv1.b", {cout}, InitKind::Zero});
    out.push_back({p + ".emb.w", {cout, temb_dim}, InitKind::He});
    out.push_back({p + ".emb.b", {cout}, InitKind::Zero});
    out.push_back({p + ".gn2.g", {cout}, InitKind::One});
    out.push_back({p + ".gn2.b", {cout}, InitKind::Zero});
    out.push_back({p + ".conv2.w", {cout, cout, 3, 3}, InitKind::He});
    out.push_back({p + ".conv2.b", {cout}, InitKind::Zero});
    if (cin != cout) {
        out.push_back({p + ".skip.w", {cout, cin, 1, 1}, InitKind::He});
        out.push_back({p + ".skip.b", {cout}, InitKind::Zero});
    }
}

}  // namespace

std::vector<ParamSpec> unet_param_specs(const UNetConfig& cfg) {
    std::vector<ParamSpec> out;
    const int td = cfg.time_embed_dim;
    out.push_back({"temb.fc1.w", {td, td}, InitKind::He});
    out.push_back({"temb.fc1.b", {td}, InitKind::Zero});
    out.push_back({"temb.fc2.w", {td, td}, InitKind::He});
    out.push_back({"temb.fc2.b", {td}, InitKind::Zero});
    out.push_back({"stem.w", {cfg.base_channels, cfg.in_channels, 3, 3}, InitKind::He});
    out.push_back({"stem.b", {cfg.base_channels}, InitKind::Zero});
    int ch = cfg.base_channels;
    for (int l = 0; l < cfg.depth; ++l) {
        int cout = cfg.base_channels << l;
        for (int b = 0; b < cfg.blocks_per_level; ++b) {
            resblock_specs(out, "enc" + std::to_string(l) + ".res" + std::to_string(b), ch, cout, td);
            ch = cout;
        }
    }
    for (int b = 0; b < cfg.blocks_per_level; ++b)
        resblock_specs(out, "mid.res" + std::to_string(b), ch, ch, td);
    for (int l = cfg.depth - 1; l >= 0; --l) {
        int cout = cfg.base_channels << l;
        ch = ch + cout;  // skip concat
        for (int b = 0; b < cfg.blocks_per_level; ++b) {
            resblock_specs(out, "dec" + std::to_string(l) + ".res" + std::to_string(b), ch, cout, td);
            ch = cout;
        }
    }
    out.push_back({"out.gn.g", {ch}, InitKind::One});
    out.push_back({"out.gn.b", {ch}, InitKind::Zero});
    out.push_back({"out.w", {cfg.in_channels, ch, 3, 3}, InitKind::Zero});
    out.push_back({"out.b", {cfg.in_channels}, InitKind::Zero});
    return out;
}

DenoiserParams unet_init(const UNetConfig& cfg, std::uint64_t seed) {
    DenoiserParams p;
    p.config = cfg;
    for (const auto& spec : unet_param_specs(cfg)) {
        Tensor t(spec.shape);
        switch (spec.init) {
            case InitKind::Zero:
                break;
            case InitKind::One:
                for (auto& v : t.data) v = 1.0f;
                break;
            case InitKind::He: {
                std::size_t fan_in = 1;
                for (std::size_t d = 1; d < spec.shape.size(); ++d) fan_in *= spec.shape[d];
                double std = std::sqrt(2.0 / static_cast<double>(fan_in));
                std::uint64_t nseed = 0;
                for (char c : spec.name) nseed = nseed * 131 + static_cast<unsigned char>(c);
                nseed = rng::key(seed, rng::kTagInit, nseed);
                for (std::size_t i = 0; i < t.data.size(); ++i)
                    t.data[i] = static_cast<float>(std * rng::normal(nseed, rng::kTagInit, i));
                break;
            }
        }
        p.tensors.emplace(spec.name, std::move(t));
    }
    return p;
}

std::vector<double> sinusoidal_embedding(int t, int dim) {
    std::vector<double> out(dim);
    const int half = dim / 2;
    for (int k = 0; k < half; ++k) {
        double freq = std::exp(-std::log(10000.0) * k / (half > 1 ? half - 1 : 1));
        out[k] = std::sin(t * freq);
        out[half + k] = std::cos(t * freq);
    }
    return out;
}

Tensor unet_infer(const DenoiserParams& params, const Tensor& x_t, int t) {
    Eval<float> ev;
    UNetForward<Eval<float>, float> fwd(ev, params.config, params.tensors);
    return fwd(x_t, t);
}

}  // namespace uad
