#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "uad/eval.hpp"
#include "uad/kernels.hpp"
#include "uad/tensor.hpp"

namespace uad {

struct UNetConfig {
    int in_channels = 1;
    int base_channels = 32;
    int depth = 3;  // downsampling levels; extents must divide 2^depth
    int blocks_per_level = 2;
    int time_embed_dim = 128;
    int groups = 8;
    PadMode pad_mode = PadMode::Zero;

    bool operator==(const UNetConfig& o) const = default;
};

struct DenoiserParams {
    UNetConfig config;
    std::map<std::string, Tensor> tensors;  // ordered: deterministic iteration
};

enum class InitKind { He, Zero, One };

struct ParamSpec {
    std::string name;
    std::vector<int> shape;
    InitKind init;
};

// architecture walk; forward lookups use exactly these names
std::vector<ParamSpec> unet_param_specs(const UNetConfig& cfg);

DenoiserParams unet_init(const UNetConfig& cfg, std::uint64_t seed);

std::vector<double> sinusoidal_embedding(int t, int dim);

// Shared forward composition; Ctx is Tape<S> (training/grad checks) or Eval<S>.
template <typename Ctx, typename S>
class UNetForward {
  public:
    UNetForward(Ctx& ctx, const UNetConfig& cfg, const std::map<std::string, TensorT<S>>& params)
        : ctx_(ctx), cfg_(cfg) {
        for (const auto& [name, tensor] : params) h_.emplace(name, ctx_.leaf(tensor));
    }

    // pre-lifted handles (training keeps leaves alive to read gradients)
    struct Prelifted {};
    UNetForward(Ctx& ctx, const UNetConfig& cfg, std::map<std::string, typename Ctx::H> handles,
                Prelifted)
        : ctx_(ctx), cfg_(cfg), h_(std::move(handles)) {}

    const typename Ctx::H& param(const std::string& name) const {
        auto it = h_.find(name);
        if (it == h_.end()) throw std::runtime_error("unet: missing parameter " + name);
        return it->second;
    }

    typename Ctx::H operator()(typename Ctx::H x, int t) {
        using H = typename Ctx::H;
        const auto& xv = ctx_.value(x);
        if (xv.rank() != 3 || xv.shape[0] != cfg_.in_channels)
            throw std::invalid_argument("unet: expected [C,H,W] input with C = in_channels");
        const int div = 1 << cfg_.depth;
        if (xv.shape[1] % div || xv.shape[2] % div)
            throw std::invalid_argument("unet: spatial extents must be divisible by 2^depth");

        // time embedding MLP, shared across blocks
        auto se = sinusoidal_embedding(t, cfg_.time_embed_dim);
        TensorT<S> sev({cfg_.time_embed_dim});
        for (int i = 0; i < cfg_.time_embed_dim; ++i) sev.data[i] = static_cast<S>(se[i]);
        H emb = ctx_.leaf(sev);
        emb = ctx_.dense(emb, param("temb.fc1.w"), param("temb.fc1.b"));
        emb = ctx_.silu(emb);
        emb = ctx_.dense(emb, param("temb.fc2.w"), param("temb.fc2.b"));
        emb_ = ctx_.silu(emb);

        H h = ctx_.conv2d(x, param("stem.w"), 1, 1, cfg_.pad_mode);
        h = ctx_.add_channel_bias(h, param("stem.b"));

        std::vector<H> skips;
        int ch = cfg_.base_channels;
        for (int l = 0; l < cfg_.depth; ++l) {
            int cout = cfg_.base_channels << l;
            for (int b = 0; b < cfg_.blocks_per_level; ++b) {
                h = resblock("enc" + std::to_string(l) + ".res" + std::to_string(b), h, ch, cout);
                ch = cout;
            }
            skips.push_back(h);
            h = ctx_.down2(h);
        }
        for (int b = 0; b < cfg_.blocks_per_level; ++b)
            h = resblock("mid.res" + std::to_string(b), h, ch, ch);
        for (int l = cfg_.depth - 1; l >= 0; --l) {
            int cout = cfg_.base_channels << l;
            h = ctx_.up2(h);
            h = ctx_.concat_ch(h, skips[l]);
            ch = ch + cout;
            for (int b = 0; b < cfg_.blocks_per_level; ++b) {
                h = resblock("dec" + std::to_string(l) + ".res" + std::to_string(b), h, ch, cout);
                ch = cout;
            }
        }
        h = ctx_.group_norm(h, cfg_.groups, S(1e-5));
        h = ctx_.channel_affine(h, param("out.gn.g"), param("out.gn.b"));
        h = ctx_.silu(h);
        h = ctx_.conv2d(h, param("out.w"), 1, 1, cfg_.pad_mode);
        h = ctx_.add_channel_bias(h, param("out.b"));
        return h;
    }

  private:
    Ctx& ctx_;
    const UNetConfig& cfg_;
    std::map<std::string, typename Ctx::H> h_;
    typename Ctx::H emb_;

    typename Ctx::H resblock(const std::string& p, typename Ctx::H x, int cin, int cout) {
        using H = typename Ctx::H;
        H h = ctx_.group_norm(x, cfg_.groups, S(1e-5));
        h = ctx_.channel_affine(h, param(p + ".gn1.g"), param(p + ".gn1.b"));
        h = ctx_.silu(h);
        h = ctx_.conv2d(h, param(p + ".conv1.w"), 1, 1, cfg_.pad_mode);
        h = ctx_.add_channel_bias(h, param(p + ".conv1.b"));
        H tb = ctx_.dense(emb_, param(p + ".emb.w"), param(p + ".emb.b"));
        h = ctx_.add_channel_bias(h, tb);
        h = ctx_.group_norm(h, cfg_.groups, S(1e-5));
        h = ctx_.channel_affine(h, param(p + ".gn2.g"), param(p + ".gn2.b"));
        h = ctx_.silu(h);
        h = ctx_.conv2d(h, param(p + ".conv2.w"), 1, 1, cfg_.pad_mode);
        h = ctx_.add_channel_bias(h, param(p + ".conv2.b"));
        H skip = x;
        if (cin != cout) {
            skip = ctx_.conv2d(x, param(p + ".skip.w"), 1, 0, cfg_.pad_mode);
            skip = ctx_.add_channel_bias(skip, param(p + ".skip.b"));
        }
        return ctx_.add(skip, h);
    }
};

// float inference path, no graph bookkeeping
Tensor unet_infer(const DenoiserParams& params, const Tensor& x_t, int t);

}  // namespace uad
