#pragma once

#include <filesystem>
#include <memory>

#include "uad/schedule.hpp"
#include "uad/tensor.hpp"
#include "uad/unet.hpp"

namespace uad {

struct Denoiser {
    virtual ~Denoiser() = default;
    virtual Tensor predict_eps(const Tensor& x_t, int t) const = 0;
};

struct UNetDenoiser : Denoiser {
    DenoiserParams params;
    explicit UNetDenoiser(DenoiserParams p) : params(std::move(p)) {}
    Tensor predict_eps(const Tensor& x_t, int t) const override {
        return unet_infer(params, x_t, t);
    }
};

// Closed-form optimal predictor for data ~ N(m, s2 I); correctness oracle
// for the reverse chain.
struct AnalyticDenoiser : Denoiser {
    Tensor mean_image;
    double variance;
    const NoiseSchedule* sched;

    AnalyticDenoiser(Tensor m, double s2, const NoiseSchedule& s)
        : mean_image(std::move(m)), variance(s2), sched(&s) {
        if (s2 < 0) throw std::invalid_argument("analytic denoiser: variance must be >= 0");
    }

    Tensor predict_eps(const Tensor& x_t, int t) const override {
        if (t < 1 || t > sched->T) throw std::out_of_range("analytic denoiser: t out of range");
        check_same_shape(x_t, mean_image, "analytic denoiser");
        const double abar = sched->alpha_bar[t];
        const double sa = std::sqrt(abar);
        const double sb = std::sqrt(1.0 - abar);
        const double denom = abar * variance + (1.0 - abar);
        Tensor out = x_t;
        for (std::size_t i = 0; i < out.data.size(); ++i) {
            double e_x0 = (sa * variance * x_t.data[i] + (1.0 - abar) * mean_image.data[i]) / denom;
            out.data[i] = static_cast<float>((x_t.data[i] - sa * e_x0) / sb);
        }
        return out;
    }
};

// "UADC": magic, version u16, config block, tensor count, then named UADT blobs.
void checkpoint_save(const DenoiserParams& params, const std::filesystem::path& path);
DenoiserParams checkpoint_load(const std::filesystem::path& path);
// load and require a specific architecture
DenoiserParams checkpoint_load_expect(const std::filesystem::path& path, const UNetConfig& cfg);

}  // namespace uad
