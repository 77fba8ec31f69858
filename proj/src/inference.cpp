#include "uad/inference.hpp"

#include <algorithm>
#include <cmath>

#include "uad/io.hpp"
#include "uad/rng.hpp"

namespace uad {

Tensor clamp_to_model_range(const Tensor& img, NoiseKind kind) {
    Tensor out = img;
    const float lo = model_range_lo(kind), hi = model_range_hi(kind);
    for (auto& v : out.data) v = std::clamp(v, lo, hi);
    return out;
}

namespace {

Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }

Tensor reverse_noise(const Tensor& like, std::uint64_t seed, int t) {
    return gaussian_field(like.shape[1], like.shape[2],
                          rng::key(seed, rng::kTagReverseNoise, static_cast<std::uint64_t>(t)))
        .grid;
}

}  // namespace

Tensor reverse_chain(const Denoiser& denoiser, Tensor x, int t_start, std::uint64_t seed,
                     const NoiseSchedule& sched, int stride, std::vector<Tensor>* trace) {
    if (t_start < 0 || t_start > sched.T) throw std::out_of_range("reverse_chain: t out of range");
    if (stride < 1) throw std::invalid_argument("reverse_chain: stride must be >= 1");
    int t = t_start;
    while (t >= 1) {
        Tensor eps_hat = denoiser.predict_eps(x, t);
        if (stride > 1 && t > stride) {
            // deterministic skip step: jump via the predicted clean image
            int tn = t - stride;
            Tensor x0_hat = predict_x0(x, t, eps_hat, sched);
            const float a = static_cast<float>(std::sqrt(sched.alpha_bar[tn]));
            const float b = static_cast<float>(std::sqrt(1.0 - sched.alpha_bar[tn]));
            for (std::size_t i = 0; i < x.data.size(); ++i)
                x.data[i] = a * x0_hat.data[i] + b * eps_hat.data[i];
            t = tn;
        } else {
            Tensor z = t > 1 ? reverse_noise(x, seed, t) : zeros_like(x);
            x = reverse_step(x, t, eps_hat, z, sched);
            --t;
        }
        if (trace) trace->push_back(x);
    }
    return x;
}

ReconstructionResult anoddpm_reconstruct(const Denoiser& denoiser, const Tensor& x0, int t_level,
                                         NoiseKind kind, std::uint64_t seed,
                                         const NoiseSchedule& sched, const SimplexParams& sp,
                                         bool record_trace) {
    if (t_level < 0 || t_level > sched.T)
        throw std::out_of_range("anoddpm_reconstruct: t_level out of range");
    ReconstructionResult res;
    res.input = x0;
    res.t_level = t_level;
    res.kind = kind;
    if (t_level == 0) {
        res.final_image = x0;
        return res;
    }
    NoiseField eps = make_noise(kind, x0.shape[1], x0.shape[2],
                                rng::key(seed, rng::kTagForwardNoise, 0), sp);
    Tensor x = forward_sample(x0, t_level, eps.grid, sched);
    x = reverse_chain(denoiser, std::move(x), t_level, seed, sched, 1,
                      record_trace ? &res.trace : nullptr);
    res.final_image = clamp_to_model_range(x, kind);
    return res;
}

double calibrate_mask_threshold(const std::vector<double>& healthy_map_values, double quantile) {
    if (healthy_map_values.empty())
        throw std::invalid_argument("calibrate_mask_threshold: no calibration values");
    if (!(quantile > 0.0) || !(quantile < 1.0))
        throw std::invalid_argument("calibrate_mask_threshold: quantile must be in (0,1)");
    std::vector<double> v = healthy_map_values;
    std::sort(v.begin(), v.end());
    std::size_t idx = static_cast<std::size_t>(std::ceil(quantile * v.size()));
    return v[std::min(idx == 0 ? 0 : idx - 1, v.size() - 1)];
}

ReconstructionResult autoddpm_reconstruct(const Denoiser& denoiser, const Tensor& x0, int t_level,
                                          std::uint64_t seed, const NoiseSchedule& sched,
                                          const AutoDdpmOptions& opt, const FeatureExtractor& fx) {
    if (!opt.mask_threshold)
        throw std::invalid_argument(
            "autoddpm_reconstruct: mask threshold missing; calibrate on healthy validation "
            "anomaly maps first (calibrate_mask_threshold)");
    if (opt.resample_R < 1) throw std::invalid_argument("autoddpm_reconstruct: resample_R >= 1");

    ReconstructionResult res;
    res.input = x0;
    res.t_level = t_level;
    res.kind = NoiseKind::Gaussian;

    // 1. coarse pseudo-healthy pass
    ReconstructionResult coarse = anoddpm_reconstruct(
        denoiser, x0, t_level, NoiseKind::Gaussian, rng::key(seed, rng::kTagForwardNoise, 1),
        sched, {}, false);
    if (opt.coarse_stride > 1 && t_level > 0) {
        NoiseField eps = gaussian_field(x0.shape[1], x0.shape[2],
                                        rng::key(seed, rng::kTagForwardNoise, 2));
        Tensor x = forward_sample(x0, t_level, eps.grid, sched);
        x = reverse_chain(denoiser, std::move(x), t_level, seed, sched, opt.coarse_stride);
        coarse.final_image = clamp_to_model_range(x, NoiseKind::Gaussian);
    }
    res.coarse = coarse.final_image;

    // 2. binary mask from the coarse product anomaly map
    AnomalyResult amap = anomaly_map(x0, res.coarse, MapMode::Product, fx);
    res.mask = Tensor(x0.shape);
    bool any = false;
    for (std::size_t i = 0; i < amap.map.data.size(); ++i) {
        bool on = amap.map.data[i] > *opt.mask_threshold;
        res.mask.data[i] = on ? 1.0f : 0.0f;
        any = any || on;
    }
    if (t_level == 0 || !any) {
        res.final_image = x0;
        return res;
    }

    // 3. masked inpainting with per-step harmonization resampling
    NoiseField eps0 = gaussian_field(x0.shape[1], x0.shape[2],
                                     rng::key(seed, rng::kTagForwardNoise, 3));
    Tensor x = forward_sample(x0, t_level, eps0.grid, sched);
    for (int t = t_level; t >= 1; --t) {
        for (int r = 0; r < opt.resample_R; ++r) {
            const std::uint64_t step_seed =
                rng::key(seed, rng::kTagResample, static_cast<std::uint64_t>(t) * 64 + r);
            Tensor eps_hat = denoiser.predict_eps(x, t);
            Tensor z = t > 1 ? reverse_noise(x, step_seed, t) : zeros_like(x);
            Tensor x_unknown = reverse_step(x, t, eps_hat, z, sched);
            // known region: the original diffused to t-1
            Tensor x_known;
            if (t - 1 == 0) {
                x_known = x0;
            } else {
                NoiseField ek = gaussian_field(x0.shape[1], x0.shape[2],
                                               rng::key(step_seed, rng::kTagForwardNoise, 4));
                x_known = forward_sample(x0, t - 1, ek.grid, sched);
            }
            Tensor x_prev = x0;
            for (std::size_t i = 0; i < x_prev.data.size(); ++i)
                x_prev.data[i] = res.mask.data[i] > 0.5f ? x_unknown.data[i] : x_known.data[i];
            if (r + 1 < opt.resample_R && t > 1) {
                // renoise one step to harmonize masked and unmasked content
                NoiseField eh = gaussian_field(x0.shape[1], x0.shape[2],
                                               rng::key(step_seed, rng::kTagForwardNoise, 5));
                const float sa = static_cast<float>(std::sqrt(sched.alpha[t]));
                const float sb = static_cast<float>(std::sqrt(sched.beta[t]));
                for (std::size_t i = 0; i < x.data.size(); ++i)
                    x.data[i] = sa * x_prev.data[i] + sb * eh.grid.data[i];
            } else {
                x = std::move(x_prev);
            }
        }
    }

    // 4. stitch: model content only inside the mask
    Tensor inpainted = clamp_to_model_range(x, NoiseKind::Gaussian);
    res.final_image = x0;
    for (std::size_t i = 0; i < res.final_image.data.size(); ++i)
        if (res.mask.data[i] > 0.5f) res.final_image.data[i] = inpainted.data[i];
    return res;
}

std::string map_mode_name(MapMode m) {
    switch (m) {
        case MapMode::MAE: return "mae";
        case MapMode::Perc: return "perc";
        case MapMode::Product: return "product";
    }
    return "mae";
}

namespace {

Tensor minmax_normalize(const Tensor& t) {
    float lo = t.data[0], hi = t.data[0];
    for (float v : t.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    Tensor out = t;
    if (hi > lo) {
        for (auto& v : out.data) v = (v - lo) / (hi - lo);
    } else {
        for (auto& v : out.data) v = 0.0f;
    }
    return out;
}

}  // namespace

AnomalyResult anomaly_map(const Tensor& x0, const Tensor& xhat, MapMode mode,
                          const FeatureExtractor& fx, double top_fraction) {
    check_same_shape(x0, xhat, "anomaly_map");
    Tensor mae_map = x0;
    for (std::size_t i = 0; i < mae_map.data.size(); ++i)
        mae_map.data[i] = std::abs(x0.data[i] - xhat.data[i]);
    AnomalyResult res;
    res.mode = mode;
    switch (mode) {
        case MapMode::MAE:
            res.map = std::move(mae_map);
            break;
        case MapMode::Perc:
            res.map = perceptual_distance(x0, xhat, fx).map;
            break;
        case MapMode::Product: {
            Tensor perc_map = perceptual_distance(x0, xhat, fx).map;
            Tensor a = minmax_normalize(mae_map);
            Tensor b = minmax_normalize(perc_map);
            res.map = a;
            for (std::size_t i = 0; i < a.data.size(); ++i) res.map.data[i] = a.data[i] * b.data[i];
            break;
        }
    }
    res.image_score = image_score(res.map, top_fraction);
    return res;
}

double image_score(const Tensor& map, double top_fraction) {
    if (map.data.empty()) throw std::invalid_argument("image_score: empty map");
    if (!(top_fraction > 0.0) || top_fraction > 1.0)
        throw std::invalid_argument("image_score: top_fraction must be in (0,1]");
    const std::size_t k = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(top_fraction * static_cast<double>(map.numel()))));
    std::vector<float> v(map.data);
    std::nth_element(v.begin(), v.begin() + (k - 1), v.end(), std::greater<float>());
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) acc += v[i];
    return acc / static_cast<double>(k);
}

void export_panel(const std::filesystem::path& path, const ReconstructionResult& rec,
                  const FeatureExtractor& fx) {
    Tensor x0 = from_model_range(rec.input, rec.kind);
    Tensor xhat = from_model_range(rec.final_image, rec.kind);
    std::vector<Tensor> panels{x0};
    if (!rec.coarse.data.empty()) panels.push_back(from_model_range(rec.coarse, rec.kind));
    panels.push_back(xhat);
    panels.push_back(minmax_normalize(anomaly_map(x0, xhat, MapMode::Product, fx).map));
    panels.push_back(minmax_normalize(anomaly_map(x0, xhat, MapMode::Perc, fx).map));

    const int h = x0.shape[1], w = x0.shape[2], gap = 2;
    const int tw = static_cast<int>(panels.size()) * (w + gap) - gap;
    Tensor sheet({1, h, tw});
    for (auto& v : sheet.data) v = 1.0f;
    int ox = 0;
    for (const Tensor& p : panels) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) sheet.chw(0, y, ox + x) = p.chw(0, y, x);
        ox += w + gap;
    }
    save_pgm(path, sheet);
}

}  // namespace uad
