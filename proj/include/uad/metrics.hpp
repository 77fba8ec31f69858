#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "uad/tensor.hpp"

namespace uad {

double mae(const Tensor& x, const Tensor& y);
// restricted to pixels where mask > 0.5
double mae_masked(const Tensor& x, const Tensor& y, const Tensor& mask);

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double c1 = 0.0001;  // (0.01 * L)^2, L = 1
    double c2 = 0.0009;  // (0.03 * L)^2
};

// mean over valid sliding windows of the luminance-contrast-structure product;
// with a mask, only windows centered on mask pixels contribute
double ssim(const Tensor& x, const Tensor& y, const SsimParams& p = {},
            const Tensor* mask = nullptr);

// Frozen conv stack standing in for a pretrained perceptual backbone.
// Levels of 3x3 filters + rectifier, average-pool downsampling between levels.
class FeatureExtractor {
  public:
    static FeatureExtractor seeded(std::uint64_t seed);
    static FeatureExtractor from_file(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    // per-level feature maps for [1,H,W]; H and W must divide total downsampling
    std::vector<Tensor> features(const Tensor& img) const;
    int total_downsampling() const { return 1 << (static_cast<int>(weights_.size()) - 1); }

    const std::vector<Tensor>& weights() const { return weights_; }

  private:
    std::vector<Tensor> weights_;  // [C_l, C_{l-1}, 3, 3]
};

struct PerceptualResult {
    double distance = 0.0;
    Tensor map;  // per-pixel, input resolution
};

PerceptualResult perceptual_distance(const Tensor& x, const Tensor& y,
                                     const FeatureExtractor& fx);

struct ScoredLabels {
    std::vector<double> scores;
    std::vector<int> labels;  // 0 healthy, 1 pathological
};

// rank-statistic AUROC: P(score_pos > score_neg) + 0.5 P(tie)
double auroc(const ScoredLabels& s);
// average precision; ties broken by ascending original index (stable sort)
double auprc(const ScoredLabels& s);

}  // namespace uad
