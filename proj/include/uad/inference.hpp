#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "uad/denoiser.hpp"
#include "uad/metrics.hpp"
#include "uad/noise.hpp"
#include "uad/phantom.hpp"
#include "uad/schedule.hpp"

namespace uad {

struct ReconstructionResult {
    Tensor input;        // x0 in model range
    int t_level = 0;
    NoiseKind kind = NoiseKind::Gaussian;
    Tensor coarse;       // AutoDDPM only
    Tensor final_image;  // clamped to model range
    Tensor mask;         // AutoDDPM binary inpainting mask
    std::vector<Tensor> trace;  // per-step states when requested
};

// model value range per corruption kind
inline float model_range_lo(NoiseKind k) { return k == NoiseKind::Gaussian ? 0.0f : -1.0f; }
inline float model_range_hi(NoiseKind) { return 1.0f; }

Tensor clamp_to_model_range(const Tensor& img, NoiseKind kind);

// run the learned reverse chain from x at level t_start down to 1
Tensor reverse_chain(const Denoiser& denoiser, Tensor x, int t_start, std::uint64_t seed,
                     const NoiseSchedule& sched, int stride = 1,
                     std::vector<Tensor>* trace = nullptr);

ReconstructionResult anoddpm_reconstruct(const Denoiser& denoiser, const Tensor& x0, int t_level,
                                         NoiseKind kind, std::uint64_t seed,
                                         const NoiseSchedule& sched,
                                         const SimplexParams& sp = {}, bool record_trace = false);

// q-quantile of pooled healthy-validation anomaly-map values
double calibrate_mask_threshold(const std::vector<double>& healthy_map_values, double quantile);

struct AutoDdpmOptions {
    std::optional<double> mask_threshold;  // from calibrate_mask_threshold
    int resample_R = 4;
    int coarse_stride = 1;  // >1: deterministic skip sampling for the coarse pass
    std::uint64_t extractor_seed = 17;
};

ReconstructionResult autoddpm_reconstruct(const Denoiser& denoiser, const Tensor& x0, int t_level,
                                          std::uint64_t seed, const NoiseSchedule& sched,
                                          const AutoDdpmOptions& opt, const FeatureExtractor& fx);

enum class MapMode { MAE, Perc, Product };

std::string map_mode_name(MapMode m);

struct AnomalyResult {
    Tensor map;  // non-negative per-pixel scores
    MapMode mode = MapMode::MAE;
    double image_score = 0.0;
};

// x0 and xhat in [0,1]; PRODUCT multiplies the min-max normalized factors
AnomalyResult anomaly_map(const Tensor& x0, const Tensor& xhat, MapMode mode,
                          const FeatureExtractor& fx, double top_fraction = 0.01);

// mean of the top ceil(top_fraction * N) values
double image_score(const Tensor& map, double top_fraction);

// appendix-style side-by-side panel (original, [coarse,] final, product map, perc map)
void export_panel(const std::filesystem::path& path, const ReconstructionResult& rec,
                  const FeatureExtractor& fx);

}  // namespace uad
