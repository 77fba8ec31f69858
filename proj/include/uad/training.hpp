#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "uad/denoiser.hpp"
#include "uad/noise.hpp"
#include "uad/schedule.hpp"
#include "uad/unet.hpp"

namespace uad {

struct TrainConfig {
    int epochs = 20;
    int batch = 8;
    double learning_rate = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    std::uint64_t seed = 0;
    NoiseKind noise_kind = NoiseKind::Gaussian;
    SimplexParams simplex;
    int resolution = 64;
    bool augment = true;
    int workers = 1;
    bool log_kl = false;
    std::filesystem::path checkpoint_path;  // empty: no file written
    std::filesystem::path dump_dir = ".";   // diagnostic dump on non-finite loss
};

struct TrainLogRow {
    int epoch = 0;
    double mean_loss = 0.0;
    double mean_kl = -1.0;  // negative when not logged
    double wall_seconds = 0.0;
};

struct TrainLog {
    std::vector<TrainLogRow> rows;
};

void write_train_log_csv(const TrainLog& log, std::ostream& os);

// dihedral-group augmentation: k in 0..7 (rot90 multiples x optional flip)
Tensor dihedral(const Tensor& img, int k);

// Monte Carlo estimate of the simplified objective. The predictor receives the
// drawn true noise so tests can inject a perfect predictor; real denoisers
// ignore that argument.
using EpsPredictor = std::function<Tensor(const Tensor& x_t, int t, const Tensor& eps_true)>;
double simplified_loss(const EpsPredictor& predict, const std::vector<Tensor>& batch,
                       const NoiseSchedule& sched, NoiseKind kind, const SimplexParams& sp,
                       std::uint64_t seed, std::uint64_t index_base = 0);

// closed-form KL between the true posterior q(x_{t-1}|x_t,x_0) and the model
// reverse kernel, both with variance beta_tilde_t; mean over pixels
double kl_diagnostic(const Denoiser& denoiser, const Tensor& x0, int t,
                     const NoiseSchedule& sched, const NoiseField& eps);

struct TrainResult {
    DenoiserParams params;
    TrainLog log;
};

TrainResult train(const TrainConfig& config, const UNetConfig& arch,
                  const std::vector<Tensor>& dataset, const NoiseSchedule& sched);

}  // namespace uad
