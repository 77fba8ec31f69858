#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "uad/noise.hpp"
#include "uad/tensor.hpp"

namespace uad {

enum class AnomalyKind { None, HypoechoicLesion, HyperechoicLesion, VentricleDilation };

std::string anomaly_kind_name(AnomalyKind k);
AnomalyKind anomaly_kind_from_name(const std::string& s);

struct Phantom {
    Tensor image;         // [1,res,res] in [0,1]
    Tensor brain_mask;    // binary {0,1}
    Tensor anomaly_mask;  // binary, all-zero for healthy
    std::uint64_t seed = 0;
    AnomalyKind kind = AnomalyKind::None;
    double severity = 0.0;

    bool healthy() const { return kind == AnomalyKind::None; }
};

Phantom generate_healthy(std::uint64_t seed, int res);

namespace detail {
// calibration access: speckle and percentile normalization can be disabled
Phantom generate_healthy_opts(std::uint64_t seed, int res, bool speckle, bool normalize);
}  // namespace detail

Phantom inject_anomaly(const Phantom& healthy, AnomalyKind kind, double severity,
                       std::uint64_t seed);

// (0,1) stays for Gaussian models; affine to (-1,1) for Simplex models
Tensor to_model_range(const Tensor& image, NoiseKind kind);
Tensor from_model_range(const Tensor& image, NoiseKind kind);

struct DatasetBundle {
    std::vector<Phantom> train;
    std::vector<Phantom> val;
    std::vector<Phantom> test;  // pathological items carry masks + kind
    int resolution = 0;
    std::uint64_t seed = 0;
};

DatasetBundle make_dataset(int n_train, int n_val, int n_test_healthy, int n_test_path,
                           std::uint64_t seed, int res);

// layout: split/role/index.pgm + manifest.csv (path,label,seed,anomaly_kind,severity)
void save_dataset(const DatasetBundle& ds, const std::filesystem::path& dir);
DatasetBundle load_dataset(const std::filesystem::path& dir);

}  // namespace uad
