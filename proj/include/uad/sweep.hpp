#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "uad/inference.hpp"
#include "uad/phantom.hpp"

namespace uad {

enum class Method { AnoDdpmGaussian, AnoDdpmSimplex, AutoDdpm };

std::string method_name(Method m);
Method method_from_name(const std::string& s);

struct SweepConfig {
    std::filesystem::path dataset_dir;
    std::filesystem::path checkpoint_gaussian;
    std::filesystem::path checkpoint_simplex;  // optional; required for the simplex method
    std::filesystem::path out_dir;
    std::vector<Method> methods{Method::AnoDdpmGaussian, Method::AnoDdpmSimplex, Method::AutoDdpm};
    std::vector<int> t_grid{50, 100, 150, 200, 250, 300};
    std::uint64_t seed = 0;
    int workers = 1;
    double mask_threshold_q = 0.95;
    int resample_R = 4;
    int coarse_stride = 1;
    int calibration_images = 8;  // healthy validation images per AutoDDPM threshold
    double top_fraction = 0.01;
    std::uint64_t extractor_seed = 17;
    bool panels = true;
    SimplexParams simplex;
};

struct SweepRow {
    std::string method;
    int t = 0;
    double mae_path_mean = 0, mae_path_std = 0, mae_healthy_mean = 0, mae_healthy_std = 0;
    double ssim_path_mean = 0, ssim_path_std = 0, ssim_healthy_mean = 0, ssim_healthy_std = 0;
    double perc_path_mean = 0, perc_path_std = 0, perc_healthy_mean = 0, perc_healthy_std = 0;
    double auprc_mae = 0, auroc_mae = 0;
    double auprc_perc = 0, auroc_perc = 0;
    double auprc_product = 0, auroc_product = 0;
};

std::string sweep_csv_header();
std::string sweep_row_csv(const SweepRow& r);
SweepRow parse_sweep_row(const std::string& line);

// evaluates every (method, t) cell over the test split; resumes past
// completed cells; returns all rows and writes <out>/sweep.csv
std::vector<SweepRow> run_sweep(const SweepConfig& cfg);

// aligned plain-text tables (AUPRC/AUROC x100) + SVG trend plots
void write_report(const std::vector<SweepRow>& rows, const std::filesystem::path& out_dir,
                  std::ostream& text_out);

std::vector<SweepRow> load_sweep_csv(const std::filesystem::path& path);

}  // namespace uad
