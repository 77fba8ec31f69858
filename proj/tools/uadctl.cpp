// uadctl: dataset generation, denoiser training, reconstruction and
// noise-level sweeps for the anomaly-detection pipeline.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "uad/inference.hpp"
#include "uad/io.hpp"
#include "uad/metrics.hpp"
#include "uad/phantom.hpp"
#include "uad/rng.hpp"
#include "uad/schedule.hpp"
#include "uad/sweep.hpp"
#include "uad/training.hpp"

namespace fs = std::filesystem;
using namespace uad;

namespace {

int env_threads() {
    const char* v = std::getenv("UAD_THREADS");
    if (!v) return 1;
    try {
        return std::max(1, std::stoi(v));
    } catch (...) {
        return 1;
    }
}

std::vector<Method> parse_methods(const std::vector<std::string>& names) {
    std::vector<Method> out;
    for (const auto& n : names) out.push_back(method_from_name(n));
    return out;
}

NoiseKind noise_from_name(const std::string& s) {
    if (s == "gaussian") return NoiseKind::Gaussian;
    if (s == "simplex") return NoiseKind::Simplex;
    throw CLI::ValidationError("--noise", "expected gaussian or simplex");
}

MapMode map_from_name(const std::string& s) {
    if (s == "mae") return MapMode::MAE;
    if (s == "perc") return MapMode::Perc;
    if (s == "product") return MapMode::Product;
    throw CLI::ValidationError("--map", "expected mae, perc or product");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"diffusion-based anomaly detection on synthetic ultrasound phantoms"};
    app.require_subcommand(1);

    // ---- generate ----
    auto* gen = app.add_subcommand("generate", "synthesize a phantom dataset");
    gen->set_config("--config");
    fs::path gen_out = "data";
    std::uint64_t gen_seed = 0;
    int gen_res = 64, gen_train = 252, gen_val = 30, gen_th = 12, gen_tp = 18;
    gen->add_option("--out", gen_out, "output directory");
    gen->add_option("--seed", gen_seed, "master seed");
    gen->add_option("--resolution", gen_res, "image resolution")
        ->check(CLI::IsMember({64, 128}));
    gen->add_option("--train", gen_train, "healthy training images");
    gen->add_option("--val", gen_val, "healthy validation images");
    gen->add_option("--test-healthy", gen_th, "healthy test images");
    gen->add_option("--test-path", gen_tp, "pathological test images");

    // ---- train ----
    auto* tr = app.add_subcommand("train", "train a denoiser on the healthy split");
    tr->set_config("--config");
    fs::path tr_data = "data", tr_out = "model.uadc";
    std::string tr_noise = "gaussian";
    TrainConfig tc;
    int tr_base = 32, tr_depth = 3, tr_blocks = 2;
    tr->add_option("--data", tr_data, "dataset directory (from `uadctl generate`)");
    tr->add_option("--out", tr_out, "checkpoint path");
    tr->add_option("--noise", tr_noise, "training corruption: gaussian|simplex");
    tr->add_option("--seed", tc.seed, "training seed");
    tr->add_option("--epochs", tc.epochs, "epochs");
    tr->add_option("--batch", tc.batch, "batch size");
    tr->add_option("--lr", tc.learning_rate, "Adam learning rate");
    tr->add_option("--base-channels", tr_base, "U-Net base channel count");
    tr->add_option("--depth", tr_depth, "U-Net depth");
    tr->add_option("--blocks", tr_blocks, "residual blocks per level");
    tr->add_flag("--no-augment", "disable rotation/flip augmentation");
    tr->add_flag("--log-kl", tc.log_kl, "log the per-epoch KL diagnostic");
    int tr_workers = env_threads();
    tr->add_option("--workers", tr_workers, "gradient worker threads")
        ->envname("UAD_THREADS");

    // ---- reconstruct ----
    auto* rc = app.add_subcommand("reconstruct", "reconstruct one image and export a panel");
    rc->set_config("--config");
    fs::path rc_ckpt, rc_image, rc_out = "recon";
    std::string rc_method = "anoddpm-gaussian", rc_map = "product";
    int rc_t = 250;
    std::uint64_t rc_seed = 0;
    double rc_threshold = -1.0;
    rc->add_option("--checkpoint", rc_ckpt, "denoiser checkpoint")->required();
    rc->add_option("--image", rc_image, "input PGM image")->required();
    rc->add_option("--out", rc_out, "output directory");
    rc->add_option("--method", rc_method, "anoddpm-gaussian|anoddpm-simplex|autoddpm");
    rc->add_option("--t", rc_t, "partial diffusion level");
    rc->add_option("--seed", rc_seed, "noise seed");
    rc->add_option("--map", rc_map, "anomaly map mode: mae|perc|product");
    rc->add_option("--threshold", rc_threshold,
                   "autoddpm mask threshold (from a sweep calibration file)");

    // ---- sweep ----
    auto* sw = app.add_subcommand("sweep", "noise-level sweep over the test split");
    sw->set_config("--config");
    SweepConfig sc;
    sc.workers = env_threads();
    std::vector<std::string> sw_methods{"anoddpm-gaussian", "anoddpm-simplex", "autoddpm"};
    sw->add_option("--data", sc.dataset_dir, "dataset directory")->required();
    sw->add_option("--checkpoint-gaussian", sc.checkpoint_gaussian, "gaussian-noise checkpoint");
    sw->add_option("--checkpoint-simplex", sc.checkpoint_simplex, "simplex-noise checkpoint");
    sw->add_option("--out", sc.out_dir, "output directory")->required();
    sw->add_option("--methods", sw_methods, "methods to evaluate")->delimiter(',');
    sw->add_option("--t-grid", sc.t_grid, "noise levels")->delimiter(',');
    sw->add_option("--seed", sc.seed, "evaluation seed");
    sw->add_option("--workers", sc.workers, "image worker threads")->envname("UAD_THREADS");
    sw->add_option("--mask-quantile", sc.mask_threshold_q, "autoddpm mask quantile");
    sw->add_option("--resample", sc.resample_R, "autoddpm resampling count");
    sw->add_option("--calibration-images", sc.calibration_images,
                   "healthy validation images per threshold calibration");
    sw->add_option("--top-fraction", sc.top_fraction, "image-score top pixel fraction");
    bool sw_no_panels = false;
    sw->add_flag("--no-panels", sw_no_panels, "skip qualitative panels");

    // ---- report ----
    auto* rp = app.add_subcommand("report", "tables and plots from a sweep csv");
    fs::path rp_csv, rp_out;
    rp->add_option("--sweep", rp_csv, "sweep.csv from `uadctl sweep`")->required();
    rp->add_option("--out", rp_out, "directory for SVG plots");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            DatasetBundle ds = make_dataset(gen_train, gen_val, gen_th, gen_tp, gen_seed, gen_res);
            save_dataset(ds, gen_out);
            std::cout << "wrote " << ds.train.size() << " train / " << ds.val.size() << " val / "
                      << ds.test.size() << " test images to " << gen_out.string() << "\n";
        } else if (*tr) {
            DatasetBundle ds = load_dataset(tr_data);
            tc.noise_kind = noise_from_name(tr_noise);
            tc.resolution = ds.resolution;
            tc.augment = tr->count("--no-augment") == 0;
            tc.workers = tr_workers;
            tc.checkpoint_path = tr_out;
            tc.dump_dir = tr_out.parent_path().empty() ? "." : tr_out.parent_path();
            UNetConfig arch;
            arch.base_channels = tr_base;
            arch.depth = tr_depth;
            arch.blocks_per_level = tr_blocks;
            std::vector<Tensor> images;
            for (const auto& p : ds.train) images.push_back(to_model_range(p.image, tc.noise_kind));
            NoiseSchedule sched = linear_schedule(1000, 1e-4, 0.02);
            TrainResult res = train(tc, arch, images, sched);
            std::ofstream log((tr_out.parent_path().empty() ? fs::path(".") : tr_out.parent_path())
                              / "train_log.csv");
            write_train_log_csv(res.log, log);
            std::cout << "checkpoint written to " << tr_out.string() << "\n";
        } else if (*rc) {
            UNetDenoiser den(checkpoint_load(rc_ckpt));
            Tensor img = load_pgm(rc_image);
            Method m = method_from_name(rc_method);
            NoiseKind kind = m == Method::AnoDdpmSimplex ? NoiseKind::Simplex : NoiseKind::Gaussian;
            Tensor x0 = to_model_range(img, kind);
            NoiseSchedule sched = linear_schedule(1000, 1e-4, 0.02);
            FeatureExtractor fx = FeatureExtractor::seeded(17);
            ReconstructionResult rec;
            if (m == Method::AutoDdpm) {
                if (rc_threshold < 0)
                    throw std::runtime_error(
                        "autoddpm needs --threshold; take it from a sweep calibration file "
                        "(out/calibration_t<t>.txt)");
                AutoDdpmOptions opt;
                opt.mask_threshold = rc_threshold;
                rec = autoddpm_reconstruct(den, x0, rc_t, rc_seed, sched, opt, fx);
            } else {
                rec = anoddpm_reconstruct(den, x0, rc_t, kind, rc_seed, sched);
            }
            fs::create_directories(rc_out);
            export_panel(rc_out / "panel.pgm", rec, fx);
            Tensor xhat = from_model_range(rec.final_image, rec.kind);
            save_pgm(rc_out / "reconstruction.pgm", xhat);
            AnomalyResult ar = anomaly_map(img, xhat, map_from_name(rc_map), fx);
            save_tensor(rc_out / "anomaly_map.uadt", ar.map);
            std::cout << "image score (" << rc_map << "): " << ar.image_score << "\n";
        } else if (*sw) {
            sc.methods = parse_methods(sw_methods);
            sc.panels = !sw_no_panels;
            std::vector<SweepRow> rows = run_sweep(sc);
            write_report(rows, sc.out_dir, std::cout);
        } else if (*rp) {
            std::vector<SweepRow> rows = load_sweep_csv(rp_csv);
            write_report(rows, rp_out, std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
