#include "uad/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>
#include <thread>

#include "uad/io.hpp"
#include "uad/rng.hpp"

namespace uad {

std::string method_name(Method m) {
    switch (m) {
        case Method::AnoDdpmGaussian: return "anoddpm-gaussian";
        case Method::AnoDdpmSimplex: return "anoddpm-simplex";
        case Method::AutoDdpm: return "autoddpm";
    }
    return "anoddpm-gaussian";
}

Method method_from_name(const std::string& s) {
    if (s == "anoddpm-gaussian") return Method::AnoDdpmGaussian;
    if (s == "anoddpm-simplex") return Method::AnoDdpmSimplex;
    if (s == "autoddpm") return Method::AutoDdpm;
    throw std::invalid_argument("unknown method: " + s);
}

std::string sweep_csv_header() {
    return "method,t,mae_path_mean,mae_path_std,mae_healthy_mean,mae_healthy_std,"
           "ssim_path_mean,ssim_path_std,ssim_healthy_mean,ssim_healthy_std,"
           "perc_path_mean,perc_path_std,perc_healthy_mean,perc_healthy_std,"
           "auprc_mae,auroc_mae,auprc_perc,auroc_perc,auprc_product,auroc_product";
}

std::string sweep_row_csv(const SweepRow& r) {
    std::ostringstream os;
    os.precision(12);
    os << r.method << ',' << r.t << ',' << r.mae_path_mean << ',' << r.mae_path_std << ','
       << r.mae_healthy_mean << ',' << r.mae_healthy_std << ',' << r.ssim_path_mean << ','
       << r.ssim_path_std << ',' << r.ssim_healthy_mean << ',' << r.ssim_healthy_std << ','
       << r.perc_path_mean << ',' << r.perc_path_std << ',' << r.perc_healthy_mean << ','
       << r.perc_healthy_std << ',' << r.auprc_mae << ',' << r.auroc_mae << ',' << r.auprc_perc
       << ',' << r.auroc_perc << ',' << r.auprc_product << ',' << r.auroc_product;
    return os.str();
}

SweepRow parse_sweep_row(const std::string& line) {
    std::istringstream ss(line);
    std::string tok;
    auto next = [&] {
        if (!std::getline(ss, tok, ',')) throw std::runtime_error("sweep csv: short row");
        return tok;
    };
    SweepRow r;
    r.method = next();
    r.t = std::stoi(next());
    double* fields[] = {&r.mae_path_mean,     &r.mae_path_std,    &r.mae_healthy_mean,
                        &r.mae_healthy_std,   &r.ssim_path_mean,  &r.ssim_path_std,
                        &r.ssim_healthy_mean, &r.ssim_healthy_std, &r.perc_path_mean,
                        &r.perc_path_std,     &r.perc_healthy_mean, &r.perc_healthy_std,
                        &r.auprc_mae,         &r.auroc_mae,       &r.auprc_perc,
                        &r.auroc_perc,        &r.auprc_product,   &r.auroc_product};
    for (double* f : fields) *f = std::stod(next());
    return r;
}

namespace {

struct ImageEval {
    int label = 0;
    double mae = 0, ssim_v = 0, perc = 0;
    double score_mae = 0, score_perc = 0, score_product = 0;
};

void mean_std(const std::vector<double>& v, double& mean, double& std) {
    mean = 0;
    std = 0;
    if (v.empty()) return;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    if (v.size() < 2) return;
    for (double x : v) std += (x - mean) * (x - mean);
    std = std::sqrt(std / static_cast<double>(v.size() - 1));
}

Tensor masked_map(const Tensor& map, const Tensor& brain_mask) {
    Tensor out = map;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        if (brain_mask.data[i] <= 0.5f) out.data[i] = 0.0f;
    return out;
}

double masked_mean(const Tensor& map, const Tensor& brain_mask) {
    double acc = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < map.data.size(); ++i)
        if (brain_mask.data[i] > 0.5f) {
            acc += map.data[i];
            ++n;
        }
    return n ? acc / static_cast<double>(n) : 0.0;
}

ImageEval evaluate_image(const Phantom& ph, const ReconstructionResult& rec,
                         const FeatureExtractor& fx, double top_fraction) {
    ImageEval ev;
    ev.label = ph.healthy() ? 0 : 1;
    Tensor xhat = from_model_range(rec.final_image, rec.kind);
    ev.mae = mae_masked(ph.image, xhat, ph.brain_mask);
    ev.ssim_v = ssim(ph.image, xhat, {}, &ph.brain_mask);
    ev.perc = masked_mean(perceptual_distance(ph.image, xhat, fx).map, ph.brain_mask);
    for (MapMode mode : {MapMode::MAE, MapMode::Perc, MapMode::Product}) {
        AnomalyResult ar = anomaly_map(ph.image, xhat, mode, fx, top_fraction);
        double score = image_score(masked_map(ar.map, ph.brain_mask), top_fraction);
        if (mode == MapMode::MAE) ev.score_mae = score;
        if (mode == MapMode::Perc) ev.score_perc = score;
        if (mode == MapMode::Product) ev.score_product = score;
    }
    return ev;
}

SweepRow aggregate(const std::string& method, int t, const std::vector<ImageEval>& evals) {
    SweepRow r;
    r.method = method;
    r.t = t;
    std::vector<double> mae_p, mae_h, ssim_p, ssim_h, perc_p, perc_h;
    ScoredLabels s_mae, s_perc, s_prod;
    for (const auto& ev : evals) {
        (ev.label ? mae_p : mae_h).push_back(ev.mae);
        (ev.label ? ssim_p : ssim_h).push_back(ev.ssim_v);
        (ev.label ? perc_p : perc_h).push_back(ev.perc);
        s_mae.scores.push_back(ev.score_mae);
        s_perc.scores.push_back(ev.score_perc);
        s_prod.scores.push_back(ev.score_product);
        s_mae.labels.push_back(ev.label);
        s_perc.labels.push_back(ev.label);
        s_prod.labels.push_back(ev.label);
    }
    mean_std(mae_p, r.mae_path_mean, r.mae_path_std);
    mean_std(mae_h, r.mae_healthy_mean, r.mae_healthy_std);
    mean_std(ssim_p, r.ssim_path_mean, r.ssim_path_std);
    mean_std(ssim_h, r.ssim_healthy_mean, r.ssim_healthy_std);
    mean_std(perc_p, r.perc_path_mean, r.perc_path_std);
    mean_std(perc_h, r.perc_healthy_mean, r.perc_healthy_std);
    r.auprc_mae = auprc(s_mae);
    r.auroc_mae = auroc(s_mae);
    r.auprc_perc = auprc(s_perc);
    r.auroc_perc = auroc(s_perc);
    r.auprc_product = auprc(s_prod);
    r.auroc_product = auroc(s_prod);
    return r;
}

std::string cell_name(const std::string& method, int t) {
    return method + "_t" + std::to_string(t);
}

}  // namespace

std::vector<SweepRow> run_sweep(const SweepConfig& cfg) {
    namespace fs = std::filesystem;
    DatasetBundle ds = load_dataset(cfg.dataset_dir);
    FeatureExtractor fx = FeatureExtractor::seeded(cfg.extractor_seed);
    fs::create_directories(cfg.out_dir / "cells");

    bool need_gauss = false, need_simplex = false;
    for (Method m : cfg.methods)
        (m == Method::AnoDdpmSimplex ? need_simplex : need_gauss) = true;

    std::unique_ptr<UNetDenoiser> den_gauss, den_simplex;
    auto require_ckpt = [](const fs::path& p, const char* what) {
        if (p.empty() || !fs::exists(p))
            throw std::runtime_error(std::string("missing ") + what + " checkpoint" +
                                     (p.empty() ? "" : ": " + p.string()) +
                                     " (run `uadctl train` first)");
    };
    if (need_gauss) {
        require_ckpt(cfg.checkpoint_gaussian, "gaussian");
        den_gauss = std::make_unique<UNetDenoiser>(checkpoint_load(cfg.checkpoint_gaussian));
    }
    if (need_simplex) {
        require_ckpt(cfg.checkpoint_simplex, "simplex");
        den_simplex = std::make_unique<UNetDenoiser>(checkpoint_load(cfg.checkpoint_simplex));
    }

    NoiseSchedule sched = linear_schedule(1000, 1e-4, 0.02);

    // AutoDDPM thresholds, calibrated per t on healthy validation images
    std::map<int, double> thresholds;
    bool want_auto = std::count(cfg.methods.begin(), cfg.methods.end(), Method::AutoDdpm) > 0;
    if (want_auto) {
        for (int t : cfg.t_grid) {
            fs::path cache = cfg.out_dir / ("calibration_t" + std::to_string(t) + ".txt");
            if (fs::exists(cache)) {
                thresholds[t] = std::stod(load_config_file(cache).at("threshold"));
                continue;
            }
            std::vector<double> pool;
            int n = std::min<int>(cfg.calibration_images, static_cast<int>(ds.val.size()));
            if (n == 0) throw std::runtime_error("autoddpm calibration needs validation images");
            for (int i = 0; i < n; ++i) {
                const Phantom& ph = ds.val[i];
                auto rec = anoddpm_reconstruct(
                    *den_gauss, ph.image, t, NoiseKind::Gaussian,
                    rng::key(cfg.seed, 0x7713, static_cast<std::uint64_t>(t) * 4096 + i), sched);
                AnomalyResult ar = anomaly_map(ph.image, rec.final_image, MapMode::Product, fx);
                for (float v : ar.map.data) pool.push_back(v);
            }
            thresholds[t] = calibrate_mask_threshold(pool, cfg.mask_threshold_q);
            std::ostringstream os;
            os.precision(17);
            os << "threshold = " << thresholds[t] << "\n";
            atomic_write_text(cache, os.str());
        }
    }

    std::vector<SweepRow> rows;
    for (Method m : cfg.methods) {
        for (int t : cfg.t_grid) {
            const std::string mname = method_name(m);
            fs::path cell_dir = cfg.out_dir / "cells" / cell_name(mname, t);
            fs::path cell_csv = cell_dir / "cell.csv";
            if (fs::exists(cell_csv)) {
                std::ifstream is(cell_csv);
                std::string line;
                std::getline(is, line);
                std::vector<ImageEval> evals;
                while (std::getline(is, line)) {
                    if (line.empty()) continue;
                    std::istringstream ss(line);
                    ImageEval ev;
                    std::string tok;
                    std::getline(ss, tok, ',');  // index
                    std::getline(ss, tok, ',');
                    ev.label = std::stoi(tok);
                    std::getline(ss, tok, ',');
                    ev.mae = std::stod(tok);
                    std::getline(ss, tok, ',');
                    ev.ssim_v = std::stod(tok);
                    std::getline(ss, tok, ',');
                    ev.perc = std::stod(tok);
                    std::getline(ss, tok, ',');
                    ev.score_mae = std::stod(tok);
                    std::getline(ss, tok, ',');
                    ev.score_perc = std::stod(tok);
                    std::getline(ss, tok, ',');
                    ev.score_product = std::stod(tok);
                    evals.push_back(ev);
                }
                rows.push_back(aggregate(mname, t, evals));
                continue;
            }

            const Denoiser& den = (m == Method::AnoDdpmSimplex) ? *den_simplex : *den_gauss;
            const NoiseKind kind =
                (m == Method::AnoDdpmSimplex) ? NoiseKind::Simplex : NoiseKind::Gaussian;
            std::vector<ImageEval> evals(ds.test.size());
            std::vector<ReconstructionResult> recs(ds.test.size());

            auto run_image = [&](std::size_t i) {
                const Phantom& ph = ds.test[i];
                Tensor x0 = to_model_range(ph.image, kind);
                // stream keyed by (seed, image id, method, level)
                std::uint64_t iseed =
                    rng::key(cfg.seed, 0x5eed,
                             (static_cast<std::uint64_t>(m) << 40) +
                                 (static_cast<std::uint64_t>(t) << 20) + i);
                if (m == Method::AutoDdpm) {
                    AutoDdpmOptions opt;
                    opt.mask_threshold = thresholds.at(t);
                    opt.resample_R = cfg.resample_R;
                    opt.coarse_stride = cfg.coarse_stride;
                    recs[i] = autoddpm_reconstruct(den, x0, t, iseed, sched, opt, fx);
                } else {
                    recs[i] = anoddpm_reconstruct(den, x0, t, kind, iseed, sched, cfg.simplex);
                }
                evals[i] = evaluate_image(ph, recs[i], fx, cfg.top_fraction);
            };

            const int workers = std::max(1, cfg.workers);
            if (workers == 1) {
                for (std::size_t i = 0; i < ds.test.size(); ++i) run_image(i);
            } else {
                std::vector<std::thread> pool;
                for (int w = 0; w < workers; ++w)
                    pool.emplace_back([&, w] {
                        for (std::size_t i = w; i < ds.test.size(); i += workers) run_image(i);
                    });
                for (auto& th : pool) th.join();
            }

            fs::create_directories(cell_dir);
            if (cfg.panels) {
                bool did_h = false, did_p = false;
                for (std::size_t i = 0; i < ds.test.size(); ++i) {
                    bool healthy = ds.test[i].healthy();
                    if (healthy && did_h) continue;
                    if (!healthy && did_p) continue;
                    export_panel(cell_dir / (std::string(healthy ? "healthy" : "pathology") +
                                             "_panel.pgm"),
                                 recs[i], fx);
                    (healthy ? did_h : did_p) = true;
                }
            }
            std::ostringstream os;
            os << "index,label,mae,ssim,perc,score_mae,score_perc,score_product\n";
            os.precision(12);
            for (std::size_t i = 0; i < evals.size(); ++i) {
                const auto& ev = evals[i];
                os << i << ',' << ev.label << ',' << ev.mae << ',' << ev.ssim_v << ',' << ev.perc
                   << ',' << ev.score_mae << ',' << ev.score_perc << ',' << ev.score_product
                   << '\n';
            }
            atomic_write_text(cell_csv, os.str());
            rows.push_back(aggregate(mname, t, evals));
        }
    }

    std::ostringstream os;
    os << sweep_csv_header() << '\n';
    for (const auto& r : rows) os << sweep_row_csv(r) << '\n';
    atomic_write_text(cfg.out_dir / "sweep.csv", os.str());
    return rows;
}

std::vector<SweepRow> load_sweep_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open sweep csv: " + path.string());
    std::string line;
    std::getline(is, line);
    std::vector<SweepRow> rows;
    while (std::getline(is, line))
        if (!line.empty()) rows.push_back(parse_sweep_row(line));
    return rows;
}

namespace {

void write_svg_plot(const std::filesystem::path& path, const std::string& title,
                    const std::vector<SweepRow>& rows, double (*value)(const SweepRow&)) {
    std::vector<std::string> methods;
    for (const auto& r : rows)
        if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
            methods.push_back(r.method);
    double lo = 1e300, hi = -1e300;
    int tlo = 1 << 30, thi = 0;
    for (const auto& r : rows) {
        lo = std::min(lo, value(r));
        hi = std::max(hi, value(r));
        tlo = std::min(tlo, r.t);
        thi = std::max(thi, r.t);
    }
    if (hi <= lo) hi = lo + 1;
    if (thi <= tlo) thi = tlo + 1;
    const int W = 640, H = 400, ml = 60, mr = 20, mt = 40, mb = 40;
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
    std::ostringstream os;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    os << "<text x='" << W / 2 << "' y='20' text-anchor='middle' font-size='16'>" << title
       << "</text>\n";
    os << "<line x1='" << ml << "' y1='" << H - mb << "' x2='" << W - mr << "' y2='" << H - mb
       << "' stroke='black'/>\n";
    os << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << H - mb
       << "' stroke='black'/>\n";
    auto px = [&](int t) {
        return ml + (W - ml - mr) * (t - tlo) / static_cast<double>(thi - tlo);
    };
    auto py = [&](double v) { return H - mb - (H - mt - mb) * (v - lo) / (hi - lo); };
    os << std::fixed << std::setprecision(1);
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        std::vector<const SweepRow*> mrows;
        for (const auto& r : rows)
            if (r.method == methods[mi]) mrows.push_back(&r);
        std::sort(mrows.begin(), mrows.end(),
                  [](const SweepRow* a, const SweepRow* b) { return a->t < b->t; });
        os << "<polyline fill='none' stroke='" << colors[mi % 4] << "' stroke-width='2' points='";
        for (const auto* r : mrows) os << px(r->t) << ',' << py(value(*r)) << ' ';
        os << "'/>\n";
        os << "<text x='" << W - mr - 150 << "' y='" << mt + 18 * mi << "' fill='"
           << colors[mi % 4] << "' font-size='12'>" << methods[mi] << "</text>\n";
    }
    os << "<text x='" << (W + ml) / 2 << "' y='" << H - 8
       << "' text-anchor='middle' font-size='12'>noise level t</text>\n";
    os << "</svg>\n";
    atomic_write_text(path, os.str());
}

}  // namespace

void write_report(const std::vector<SweepRow>& rows, const std::filesystem::path& out_dir,
                  std::ostream& text) {
    text << std::left << std::setw(18) << "method" << std::setw(6) << "t";
    for (const char* col : {"MAE(path)", "MAE(hlth)", "SSIM(path)", "SSIM(hlth)", "PERC(path)",
                            "PERC(hlth)", "AUPRC(mae)", "AUROC(mae)", "AUPRC(perc)",
                            "AUROC(perc)", "AUPRC(prod)", "AUROC(prod)"})
        text << std::setw(13) << col;
    text << '\n';
    for (const auto& r : rows) {
        text << std::left << std::setw(18) << r.method << std::setw(6) << r.t;
        text << std::fixed << std::setprecision(4);
        std::ostringstream c;
        auto cell = [&](double mean, double std) {
            std::ostringstream os;
            os << std::fixed << std::setprecision(3) << mean << "±" << std;
            return os.str();
        };
        text << std::setw(13) << cell(r.mae_path_mean, r.mae_path_std) << std::setw(13)
             << cell(r.mae_healthy_mean, r.mae_healthy_std) << std::setw(13)
             << cell(r.ssim_path_mean, r.ssim_path_std) << std::setw(13)
             << cell(r.ssim_healthy_mean, r.ssim_healthy_std) << std::setw(13)
             << cell(r.perc_path_mean, r.perc_path_std) << std::setw(13)
             << cell(r.perc_healthy_mean, r.perc_healthy_std);
        std::ostringstream pct;
        pct << std::fixed << std::setprecision(1);
        for (double v : {r.auprc_mae, r.auroc_mae, r.auprc_perc, r.auroc_perc, r.auprc_product,
                         r.auroc_product}) {
            std::ostringstream os;
            os << std::fixed << std::setprecision(1) << v * 100.0;
            text << std::setw(13) << os.str();
        }
        text << '\n';
    }
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        write_svg_plot(out_dir / "mae_healthy.svg", "healthy MAE vs noise level", rows,
                       [](const SweepRow& r) { return r.mae_healthy_mean; });
        write_svg_plot(out_dir / "auprc_product.svg", "AUPRC (product map) vs noise level", rows,
                       [](const SweepRow& r) { return r.auprc_product; });
        write_svg_plot(out_dir / "ssim_healthy.svg", "healthy SSIM vs noise level", rows,
                       [](const SweepRow& r) { return r.ssim_healthy_mean; });
    }
}

}  // namespace uad
