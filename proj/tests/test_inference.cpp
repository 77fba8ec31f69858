#include <cmath>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "uad/denoiser.hpp"
#include "uad/inference.hpp"
#include "uad/noise.hpp"
#include "uad/phantom.hpp"
#include "uad/rng.hpp"

using namespace uad;

namespace {

// predicts zero noise everywhere; reverse steps become pure rescaling
struct ZeroDenoiser : Denoiser {
    Tensor predict_eps(const Tensor& x_t, int) const override { return Tensor(x_t.shape); }
};

NoiseSchedule sched_default() { return linear_schedule(1000, 1e-4, 0.02); }

Tensor test_image(std::uint64_t seed) {
    Tensor x = gaussian_field(32, 32, seed).grid;
    for (auto& v : x.data) v = std::clamp(0.5f + 0.15f * v, 0.0f, 1.0f);
    return x;
}

}  // namespace

TEST_CASE("clamp_to_model_range respects the per-kind range") {
    Tensor x({1, 1, 3});
    x.data = {-2.0f, 0.5f, 3.0f};
    Tensor g = clamp_to_model_range(x, NoiseKind::Gaussian);
    CHECK(g.data == std::vector<float>{0.0f, 0.5f, 1.0f});
    Tensor s = clamp_to_model_range(x, NoiseKind::Simplex);
    CHECK(s.data == std::vector<float>{-1.0f, 0.5f, 1.0f});
}

TEST_CASE("reverse chain with the analytic denoiser is deterministic per seed") {
    NoiseSchedule sched = sched_default();
    Tensor mean({1, 8, 8}, 0.5f);
    AnalyticDenoiser d(mean, 0.01, sched);

    Tensor x = gaussian_field(8, 8, 3).grid;
    Tensor a = reverse_chain(d, x, 200, 42, sched);
    Tensor b = reverse_chain(d, x, 200, 42, sched);
    CHECK(a.data == b.data);
    Tensor c = reverse_chain(d, x, 200, 43, sched);
    CHECK(a.data != c.data);

    CHECK_THROWS(reverse_chain(d, x, 1001, 1, sched));
    CHECK_THROWS(reverse_chain(d, x, 100, 1, sched, 0));
}

TEST_CASE("reverse chain pulls samples toward the analytic data distribution") {
    NoiseSchedule sched = sched_default();
    Tensor mean({1, 4, 4}, 0.5f);
    AnalyticDenoiser d(mean, 0.0, sched);  // point mass at the mean image

    // from pure noise the zero-variance optimal denoiser must land on the mean
    Tensor x = gaussian_field(4, 4, 9).grid;
    Tensor out = reverse_chain(d, x, 1000, 7, sched);
    for (float v : out.data) CHECK(std::abs(v - 0.5f) < 0.05f);
}

TEST_CASE("strided reverse chain approximates the dense one") {
    NoiseSchedule sched = sched_default();
    Tensor mean({1, 8, 8}, 0.5f);
    AnalyticDenoiser d(mean, 0.0, sched);
    Tensor x = gaussian_field(8, 8, 5).grid;
    Tensor dense = reverse_chain(d, x, 300, 11, sched, 1);
    Tensor skip = reverse_chain(d, x, 300, 11, sched, 25);
    double worst = 0;
    for (std::size_t i = 0; i < dense.data.size(); ++i)
        worst = std::max(worst, std::abs(static_cast<double>(dense.data[i]) - skip.data[i]));
    CHECK(worst < 0.05);
}

TEST_CASE("anoddpm: t=0 identity, determinism, trace length") {
    NoiseSchedule sched = sched_default();
    Tensor x0 = test_image(21);
    AnalyticDenoiser d(Tensor(x0.shape, 0.5f), 0.01, sched);

    ReconstructionResult id = anoddpm_reconstruct(d, x0, 0, NoiseKind::Gaussian, 1, sched);
    CHECK(id.final_image.data == x0.data);
    CHECK(id.trace.empty());

    ReconstructionResult a =
        anoddpm_reconstruct(d, x0, 100, NoiseKind::Gaussian, 1, sched, {}, true);
    ReconstructionResult b = anoddpm_reconstruct(d, x0, 100, NoiseKind::Gaussian, 1, sched);
    CHECK(a.final_image.data == b.final_image.data);
    CHECK(a.trace.size() == 100);
    CHECK(a.t_level == 100);

    for (float v : a.final_image.data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }

    ReconstructionResult c = anoddpm_reconstruct(d, x0, 100, NoiseKind::Gaussian, 2, sched);
    CHECK(a.final_image.data != c.final_image.data);

    CHECK_THROWS(anoddpm_reconstruct(d, x0, 1001, NoiseKind::Gaussian, 1, sched));
}

TEST_CASE("anoddpm with simplex corruption uses the simplex forward field") {
    NoiseSchedule sched = sched_default();
    Tensor x0 = test_image(22);
    Tensor model = to_model_range(x0, NoiseKind::Simplex);
    AnalyticDenoiser d(Tensor(x0.shape, 0.0f), 0.05, sched);
    SimplexParams sp;
    ReconstructionResult g = anoddpm_reconstruct(d, model, 80, NoiseKind::Gaussian, 1, sched);
    ReconstructionResult s = anoddpm_reconstruct(d, model, 80, NoiseKind::Simplex, 1, sched, sp);
    CHECK(g.final_image.data != s.final_image.data);
    for (float v : s.final_image.data) {
        CHECK(v >= -1.0f);
        CHECK(v <= 1.0f);
    }
}

TEST_CASE("calibrate_mask_threshold is the ceil-rank quantile") {
    std::vector<double> v{5, 1, 4, 2, 3};
    CHECK(calibrate_mask_threshold(v, 0.95) == 5.0);
    CHECK(calibrate_mask_threshold(v, 0.5) == 3.0);
    CHECK(calibrate_mask_threshold(v, 0.2) == 1.0);
    CHECK(calibrate_mask_threshold({7.0}, 0.95) == 7.0);
    CHECK_THROWS(calibrate_mask_threshold({}, 0.95));
    CHECK_THROWS(calibrate_mask_threshold(v, 0.0));
    CHECK_THROWS(calibrate_mask_threshold(v, 1.0));
}

TEST_CASE("autoddpm: threshold required, huge threshold degenerates to identity") {
    NoiseSchedule sched = sched_default();
    Tensor x0 = test_image(23);
    AnalyticDenoiser d(Tensor(x0.shape, 0.5f), 0.01, sched);
    FeatureExtractor fx = FeatureExtractor::seeded(17);

    AutoDdpmOptions opt;
    CHECK_THROWS(autoddpm_reconstruct(d, x0, 50, 1, sched, opt, fx));

    opt.mask_threshold = 1e9;  // nothing exceeds it -> empty mask
    ReconstructionResult r = autoddpm_reconstruct(d, x0, 50, 1, sched, opt, fx);
    CHECK(r.final_image.data == x0.data);
    for (float v : r.mask.data) CHECK(v == 0.0f);

    opt.mask_threshold = 0.5;
    opt.resample_R = 0;
    CHECK_THROWS(autoddpm_reconstruct(d, x0, 50, 1, sched, opt, fx));
}

TEST_CASE("autoddpm: pixels outside the mask keep their original bits") {
    NoiseSchedule sched = sched_default();
    Phantom h = generate_healthy(51, 64);
    Phantom p = inject_anomaly(h, AnomalyKind::HyperechoicLesion, 0.9, 4);
    AnalyticDenoiser d(h.image, 0.005, sched);
    FeatureExtractor fx = FeatureExtractor::seeded(17);

    AutoDdpmOptions opt;
    opt.mask_threshold = 0.05;
    opt.resample_R = 2;
    ReconstructionResult r = autoddpm_reconstruct(d, p.image, 120, 6, sched, opt, fx);

    std::size_t inside = 0;
    for (std::size_t i = 0; i < r.final_image.data.size(); ++i) {
        if (r.mask.data[i] > 0.5f) {
            ++inside;
        } else {
            CHECK(r.final_image.data[i] == p.image.data[i]);
        }
    }
    CHECK(inside > 0);
    CHECK(r.coarse.numel() == p.image.numel());

    ReconstructionResult r2 = autoddpm_reconstruct(d, p.image, 120, 6, sched, opt, fx);
    CHECK(r2.final_image.data == r.final_image.data);
}

TEST_CASE("anomaly maps: trivial cases and product composition") {
    FeatureExtractor fx = FeatureExtractor::seeded(17);
    Tensor x = test_image(31);

    for (MapMode mode : {MapMode::MAE, MapMode::Perc, MapMode::Product}) {
        AnomalyResult r = anomaly_map(x, x, mode, fx);
        CHECK(r.image_score == 0.0);
        for (float v : r.map.data) CHECK(v == 0.0f);
        CHECK(r.mode == mode);
    }

    Tensor y = x;
    y.data[5] += 0.5f;
    AnomalyResult m = anomaly_map(x, y, MapMode::MAE, fx);
    CHECK(m.map.data[5] == doctest::Approx(0.5).epsilon(1e-6));

    // product map is bounded by [0,1] since both factors are min-max normalized
    Tensor z = test_image(32);
    AnomalyResult pr = anomaly_map(x, z, MapMode::Product, fx);
    for (float v : pr.map.data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }

    CHECK(map_mode_name(MapMode::Product) == "product");
}

TEST_CASE("image_score: top-k mean") {
    Tensor m({1, 2, 2});
    m.data = {0.0f, 0.0f, 0.0f, 1.0f};
    CHECK(image_score(m, 0.25) == 1.0);
    CHECK(image_score(m, 0.5) == 0.5);
    CHECK(image_score(m, 1.0) == 0.25);

    Tensor c({1, 4, 4}, 0.3f);
    CHECK(image_score(c, 0.01) == doctest::Approx(0.3));

    CHECK_THROWS(image_score(m, 0.0));
    CHECK_THROWS(image_score(m, 1.5));
    CHECK_THROWS(image_score(Tensor({1, 0, 0}), 0.5));
}

TEST_CASE("export_panel writes a side-by-side sheet") {
    namespace fs = std::filesystem;
    NoiseSchedule sched = sched_default();
    Tensor x0 = test_image(41);
    AnalyticDenoiser d(Tensor(x0.shape, 0.5f), 0.01, sched);
    FeatureExtractor fx = FeatureExtractor::seeded(17);
    ReconstructionResult rec = anoddpm_reconstruct(d, x0, 60, NoiseKind::Gaussian, 1, sched);

    fs::path dir = fs::temp_directory_path() / "uad_panel_test";
    fs::create_directories(dir);
    fs::path out = dir / "panel.pgm";
    export_panel(out, rec, fx);
    CHECK(fs::exists(out));
    CHECK(fs::file_size(out) > 0);
    fs::remove_all(dir);
}
