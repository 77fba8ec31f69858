#include <cmath>
#include <set>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "uad/denoiser.hpp"
#include "uad/noise.hpp"
#include "uad/phantom.hpp"
#include "uad/rng.hpp"
#include "uad/training.hpp"

using namespace uad;

namespace {

UNetConfig tiny_arch() {
    UNetConfig cfg;
    cfg.base_channels = 4;
    cfg.depth = 1;
    cfg.blocks_per_level = 1;
    cfg.time_embed_dim = 8;
    cfg.groups = 2;
    return cfg;
}

struct ShiftedDenoiser : Denoiser {
    const Denoiser& inner;
    float shift;
    ShiftedDenoiser(const Denoiser& d, float s) : inner(d), shift(s) {}
    Tensor predict_eps(const Tensor& x_t, int t) const override {
        Tensor out = inner.predict_eps(x_t, t);
        for (auto& v : out.data) v += shift;
        return out;
    }
};

}  // namespace

TEST_CASE("dihedral: identity, value preservation, 8 distinct transforms") {
    Tensor img({1, 4, 4});
    for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<float>(i);

    CHECK(dihedral(img, 0).data == img.data);

    std::set<std::vector<float>> seen;
    for (int k = 0; k < 8; ++k) {
        Tensor t = dihedral(img, k);
        CHECK(t.numel() == img.numel());
        std::vector<float> sorted = t.data;
        std::sort(sorted.begin(), sorted.end());
        std::vector<float> orig = img.data;  // already sorted 0..15
        CHECK(sorted == orig);  // a permutation, so value range is preserved
        seen.insert(t.data);
    }
    CHECK(seen.size() == 8);

    // rectangular images transpose under odd rotations
    Tensor rect({1, 2, 6});
    CHECK(dihedral(rect, 1).shape == std::vector<int>{1, 6, 2});
}

TEST_CASE("simplified loss: perfect predictor and zero predictor") {
    NoiseSchedule sched = linear_schedule(1000, 1e-4, 0.02);
    std::vector<Tensor> batch(8, Tensor({1, 8, 8}, 0.4f));

    auto perfect = [](const Tensor&, int, const Tensor& eps_true) { return eps_true; };
    CHECK(simplified_loss(perfect, batch, sched, NoiseKind::Gaussian, {}, 3) == 0.0);

    // eps_hat = 0 with Gaussian eps: E[eps^2] = 1 per pixel
    auto zero = [](const Tensor& x_t, int, const Tensor&) { return Tensor(x_t.shape); };
    std::vector<Tensor> many(1000, Tensor({1, 8, 8}, 0.0f));
    double loss = simplified_loss(zero, many, sched, NoiseKind::Gaussian, {}, 11);
    CHECK(std::abs(loss - 1.0) < 0.02);

    std::vector<Tensor> empty;
    CHECK_THROWS(simplified_loss(zero, empty, sched, NoiseKind::Gaussian, {}, 3));
}

TEST_CASE("kl diagnostic: zero for the exact posterior mean, closed form for shifts") {
    NoiseSchedule sched = linear_schedule(1000, 1e-4, 0.02);
    Tensor x0({1, 4, 4}, 0.5f);
    NoiseField eps = gaussian_field(4, 4, 21);
    const int t = 100;

    // the true eps reproduces the posterior mean exactly
    struct Oracle : Denoiser {
        Tensor eps;
        Tensor predict_eps(const Tensor&, int) const override { return eps; }
    } oracle;
    oracle.eps = eps.grid;
    CHECK(kl_diagnostic(oracle, x0, t, sched, eps) == doctest::Approx(0.0).epsilon(1e-9));

    // mean shift delta with shared variance v: KL = delta^2 / (2 v) per pixel
    const float c = 0.25f;
    ShiftedDenoiser shifted(oracle, c);
    double delta = sched.beta[t] / std::sqrt(1.0 - sched.alpha_bar[t]) * c /
                   std::sqrt(sched.alpha[t]);
    double expected = delta * delta / (2.0 * sched.beta_tilde[t]);
    CHECK(kl_diagnostic(shifted, x0, t, sched, eps) ==
          doctest::Approx(expected).epsilon(1e-3));

    CHECK_THROWS(kl_diagnostic(oracle, x0, 0, sched, eps));
}

TEST_CASE("kl diagnostic matches numerical quadrature on one pixel") {
    NoiseSchedule sched = linear_schedule(1000, 1e-4, 0.02);
    Tensor x0({1, 1, 1}, 0.3f);
    NoiseField eps = gaussian_field(1, 1, 4);
    const int t = 60;

    struct Oracle : Denoiser {
        Tensor eps;
        float shift = 0.1f;
        Tensor predict_eps(const Tensor&, int) const override {
            Tensor out = eps;
            for (auto& v : out.data) v += shift;
            return out;
        }
    } d;
    d.eps = eps.grid;
    double kl = kl_diagnostic(d, x0, t, sched, eps);

    // rebuild both means, then integrate KL(q || p) with Simpson's rule
    Tensor x_t = forward_sample(x0, t, eps.grid, sched);
    Tensor eps_hat = d.predict_eps(x_t, t);
    double v = sched.beta_tilde[t];
    double mu_model =
        (x_t.data[0] - sched.beta[t] / std::sqrt(1.0 - sched.alpha_bar[t]) * eps_hat.data[0]) /
        std::sqrt(sched.alpha[t]);
    double mu_post = (std::sqrt(sched.alpha_bar[t - 1]) * sched.beta[t] * x0.data[0] +
                      std::sqrt(sched.alpha[t]) * (1.0 - sched.alpha_bar[t - 1]) * x_t.data[0]) /
                     (1.0 - sched.alpha_bar[t]);
    auto logpdf = [&](double x, double mu) {
        return -0.5 * std::log(2.0 * M_PI * v) - (x - mu) * (x - mu) / (2.0 * v);
    };
    const int steps = 40000;
    double sd = std::sqrt(v), lo = mu_post - 12 * sd, hi = mu_post + 12 * sd;
    double h = (hi - lo) / steps, integral = 0.0;
    for (int i = 0; i <= steps; ++i) {
        double x = lo + i * h;
        double q = std::exp(logpdf(x, mu_post));
        double f = q * (logpdf(x, mu_post) - logpdf(x, mu_model));
        double wgt = (i == 0 || i == steps) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        integral += wgt * f;
    }
    integral *= h / 3.0;
    CHECK(std::abs(kl - integral) < 1e-8);
}

TEST_CASE("seed-fixed training runs are bit-identical; worker count does not matter") {
    NoiseSchedule sched = linear_schedule(1000, 1e-4, 0.02);
    std::vector<Tensor> data;
    for (int i = 0; i < 4; ++i) {
        Phantom p = generate_healthy(100 + i, 64);
        Tensor img = p.image;
        // train at 16x16 crops for speed
        Tensor crop({1, 16, 16});
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) crop.chw(0, y, x) = img.chw(0, y + 24, x + 24);
        data.push_back(crop);
    }

    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch = 2;
    cfg.seed = 5;
    cfg.resolution = 16;

    TrainResult a = train(cfg, tiny_arch(), data, sched);
    TrainResult b = train(cfg, tiny_arch(), data, sched);
    for (const auto& [name, t] : a.params.tensors)
        CHECK(b.params.tensors.at(name).data == t.data);
    REQUIRE(a.log.rows.size() == 2);
    CHECK(a.log.rows[0].mean_loss == b.log.rows[0].mean_loss);

    TrainConfig cfg2 = cfg;
    cfg2.workers = 3;
    TrainResult c = train(cfg2, tiny_arch(), data, sched);
    for (const auto& [name, t] : a.params.tensors)
        CHECK(c.params.tensors.at(name).data == t.data);
}

TEST_CASE("overfitting a single repeated image drives the loss down") {
    NoiseSchedule sched = linear_schedule(1000, 1e-4, 0.02);
    Phantom p = generate_healthy(9, 64);
    Tensor crop({1, 16, 16});
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) crop.chw(0, y, x) = p.image.chw(0, y + 24, x + 24);

    TrainConfig cfg;
    cfg.epochs = 400;  // one image per epoch = 400 steps
    cfg.batch = 1;
    cfg.learning_rate = 3e-3;
    cfg.seed = 13;
    cfg.augment = false;
    cfg.resolution = 16;
    TrainResult r = train(cfg, tiny_arch(), {crop}, sched);
    CHECK(r.log.rows.front().mean_loss > r.log.rows.back().mean_loss);
    CHECK(r.log.rows.back().mean_loss < 0.05);
}

TEST_CASE("training log csv format") {
    TrainLog log;
    log.rows.push_back({1, 0.5, -1.0, 1.25});
    log.rows.push_back({2, 0.25, 0.125, 1.5});
    std::ostringstream os;
    write_train_log_csv(log, os);
    std::string s = os.str();
    CHECK(s.rfind("epoch,mean_loss,mean_kl,wall_seconds\n", 0) == 0);
    CHECK(s.find("1,0.5,,1.25\n") != std::string::npos);
    CHECK(s.find("2,0.25,0.125,1.5\n") != std::string::npos);
}

TEST_CASE("invalid training configs are rejected") {
    NoiseSchedule sched = linear_schedule(10, 1e-4, 0.02);
    TrainConfig cfg;
    cfg.epochs = 0;
    CHECK_THROWS(train(cfg, tiny_arch(), {Tensor({1, 16, 16})}, sched));
    cfg.epochs = 1;
    CHECK_THROWS(train(cfg, tiny_arch(), {}, sched));
}
