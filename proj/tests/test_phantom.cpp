#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "uad/phantom.hpp"
#include "uad/rng.hpp"

using namespace uad;
namespace fs = std::filesystem;

namespace {

double masked_mean(const Tensor& img, const Tensor& mask, bool inside) {
    double acc = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < img.data.size(); ++i)
        if ((mask.data[i] > 0.5f) == inside) {
            acc += img.data[i];
            ++n;
        }
    return acc / static_cast<double>(n);
}

// ring of pixels within `radius` of the mask but not in it, clipped to the brain
Tensor surrounding_ring(const Tensor& mask, const Tensor& brain, int radius) {
    const int n = mask.shape[1];
    Tensor ring({1, n, n});
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            if (mask.chw(0, y, x) > 0.5f || brain.chw(0, y, x) <= 0.5f) continue;
            bool near = false;
            for (int dy = -radius; dy <= radius && !near; ++dy)
                for (int dx = -radius; dx <= radius; ++dx) {
                    int yy = y + dy, xx = x + dx;
                    if (yy < 0 || xx < 0 || yy >= n || xx >= n) continue;
                    if (mask.chw(0, yy, xx) > 0.5f) {
                        near = true;
                        break;
                    }
                }
            if (near) ring.chw(0, y, x) = 1.0f;
        }
    return ring;
}

}  // namespace

TEST_CASE("healthy phantom: determinism, range, normalization") {
    Phantom a = generate_healthy(12, 64);
    Phantom b = generate_healthy(12, 64);
    CHECK(a.image.data == b.image.data);
    CHECK(a.brain_mask.data == b.brain_mask.data);
    CHECK(a.healthy());

    for (float v : a.image.data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }

    // the 98th percentile of brain pixels saturates at 1 after normalization
    std::vector<float> masked;
    for (std::size_t i = 0; i < a.image.data.size(); ++i)
        if (a.brain_mask.data[i] > 0.5f) masked.push_back(a.image.data[i]);
    std::sort(masked.begin(), masked.end());
    std::size_t idx = static_cast<std::size_t>(std::ceil(0.98 * masked.size())) - 1;
    CHECK(masked[idx] == doctest::Approx(1.0).epsilon(1e-6));

    CHECK_THROWS(generate_healthy(1, 32));
    CHECK_NOTHROW(generate_healthy(1, 128));
}

TEST_CASE("brain interior is brighter than background across 100 seeds") {
    for (int s = 0; s < 100; ++s) {
        Phantom p = generate_healthy(1000 + s, 64);
        double inside = masked_mean(p.image, p.brain_mask, true);
        double outside = masked_mean(p.image, p.brain_mask, false);
        CHECK(inside - outside >= 0.2);
    }
}

TEST_CASE("speckle is multiplicative with mean factor 1 within 3%") {
    double acc = 0;
    const int reps = 20;
    for (int s = 0; s < reps; ++s) {
        Phantom with = detail::generate_healthy_opts(500 + s, 64, true, false);
        Phantom without = detail::generate_healthy_opts(500 + s, 64, false, false);
        double num = 0, den = 0;
        for (std::size_t i = 0; i < with.image.data.size(); ++i)
            if (with.brain_mask.data[i] > 0.5f && without.image.data[i] > 1e-4f) {
                num += with.image.data[i] / without.image.data[i];
                den += 1;
            }
        acc += num / den;
    }
    CHECK(std::abs(acc / reps - 1.0) <= 0.03);
}

TEST_CASE("anomaly injection: locality, continuity, contrast, mask containment") {
    Phantom h = generate_healthy(77, 64);

    for (AnomalyKind kind : {AnomalyKind::HypoechoicLesion, AnomalyKind::HyperechoicLesion,
                             AnomalyKind::VentricleDilation}) {
        Phantom p = inject_anomaly(h, kind, 0.8, 31);
        CHECK_FALSE(p.healthy());
        CHECK(p.kind == kind);

        std::size_t mask_px = 0;
        for (std::size_t i = 0; i < p.image.data.size(); ++i) {
            if (p.anomaly_mask.data[i] > 0.5f) {
                ++mask_px;
                CHECK(p.brain_mask.data[i] > 0.5f);  // anomaly_mask inside brain_mask
            } else {
                CHECK(p.image.data[i] == h.image.data[i]);  // untouched outside
            }
        }
        CHECK(mask_px >= 16);
    }

    // severity -> 0 continuity
    Phantom tiny = inject_anomaly(h, AnomalyKind::HypoechoicLesion, 0.05, 31);
    float max_delta = 0;
    for (std::size_t i = 0; i < tiny.image.data.size(); ++i)
        max_delta = std::max(max_delta, std::abs(tiny.image.data[i] - h.image.data[i]));
    CHECK(max_delta < 0.02f);

    CHECK_THROWS(inject_anomaly(h, AnomalyKind::None, 0.5, 1));
    CHECK_THROWS(inject_anomaly(h, AnomalyKind::HypoechoicLesion, 0.0, 1));
    Phantom sick = inject_anomaly(h, AnomalyKind::HypoechoicLesion, 0.5, 1);
    CHECK_THROWS(inject_anomaly(sick, AnomalyKind::HypoechoicLesion, 0.5, 1));
}

TEST_CASE("lesion contrast scales with severity") {
    int checked = 0;
    for (int s = 0; s < 12; ++s) {
        Phantom h = generate_healthy(3000 + s, 64);
        for (double severity : {0.4, 0.7, 1.0}) {
            AnomalyKind kind =
                s % 2 ? AnomalyKind::HypoechoicLesion : AnomalyKind::HyperechoicLesion;
            Phantom p = inject_anomaly(h, kind, severity, 9000 + s);
            Tensor ring = surrounding_ring(p.anomaly_mask, p.brain_mask, 3);
            double inside = masked_mean(p.image, p.anomaly_mask, true);
            double around = masked_mean(p.image, ring, true);
            CHECK(std::abs(inside - around) >= 0.3 * severity);
            ++checked;
        }
    }
    CHECK(checked == 36);
}

TEST_CASE("model range mapping") {
    Tensor img({1, 2, 2});
    img.data = {0.0f, 1.0f, 0.5f, 0.25f};
    CHECK(to_model_range(img, NoiseKind::Gaussian).data == img.data);

    Tensor s = to_model_range(img, NoiseKind::Simplex);
    CHECK(s.data[0] == -1.0f);
    CHECK(s.data[1] == 1.0f);
    CHECK(s.data[2] == 0.0f);
    CHECK(from_model_range(s, NoiseKind::Simplex).data == img.data);

    Tensor bad({1, 1, 2});
    bad.data = {-0.5f, 2.0f};
    CHECK_THROWS(to_model_range(bad, NoiseKind::Gaussian));
    CHECK_THROWS(from_model_range(bad, NoiseKind::Simplex));
}

TEST_CASE("dataset: composition, determinism, disjoint seeds") {
    DatasetBundle ds = make_dataset(4, 2, 3, 5, 42, 64);
    CHECK(ds.train.size() == 4);
    CHECK(ds.val.size() == 2);
    CHECK(ds.test.size() == 8);

    int path = 0;
    for (const Phantom& p : ds.test)
        if (!p.healthy()) {
            ++path;
            CHECK(p.severity >= 0.6);
        }
    CHECK(path == 5);

    std::vector<std::uint64_t> seeds;
    for (const auto* split : {&ds.train, &ds.val, &ds.test})
        for (const Phantom& p : *split) seeds.push_back(p.seed);
    std::sort(seeds.begin(), seeds.end());
    CHECK(std::adjacent_find(seeds.begin(), seeds.end()) == seeds.end());

    DatasetBundle ds2 = make_dataset(4, 2, 3, 5, 42, 64);
    for (std::size_t i = 0; i < ds.test.size(); ++i)
        CHECK(ds.test[i].image.data == ds2.test[i].image.data);
}

TEST_CASE("dataset save/load round-trip") {
    fs::path dir = fs::temp_directory_path() / "uad_ds_test";
    fs::remove_all(dir);

    DatasetBundle ds = make_dataset(2, 1, 1, 2, 7, 64);
    save_dataset(ds, dir);
    DatasetBundle back = load_dataset(dir);
    REQUIRE(back.train.size() == ds.train.size());
    REQUIRE(back.test.size() == ds.test.size());
    CHECK(back.resolution == 64);
    CHECK(back.seed == 7);

    for (std::size_t i = 0; i < ds.test.size(); ++i) {
        const Phantom& a = ds.test[i];
        const Phantom& b = back.test[i];
        CHECK(b.kind == a.kind);
        CHECK(b.seed == a.seed);
        CHECK(b.severity == doctest::Approx(a.severity).epsilon(1e-12));
        CHECK(b.anomaly_mask.data == a.anomaly_mask.data);
        CHECK(b.brain_mask.data == a.brain_mask.data);
        double worst = 0;
        for (std::size_t k = 0; k < a.image.data.size(); ++k)
            worst = std::max(worst, std::abs(static_cast<double>(a.image.data[k]) -
                                             b.image.data[k]));
        CHECK(worst <= 1.0 / 65535.0);  // 16-bit PGM quantization
    }
    fs::remove_all(dir);

    CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("uadctl generate"),
                         std::runtime_error);
}

TEST_CASE("anomaly kind names round-trip") {
    for (AnomalyKind k : {AnomalyKind::None, AnomalyKind::HypoechoicLesion,
                          AnomalyKind::HyperechoicLesion, AnomalyKind::VentricleDilation})
        CHECK(anomaly_kind_from_name(anomaly_kind_name(k)) == k);
    CHECK_THROWS(anomaly_kind_from_name("cyst"));
}
