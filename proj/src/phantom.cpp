#include "uad/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "uad/io.hpp"
#include "uad/rng.hpp"

namespace uad {

std::string anomaly_kind_name(AnomalyKind k) {
    switch (k) {
        case AnomalyKind::None: return "none";
        case AnomalyKind::HypoechoicLesion: return "hypoechoic-lesion";
        case AnomalyKind::HyperechoicLesion: return "hyperechoic-lesion";
        case AnomalyKind::VentricleDilation: return "ventricle-dilation";
    }
    return "none";
}

AnomalyKind anomaly_kind_from_name(const std::string& s) {
    if (s == "none") return AnomalyKind::None;
    if (s == "hypoechoic-lesion") return AnomalyKind::HypoechoicLesion;
    if (s == "hyperechoic-lesion") return AnomalyKind::HyperechoicLesion;
    if (s == "ventricle-dilation") return AnomalyKind::VentricleDilation;
    throw std::invalid_argument("unknown anomaly kind: " + s);
}

namespace {

// separable Gaussian blur with reflected borders
void blur_inplace(std::vector<double>& img, int h, int w, double sigma) {
    if (sigma <= 0) return;
    int r = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
    std::vector<double> k(2 * r + 1);
    double s = 0;
    for (int i = -r; i <= r; ++i) s += (k[i + r] = std::exp(-i * i / (2 * sigma * sigma)));
    for (auto& v : k) v /= s;
    std::vector<double> tmp(img.size());
    auto reflect = [](int i, int n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
        return i;
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -r; i <= r; ++i) acc += k[i + r] * img[y * w + reflect(x + i, w)];
            tmp[y * w + x] = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp[reflect(y + i, h) * w + x];
            img[y * w + x] = acc;
        }
}

double percentile98(std::vector<double> vals) {
    if (vals.empty()) return 1.0;
    std::sort(vals.begin(), vals.end());
    // nearest-rank
    std::size_t idx = static_cast<std::size_t>(std::ceil(0.98 * vals.size())) - 1;
    return vals[std::min(idx, vals.size() - 1)];
}

}  // namespace

namespace detail {

Phantom generate_healthy_opts(std::uint64_t seed, int res, bool speckle, bool normalize) {
    if (res != 64 && res != 128) throw std::invalid_argument("generate_healthy: res must be 64 or 128");
    auto u = [&](std::uint64_t i, double lo, double hi) {
        return lo + (hi - lo) * rng::uniform(seed, rng::kTagPhantom, i);
    };
    const double cx = u(0, -0.05, 0.05), cy = u(1, -0.05, 0.05);
    const double ax = u(2, 0.62, 0.72), ay = u(3, 0.48, 0.58);
    const double theta = u(4, -0.3, 0.3);
    const double base = u(5, 0.33, 0.40);
    const double blob_off = u(6, 0.28, 0.40);
    const double ct = std::cos(theta), st = std::sin(theta);

    // smooth per-image gain field (acoustic shadowing / attenuation): a few
    // random low-frequency cosine products modulating the interior
    double gf[3][4];
    for (int k = 0; k < 3; ++k) {
        gf[k][0] = u(16 + 4 * k, 0.8, 2.5);
        gf[k][1] = u(17 + 4 * k, 0.8, 2.5);
        gf[k][2] = u(18 + 4 * k, 0.0, 2.0 * M_PI);
        gf[k][3] = u(19 + 4 * k, 0.0, 2.0 * M_PI);
    }
    auto gain = [&](double ex, double ey) {
        double f = 0;
        for (int k = 0; k < 3; ++k)
            f += std::cos(M_PI * gf[k][0] * ex + gf[k][2]) *
                 std::cos(M_PI * gf[k][1] * ey + gf[k][3]);
        return 1.0 + 0.18 * f / std::sqrt(3.0);
    };

    const int n = res;
    std::vector<double> img(static_cast<std::size_t>(n) * n, 0.0);
    Tensor brain({1, n, n});

    for (int yi = 0; yi < n; ++yi)
        for (int xi = 0; xi < n; ++xi) {
            double x = 2.0 * (xi + 0.5) / n - 1.0 - cx;
            double y = 2.0 * (yi + 0.5) / n - 1.0 - cy;
            double ex = (ct * x + st * y) / ax;   // major axis coord
            double ey = (-st * x + ct * y) / ay;  // minor axis coord
            double r = std::sqrt(ex * ex + ey * ey);
            double v = 0.02;  // background
            if (r < 1.0) {
                v = base + 0.06 * (1.0 - r);  // slightly brighter center
                // midline stripe along the major axis
                double taper = std::exp(-std::pow(ex / 0.80, 8.0));
                v += 0.30 * taper * std::exp(-(ey * ey) / (2 * 0.050 * 0.050));
                // two bright blobs off the midline
                for (double sgn : {-1.0, 1.0}) {
                    double dx = ex - sgn * 0.25;
                    double dy = ey - sgn * blob_off * 0.5;
                    v += 0.45 * std::exp(-(dx * dx + dy * dy) / (2 * 0.10 * 0.10));
                }
                v *= gain(ex, ey);
            }
            // bright skull rim at the ellipse boundary
            v += 1.10 * std::exp(-(r - 1.0) * (r - 1.0) / (2 * 0.06 * 0.06));
            img[static_cast<std::size_t>(yi) * n + xi] = v;
            // brain mask covers the interior only; the bright skull rim is
            // cropped out of all masked evaluation, like background
            brain.chw(0, yi, xi) = r <= 0.88 ? 1.0f : 0.0f;
        }

    blur_inplace(img, n, n, n / 64.0);

    if (speckle)
        for (std::size_t i = 0; i < img.size(); ++i)
            img[i] *= rng::gamma_mean1(seed, rng::kTagSpeckle, i, 4);
    blur_inplace(img, n, n, 1.2 * n / 64.0);

    if (normalize) {
        std::vector<double> masked;
        masked.reserve(img.size());
        for (std::size_t i = 0; i < img.size(); ++i)
            if (brain.data[i] > 0.5f) masked.push_back(img[i]);
        double p98 = percentile98(std::move(masked));
        if (p98 > 0)
            for (auto& v : img) v /= p98;
    }

    Phantom p;
    p.seed = seed;
    p.image = Tensor({1, n, n});
    for (std::size_t i = 0; i < img.size(); ++i)
        p.image.data[i] = static_cast<float>(std::clamp(img[i], 0.0, 1.0));
    p.brain_mask = std::move(brain);
    p.anomaly_mask = Tensor({1, n, n});
    return p;
}

}  // namespace detail

Phantom generate_healthy(std::uint64_t seed, int res) {
    return detail::generate_healthy_opts(seed, res, true, true);
}

Phantom inject_anomaly(const Phantom& healthy, AnomalyKind kind, double severity,
                       std::uint64_t seed) {
    if (!healthy.healthy()) throw std::invalid_argument("inject_anomaly: phantom not healthy");
    if (!(severity > 0.0) || severity > 1.0)
        throw std::invalid_argument("inject_anomaly: severity must be in (0,1]");
    if (kind == AnomalyKind::None) throw std::invalid_argument("inject_anomaly: kind is none");
    const int n = healthy.image.shape[1];

    // lesion ellipse in pixel coords; retry placement until inside brain_mask
    constexpr int kMaxTries = 256;
    for (int attempt = 0; attempt < kMaxTries; ++attempt) {
        auto u = [&](std::uint64_t i, double lo, double hi) {
            return lo + (hi - lo) * rng::uniform(seed, rng::kTagAnomaly,
                                                 static_cast<std::uint64_t>(attempt) * 16 + i);
        };
        double la, lb, lth;
        if (kind == AnomalyKind::VentricleDilation) {
            // elongated, size grows with severity
            la = (0.08 + 0.10 * severity) * n / 2;
            lb = la / 3.0;
            lth = u(0, -0.5, 0.5);
        } else {
            la = u(1, 0.11, 0.18) * n / 2;
            lb = u(2, 0.11, 0.18) * n / 2;
            lth = u(0, -1.5, 1.5);
        }
        double lcx = (0.5 + 0.42 * u(3, -1.0, 1.0)) * n;
        double lcy = (0.5 + 0.36 * u(4, -1.0, 1.0)) * n;
        const double lct = std::cos(lth), lst = std::sin(lth);

        // reject lesions touching the rim or outside the brain
        bool inside = true;
        Tensor weight({1, n, n});
        for (int yi = 0; yi < n && inside; ++yi)
            for (int xi = 0; xi < n; ++xi) {
                double dx = xi + 0.5 - lcx, dy = yi + 0.5 - lcy;
                double ex = (lct * dx + lst * dy) / la;
                double ey = (-lst * dx + lct * dy) / lb;
                double rho = std::sqrt(ex * ex + ey * ey);
                if (rho >= 1.0) continue;
                if (healthy.brain_mask.chw(0, yi, xi) <= 0.5f) {
                    inside = false;
                    break;
                }
                double w = rho <= 0.9 ? 1.0 : std::pow(std::cos((rho - 0.9) / 0.1 * M_PI / 2), 2);
                weight.chw(0, yi, xi) = static_cast<float>(w);
            }
        if (!inside) continue;
        std::size_t support = 0;
        for (float w : weight.data) support += (w > 0);
        if (support < 16) continue;

        const double amp = 0.38 * severity;
        const double sign = kind == AnomalyKind::HyperechoicLesion ? 1.0 : -1.0;

        // candidate intensities with clipping applied
        std::vector<float> shifted(healthy.image.data.size());
        for (std::size_t i = 0; i < shifted.size(); ++i)
            shifted[i] = static_cast<float>(std::clamp(
                healthy.image.data[i] + sign * amp * weight.data[i], 0.0, 1.0));

        // reject placements whose post-clipping contrast against the
        // surrounding tissue falls below 0.31 * severity
        double mean_in = 0, mean_ring = 0;
        std::size_t n_in = 0, n_ring = 0;
        for (int yi = 0; yi < n; ++yi)
            for (int xi = 0; xi < n; ++xi) {
                std::size_t idx = static_cast<std::size_t>(yi) * n + xi;
                if (weight.data[idx] > 0) {
                    mean_in += shifted[idx];
                    ++n_in;
                    continue;
                }
                if (healthy.brain_mask.data[idx] <= 0.5f) continue;
                bool near = false;
                for (int dy = -3; dy <= 3 && !near; ++dy)
                    for (int dx = -3; dx <= 3; ++dx) {
                        int yy = yi + dy, xx = xi + dx;
                        if (yy < 0 || xx < 0 || yy >= n || xx >= n) continue;
                        if (weight.chw(0, yy, xx) > 0) {
                            near = true;
                            break;
                        }
                    }
                if (near) {
                    mean_ring += healthy.image.data[idx];
                    ++n_ring;
                }
            }
        if (n_ring == 0) continue;
        mean_in /= static_cast<double>(n_in);
        mean_ring /= static_cast<double>(n_ring);
        if (std::abs(mean_in - mean_ring) < 0.31 * severity) continue;

        Phantom out = healthy;
        out.kind = kind;
        out.severity = severity;
        for (std::size_t i = 0; i < out.image.data.size(); ++i) {
            if (weight.data[i] <= 0) continue;
            out.image.data[i] = shifted[i];
            out.anomaly_mask.data[i] = 1.0f;
        }
        return out;
    }
    throw std::runtime_error("inject_anomaly: could not place lesion inside the brain mask");
}

Tensor to_model_range(const Tensor& image, NoiseKind kind) {
    for (float v : image.data)
        if (v < 0.0f || v > 1.0f)
            throw std::invalid_argument("to_model_range: input must be in [0,1]");
    if (kind == NoiseKind::Gaussian) return image;
    Tensor out = image;
    for (auto& v : out.data) v = 2.0f * v - 1.0f;
    return out;
}

Tensor from_model_range(const Tensor& image, NoiseKind kind) {
    if (kind == NoiseKind::Gaussian) {
        for (float v : image.data)
            if (v < 0.0f || v > 1.0f)
                throw std::invalid_argument("from_model_range: input must be in [0,1]");
        return image;
    }
    Tensor out = image;
    for (auto& v : out.data) {
        if (v < -1.0f || v > 1.0f)
            throw std::invalid_argument("from_model_range: input must be in [-1,1]");
        v = (v + 1.0f) / 2.0f;
    }
    return out;
}

DatasetBundle make_dataset(int n_train, int n_val, int n_test_healthy, int n_test_path,
                           std::uint64_t seed, int res) {
    if (n_train < 1 || n_val < 1 || n_test_healthy < 1 || n_test_path < 1)
        throw std::invalid_argument("make_dataset: counts must be >= 1");
    DatasetBundle ds;
    ds.resolution = res;
    ds.seed = seed;
    // disjoint seed ranges per split
    const std::uint64_t kTrainBase = 0, kValBase = 1u << 20, kTestHBase = 2u << 20,
                        kTestPBase = 3u << 20;
    for (int i = 0; i < n_train; ++i)
        ds.train.push_back(generate_healthy(rng::key(seed, rng::kTagPhantom, kTrainBase + i), res));
    for (int i = 0; i < n_val; ++i)
        ds.val.push_back(generate_healthy(rng::key(seed, rng::kTagPhantom, kValBase + i), res));
    for (int i = 0; i < n_test_healthy; ++i)
        ds.test.push_back(generate_healthy(rng::key(seed, rng::kTagPhantom, kTestHBase + i), res));
    const AnomalyKind kinds[3] = {AnomalyKind::HypoechoicLesion, AnomalyKind::HyperechoicLesion,
                                  AnomalyKind::VentricleDilation};
    for (int i = 0; i < n_test_path; ++i) {
        std::uint64_t s = rng::key(seed, rng::kTagPhantom, kTestPBase + i);
        Phantom h = generate_healthy(s, res);
        double severity = 0.6 + 0.4 * rng::uniform(seed, rng::kTagAnomaly, kTestPBase + i);
        ds.test.push_back(inject_anomaly(h, kinds[i % 3], severity, s));
    }
    return ds;
}

namespace {

void save_split(const std::filesystem::path& dir, const std::string& split,
                const std::vector<Phantom>& items, std::ostringstream& manifest) {
    namespace fs = std::filesystem;
    for (const std::string role : {"image", "brain_mask", "anomaly_mask"})
        fs::create_directories(dir / split / role);
    for (std::size_t i = 0; i < items.size(); ++i) {
        const Phantom& p = items[i];
        std::string idx = std::to_string(i);
        save_pgm(dir / split / "image" / (idx + ".pgm"), p.image);
        save_pgm(dir / split / "brain_mask" / (idx + ".pgm"), p.brain_mask);
        save_pgm(dir / split / "anomaly_mask" / (idx + ".pgm"), p.anomaly_mask);
        manifest << split << "/image/" << idx << ".pgm," << (p.healthy() ? 0 : 1) << ','
                 << p.seed << ',' << anomaly_kind_name(p.kind) << ',' << p.severity << '\n';
    }
}

}  // namespace

void save_dataset(const DatasetBundle& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ostringstream manifest;
    manifest << "path,label,seed,anomaly_kind,severity\n";
    manifest.precision(17);
    save_split(dir, "train", ds.train, manifest);
    save_split(dir, "val", ds.val, manifest);
    save_split(dir, "test", ds.test, manifest);
    atomic_write_text(dir / "manifest.csv", manifest.str());
    std::ostringstream meta;
    meta << "resolution = " << ds.resolution << "\nseed = " << ds.seed << "\n";
    atomic_write_text(dir / "dataset.cfg", meta.str());
}

DatasetBundle load_dataset(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    std::ifstream mf(dir / "manifest.csv");
    if (!mf)
        throw std::runtime_error("missing dataset manifest: " + (dir / "manifest.csv").string() +
                                 " (run `uadctl generate` first)");
    DatasetBundle ds;
    auto meta = load_config_file(dir / "dataset.cfg");
    ds.resolution = std::stoi(meta.at("resolution"));
    ds.seed = std::stoull(meta.at("seed"));
    std::string line;
    std::getline(mf, line);  // header
    while (std::getline(mf, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string path, label, seed, kind, severity;
        std::getline(ss, path, ',');
        std::getline(ss, label, ',');
        std::getline(ss, seed, ',');
        std::getline(ss, kind, ',');
        std::getline(ss, severity, ',');
        Phantom p;
        p.image = load_pgm(dir / path);
        fs::path rel(path);
        auto split = rel.begin()->string();
        auto file = rel.filename();
        p.brain_mask = load_pgm(dir / split / "brain_mask" / file);
        p.anomaly_mask = load_pgm(dir / split / "anomaly_mask" / file);
        // masks are exact 0/1 after quantization
        for (auto* m : {&p.brain_mask, &p.anomaly_mask})
            for (auto& v : m->data) v = v > 0.5f ? 1.0f : 0.0f;
        p.seed = std::stoull(seed);
        p.kind = anomaly_kind_from_name(kind);
        p.severity = std::stod(severity);
        if (split == "train")
            ds.train.push_back(std::move(p));
        else if (split == "val")
            ds.val.push_back(std::move(p));
        else
            ds.test.push_back(std::move(p));
    }
    return ds;
}

}  // namespace uad
