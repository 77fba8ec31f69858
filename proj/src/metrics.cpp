#include "uad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "uad/io.hpp"
#include "uad/kernels.hpp"
#include "uad/rng.hpp"

namespace uad {

double mae(const Tensor& x, const Tensor& y) {
    check_same_shape(x, y, "mae");
    double acc = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i)
        acc += std::abs(static_cast<double>(x.data[i]) - y.data[i]);
    return acc / static_cast<double>(x.numel());
}

double mae_masked(const Tensor& x, const Tensor& y, const Tensor& mask) {
    check_same_shape(x, y, "mae");
    check_same_shape(x, mask, "mae mask");
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < x.data.size(); ++i)
        if (mask.data[i] > 0.5f) {
            acc += std::abs(static_cast<double>(x.data[i]) - y.data[i]);
            ++n;
        }
    if (n == 0) throw std::invalid_argument("mae_masked: empty mask");
    return acc / static_cast<double>(n);
}

double ssim(const Tensor& x_in, const Tensor& y_in, const SsimParams& p, const Tensor* mask) {
    check_same_shape(x_in, y_in, "ssim");
    if (x_in.rank() != 3 || x_in.shape[0] != 1)
        throw std::invalid_argument("ssim: expected [1,H,W]");
    // canonical argument order: the formula is symmetric, but FP contraction
    // is not, and ssim(x,y) == ssim(y,x) must hold bit-exactly
    const bool flip = std::lexicographical_compare(y_in.data.begin(), y_in.data.end(),
                                                   x_in.data.begin(), x_in.data.end());
    const Tensor& x = flip ? y_in : x_in;
    const Tensor& y = flip ? x_in : y_in;
    const int h = x.shape[1], w = x.shape[2], k = p.window;
    if (k > h || k > w) throw std::invalid_argument("ssim: window larger than image");

    std::vector<double> g(k);
    const double c = (k - 1) / 2.0;
    double gsum = 0.0;
    for (int i = 0; i < k; ++i) {
        g[i] = std::exp(-(i - c) * (i - c) / (2.0 * p.sigma * p.sigma));
        gsum += g[i];
    }
    for (auto& v : g) v /= gsum;

    double total = 0.0;
    std::size_t count = 0;
    const int hc = k / 2;
    for (int oy = 0; oy + k <= h; ++oy)
        for (int ox = 0; ox + k <= w; ++ox) {
            if (mask && (*mask).chw(0, oy + hc, ox + hc) <= 0.5f) continue;
            double mx = 0, my = 0, vx = 0, vy = 0, cov = 0;
            for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx) {
                    double wgt = g[dy] * g[dx];
                    double a = x.chw(0, oy + dy, ox + dx);
                    double b = y.chw(0, oy + dy, ox + dx);
                    mx += wgt * a;
                    my += wgt * b;
                    vx += wgt * a * a;
                    vy += wgt * b * b;
                    cov += wgt * (a * b);  // grouped so ssim(x,y) == ssim(y,x) bit-exactly
                }
            vx -= mx * mx;
            vy -= my * my;
            cov -= mx * my;
            double num = (2 * mx * my + p.c1) * (2 * cov + p.c2);
            double den = (mx * mx + my * my + p.c1) * (vx + vy + p.c2);
            total += num / den;
            ++count;
        }
    if (count == 0) throw std::invalid_argument("ssim: no windows selected");
    return total / static_cast<double>(count);
}

// ---- feature extractor -------------------------------------------------

namespace {
constexpr int kLevelChannels[3] = {16, 32, 64};
constexpr int kLevels = 3;

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& is, const char* what) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error(std::string("extractor file: truncated at ") + what);
    return v;
}
}  // namespace

FeatureExtractor FeatureExtractor::seeded(std::uint64_t seed) {
    FeatureExtractor fx;
    int cin = 1;
    for (int l = 0; l < kLevels; ++l) {
        int cout = kLevelChannels[l];
        Tensor w({cout, cin, 3, 3});
        double std = std::sqrt(2.0 / (cin * 9.0));
        std::uint64_t lseed = rng::key(seed, rng::kTagExtractor, l);
        for (std::size_t i = 0; i < w.data.size(); ++i)
            w.data[i] = static_cast<float>(std * rng::normal(lseed, rng::kTagExtractor, i));
        fx.weights_.push_back(std::move(w));
        cin = cout;
    }
    return fx;
}

void FeatureExtractor::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path.string());
    os.write("UADC", 4);
    put<std::uint16_t>(os, 1);
    // config block mirrors the checkpoint layout; only the first fields apply
    put<std::uint32_t>(os, 1);                       // in channels
    put<std::uint32_t>(os, kLevelChannels[0]);       // first-level channels
    put<std::uint32_t>(os, static_cast<std::uint32_t>(weights_.size()));
    put<std::uint32_t>(os, 1);
    put<std::uint32_t>(os, 0);
    put<std::uint32_t>(os, 0);
    put<std::uint32_t>(os, 0);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(weights_.size()));
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        std::string name = "lvl" + std::to_string(l) + ".w";
        put<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_uadt(os, weights_[l]);
    }
}

FeatureExtractor FeatureExtractor::from_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "UADC", 4) != 0)
        throw std::runtime_error("extractor file: bad magic bytes");
    auto version = get<std::uint16_t>(is, "version");
    if (version != 1) throw std::runtime_error("extractor file: unsupported version");
    for (int i = 0; i < 7; ++i) get<std::uint32_t>(is, "config");
    auto count = get<std::uint32_t>(is, "tensor count");
    FeatureExtractor fx;
    int cin = 1;
    for (std::uint32_t l = 0; l < count; ++l) {
        auto len = get<std::uint16_t>(is, "name length");
        std::string name(len, '\0');
        is.read(name.data(), len);
        Tensor w = read_uadt(is);
        if (w.rank() != 4 || w.shape[1] != cin || w.shape[2] != 3 || w.shape[3] != 3)
            throw std::runtime_error("extractor file: bad weight shape for " + name);
        cin = w.shape[0];
        fx.weights_.push_back(std::move(w));
    }
    if (fx.weights_.empty()) throw std::runtime_error("extractor file: no levels");
    return fx;
}

std::vector<Tensor> FeatureExtractor::features(const Tensor& img) const {
    if (img.rank() != 3 || img.shape[0] != 1)
        throw std::invalid_argument("feature extractor: expected [1,H,W]");
    const int div = total_downsampling();
    if (img.shape[1] % div || img.shape[2] % div)
        throw std::invalid_argument("feature extractor: extents must divide " +
                                    std::to_string(div));
    std::vector<Tensor> out;
    Tensor h = img;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        if (l > 0) h = kernels::down2_fwd(h);
        h = kernels::conv2d_fwd(h, weights_[l], 1, 1, PadMode::Zero);
        for (auto& v : h.data) v = std::max(v, 0.0f);
        out.push_back(h);
    }
    return out;
}

PerceptualResult perceptual_distance(const Tensor& x, const Tensor& y,
                                     const FeatureExtractor& fx) {
    check_same_shape(x, y, "perceptual_distance");
    auto fa = fx.features(x);
    auto fb = fx.features(y);
    PerceptualResult res;
    res.map = Tensor({1, x.shape[1], x.shape[2]});
    constexpr double kEps = 1e-10;
    for (std::size_t l = 0; l < fa.size(); ++l) {
        const Tensor& a = fa[l];
        const Tensor& b = fb[l];
        const int c = a.shape[0], h = a.shape[1], w = a.shape[2];
        const int scale = x.shape[1] / h;
        double level_sum = 0.0;
        for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx) {
                double na = kEps, nb = kEps;
                for (int ci = 0; ci < c; ++ci) {
                    na += static_cast<double>(a.chw(ci, yy, xx)) * a.chw(ci, yy, xx);
                    nb += static_cast<double>(b.chw(ci, yy, xx)) * b.chw(ci, yy, xx);
                }
                na = std::sqrt(na);
                nb = std::sqrt(nb);
                double d = 0.0;
                for (int ci = 0; ci < c; ++ci) {
                    double diff = a.chw(ci, yy, xx) / na - b.chw(ci, yy, xx) / nb;
                    d += diff * diff;
                }
                d /= c;
                level_sum += d;
                // nearest upsample of the per-location level sum
                for (int dy = 0; dy < scale; ++dy)
                    for (int dx = 0; dx < scale; ++dx)
                        res.map.chw(0, yy * scale + dy, xx * scale + dx) += static_cast<float>(d);
            }
        res.distance += level_sum / (static_cast<double>(h) * w);
    }
    return res;
}

// ---- classification metrics -------------------------------------------

double auroc(const ScoredLabels& s) {
    if (s.scores.size() != s.labels.size())
        throw std::invalid_argument("auroc: scores/labels length mismatch");
    const std::size_t n = s.scores.size();
    std::size_t npos = 0;
    for (int l : s.labels) npos += (l != 0);
    const std::size_t nneg = n - npos;
    if (npos == 0 || nneg == 0) throw std::invalid_argument("auroc: need both classes");

    // average ranks (Mann-Whitney with tie correction)
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return s.scores[a] < s.scores[b]; });
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && s.scores[order[j + 1]] == s.scores[order[i]]) ++j;
        double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }
    double rsum = 0.0;
    for (std::size_t k = 0; k < n; ++k)
        if (s.labels[k] != 0) rsum += rank[k];
    double u = rsum - static_cast<double>(npos) * (npos + 1) / 2.0;
    return u / (static_cast<double>(npos) * static_cast<double>(nneg));
}

double auprc(const ScoredLabels& s) {
    if (s.scores.size() != s.labels.size())
        throw std::invalid_argument("auprc: scores/labels length mismatch");
    const std::size_t n = s.scores.size();
    std::size_t npos = 0;
    for (int l : s.labels) npos += (l != 0);
    if (npos == 0) throw std::invalid_argument("auprc: need at least one positive");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return s.scores[a] > s.scores[b]; });
    double ap = 0.0;
    std::size_t tp = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (s.labels[order[k]] != 0) {
            ++tp;
            ap += static_cast<double>(tp) / static_cast<double>(k + 1);
        }
    }
    return ap / static_cast<double>(npos);
}

}  // namespace uad
