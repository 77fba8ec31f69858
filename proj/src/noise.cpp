#include "uad/noise.hpp"

#include <cmath>
#include <stdexcept>

#include "uad/rng.hpp"

namespace uad {

NoiseField gaussian_field(int height, int width, std::uint64_t seed) {
    if (height <= 0 || width <= 0) throw std::invalid_argument("gaussian_field: bad extents");
    NoiseField f;
    f.kind = NoiseKind::Gaussian;
    f.seed = seed;
    f.grid = Tensor({1, height, width});
    for (std::size_t i = 0; i < f.grid.data.size(); ++i)
        f.grid.data[i] = static_cast<float>(rng::normal(seed, rng::kTagForwardNoise, i));
    return f;
}

namespace {

// Gustavson-style 2-D simplex noise, gradients hashed per (cell, seed).
constexpr double kSkew = 0.36602540378443864676;    // (sqrt(3)-1)/2
constexpr double kUnskew = 0.21132486540518711775;  // (3-sqrt(3))/6

const double kGrad[8][2] = {{1, 1}, {-1, 1}, {1, -1}, {-1, -1},
                            {1, 0}, {-1, 0}, {0, 1},  {0, -1}};

inline double corner(double x, double y, std::int64_t ci, std::int64_t cj, std::uint64_t seed) {
    double t = 0.5 - x * x - y * y;
    if (t <= 0) return 0.0;
    std::uint64_t h = rng::key(seed, rng::kTagSimplexPerm,
                               static_cast<std::uint64_t>(ci) * 0x9e3779b97f4a7c15ULL +
                                   static_cast<std::uint64_t>(cj));
    const double* g = kGrad[h & 7];
    t *= t;
    return t * t * (g[0] * x + g[1] * y);
}

}  // namespace

double simplex_core(double x, double y, std::uint64_t seed) {
    double s = (x + y) * kSkew;
    std::int64_t i = static_cast<std::int64_t>(std::floor(x + s));
    std::int64_t j = static_cast<std::int64_t>(std::floor(y + s));
    double t = static_cast<double>(i + j) * kUnskew;
    double x0 = x - (static_cast<double>(i) - t);
    double y0 = y - (static_cast<double>(j) - t);
    int i1 = x0 > y0 ? 1 : 0;
    int j1 = 1 - i1;
    double x1 = x0 - i1 + kUnskew;
    double y1 = y0 - j1 + kUnskew;
    double x2 = x0 - 1.0 + 2.0 * kUnskew;
    double y2 = y0 - 1.0 + 2.0 * kUnskew;
    double n = corner(x0, y0, i, j, seed) + corner(x1, y1, i + i1, j + j1, seed) +
               corner(x2, y2, i + 1, j + 1, seed);
    return 70.0 * n;
}

Tensor64 simplex_field64(int height, int width, std::uint64_t seed, const SimplexParams& p) {
    if (height <= 0 || width <= 0) throw std::invalid_argument("simplex_field: bad extents");
    if (height * width < 2) throw std::invalid_argument("simplex_field: degenerate shape");
    if (p.octaves < 1) throw std::invalid_argument("simplex_field: octaves must be >= 1");
    if (p.persistence <= 0 || p.persistence > 1)
        throw std::invalid_argument("simplex_field: persistence must be in (0,1]");
    std::vector<double> acc(static_cast<std::size_t>(height) * width, 0.0);
    double freq = p.base_frequency;
    double amp = 1.0;
    for (int o = 0; o < p.octaves; ++o) {
        std::uint64_t oseed = rng::key(seed, rng::kTagSimplexPerm, 0x100 + o);
        // per-octave offset decorrelates octave lattices
        double ox = rng::uniform(oseed, 1, 0) * 4096.0;
        double oy = rng::uniform(oseed, 1, 1) * 4096.0;
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                acc[static_cast<std::size_t>(y) * width + x] +=
                    amp * simplex_core(x * freq + ox, y * freq + oy, oseed);
        freq *= 2.0;
        amp *= p.persistence;
    }

    double mean = 0.0;
    for (double v : acc) mean += v;
    mean /= static_cast<double>(acc.size());
    double var = 0.0;
    for (double v : acc) var += (v - mean) * (v - mean);
    var /= static_cast<double>(acc.size());
    if (var <= 0) throw std::invalid_argument("simplex_field: degenerate (constant) field");
    double istd = 1.0 / std::sqrt(var);
    Tensor64 out({1, height, width});
    for (std::size_t i = 0; i < acc.size(); ++i) out.data[i] = (acc[i] - mean) * istd;
    return out;
}

NoiseField simplex_field(int height, int width, std::uint64_t seed, const SimplexParams& p) {
    NoiseField f;
    f.kind = NoiseKind::Simplex;
    f.seed = seed;
    f.params = p;
    f.grid = simplex_field64(height, width, seed, p).cast<float>();
    return f;
}

NoiseField make_noise(NoiseKind kind, int height, int width, std::uint64_t seed,
                      const SimplexParams& params) {
    return kind == NoiseKind::Gaussian ? gaussian_field(height, width, seed)
                                       : simplex_field(height, width, seed, params);
}

}  // namespace uad
