#pragma once

#include <cstdint>

#include "uad/tensor.hpp"

namespace uad {

enum class NoiseKind { Gaussian, Simplex };

struct SimplexParams {
    double base_frequency = 1.0 / 32.0;  // cycles per pixel
    int octaves = 6;
    double persistence = 0.8;
};

struct NoiseField {
    Tensor grid;  // [1,H,W]
    NoiseKind kind = NoiseKind::Gaussian;
    std::uint64_t seed = 0;
    SimplexParams params;
};

// i.i.d. standard normal values; pure function of (shape, seed)
NoiseField gaussian_field(int height, int width, std::uint64_t seed);

// raw 2-D lattice-gradient noise in [-1,1], continuous in (x,y)
double simplex_core(double x, double y, std::uint64_t seed);

// octaved simplex sum, per-sample standardized to mean 0 / variance 1
NoiseField simplex_field(int height, int width, std::uint64_t seed, const SimplexParams& params);

// same field before the f32 cast; standardization is exact at double precision
Tensor64 simplex_field64(int height, int width, std::uint64_t seed, const SimplexParams& params);

NoiseField make_noise(NoiseKind kind, int height, int width, std::uint64_t seed,
                      const SimplexParams& params = {});

}  // namespace uad
