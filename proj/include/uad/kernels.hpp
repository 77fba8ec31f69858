#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "uad/tensor.hpp"

namespace uad {

enum class PadMode { Zero, Periodic };

namespace kernels {

template <typename S>
inline S sigmoid(S x) {
    return S(1) / (S(1) + std::exp(-x));
}

// input [Cin,H,W], weight [Cout,Cin,k,k]; stride 1 with pad (k-1)/2 keeps size.
template <typename S>
TensorT<S> conv2d_fwd(const TensorT<S>& in, const TensorT<S>& w, int stride, int pad,
                      PadMode mode) {
    if (in.rank() != 3 || w.rank() != 4) throw std::invalid_argument("conv2d: bad ranks");
    const int cin = in.shape[0], h = in.shape[1], wd = in.shape[2];
    const int cout = w.shape[0], k = w.shape[2];
    if (w.shape[1] != cin) throw std::invalid_argument("conv2d: channel mismatch");
    if (w.shape[3] != k || k % 2 == 0) throw std::invalid_argument("conv2d: kernel must be odd square");
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
    const int ho = (h + 2 * pad - k) / stride + 1;
    const int wo = (wd + 2 * pad - k) / stride + 1;
    TensorT<S> out({cout, ho, wo});
    for (int co = 0; co < cout; ++co)
        for (int ci = 0; ci < cin; ++ci)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    const S wv = w.data[((static_cast<std::size_t>(co) * cin + ci) * k + ky) * k + kx];
                    if (wv == S(0)) continue;
                    const S* irow0 = &in.data[static_cast<std::size_t>(ci) * h * wd];
                    S* orow0 = &out.data[static_cast<std::size_t>(co) * ho * wo];
                    for (int oy = 0; oy < ho; ++oy) {
                        int iy = oy * stride + ky - pad;
                        if (mode == PadMode::Periodic) iy = ((iy % h) + h) % h;
                        if (iy < 0 || iy >= h) continue;
                        const S* irow = irow0 + static_cast<std::size_t>(iy) * wd;
                        S* orow = orow0 + static_cast<std::size_t>(oy) * wo;
                        if (mode == PadMode::Zero && stride == 1) {
                            // contiguous interior run, vector-friendly
                            int x0 = std::max(0, pad - kx);
                            int x1 = std::min(wo, wd + pad - kx);
                            const S* ip = irow + (x0 + kx - pad);
                            for (int ox = x0; ox < x1; ++ox) orow[ox] += wv * ip[ox - x0];
                        } else {
                            for (int ox = 0; ox < wo; ++ox) {
                                int ix = ox * stride + kx - pad;
                                if (mode == PadMode::Periodic) ix = ((ix % wd) + wd) % wd;
                                if (ix < 0 || ix >= wd) continue;
                                orow[ox] += wv * irow[ix];
                            }
                        }
                    }
                }
    return out;
}

template <typename S>
void conv2d_bwd(const TensorT<S>& in, const TensorT<S>& w, const TensorT<S>& gout, int stride,
                int pad, PadMode mode, TensorT<S>& gin, TensorT<S>& gw) {
    const int cin = in.shape[0], h = in.shape[1], wd = in.shape[2];
    const int cout = w.shape[0], k = w.shape[2];
    const int ho = gout.shape[1], wo = gout.shape[2];
    for (int co = 0; co < cout; ++co)
        for (int ci = 0; ci < cin; ++ci)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    const std::size_t widx = ((static_cast<std::size_t>(co) * cin + ci) * k + ky) * k + kx;
                    const S wv = w.data[widx];
                    S gwacc = S(0);
                    const S* irow0 = &in.data[static_cast<std::size_t>(ci) * h * wd];
                    S* girow0 = &gin.data[static_cast<std::size_t>(ci) * h * wd];
                    const S* grow0 = &gout.data[static_cast<std::size_t>(co) * ho * wo];
                    for (int oy = 0; oy < ho; ++oy) {
                        int iy = oy * stride + ky - pad;
                        if (mode == PadMode::Periodic) iy = ((iy % h) + h) % h;
                        if (iy < 0 || iy >= h) continue;
                        const S* irow = irow0 + static_cast<std::size_t>(iy) * wd;
                        S* girow = girow0 + static_cast<std::size_t>(iy) * wd;
                        const S* grow = grow0 + static_cast<std::size_t>(oy) * wo;
                        for (int ox = 0; ox < wo; ++ox) {
                            int ix = ox * stride + kx - pad;
                            if (mode == PadMode::Periodic) ix = ((ix % wd) + wd) % wd;
                            if (ix < 0 || ix >= wd) continue;
                            gwacc += grow[ox] * irow[ix];
                            girow[ix] += wv * grow[ox];
                        }
                    }
                    gw.data[widx] += gwacc;
                }
}

template <typename S>
TensorT<S> down2_fwd(const TensorT<S>& in) {
    const int c = in.shape[0], h = in.shape[1], w = in.shape[2];
    if (h % 2 || w % 2) throw std::invalid_argument("down2: extents must be even");
    TensorT<S> out({c, h / 2, w / 2});
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h / 2; ++y)
            for (int x = 0; x < w / 2; ++x)
                out.chw(ci, y, x) = (in.chw(ci, 2 * y, 2 * x) + in.chw(ci, 2 * y, 2 * x + 1) +
                                     in.chw(ci, 2 * y + 1, 2 * x) + in.chw(ci, 2 * y + 1, 2 * x + 1)) /
                                    S(4);
    return out;
}

template <typename S>
void down2_bwd(const TensorT<S>& gout, TensorT<S>& gin) {
    const int c = gout.shape[0], h2 = gout.shape[1], w2 = gout.shape[2];
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h2; ++y)
            for (int x = 0; x < w2; ++x) {
                const S g = gout.chw(ci, y, x) / S(4);
                gin.chw(ci, 2 * y, 2 * x) += g;
                gin.chw(ci, 2 * y, 2 * x + 1) += g;
                gin.chw(ci, 2 * y + 1, 2 * x) += g;
                gin.chw(ci, 2 * y + 1, 2 * x + 1) += g;
            }
}

template <typename S>
TensorT<S> up2_fwd(const TensorT<S>& in) {
    const int c = in.shape[0], h = in.shape[1], w = in.shape[2];
    TensorT<S> out({c, 2 * h, 2 * w});
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < 2 * h; ++y)
            for (int x = 0; x < 2 * w; ++x) out.chw(ci, y, x) = in.chw(ci, y / 2, x / 2);
    return out;
}

template <typename S>
void up2_bwd(const TensorT<S>& gout, TensorT<S>& gin) {
    const int c = gin.shape[0], h = gin.shape[1], w = gin.shape[2];
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < 2 * h; ++y)
            for (int x = 0; x < 2 * w; ++x) gin.chw(ci, y / 2, x / 2) += gout.chw(ci, y, x);
}

}  // namespace kernels
}  // namespace uad
