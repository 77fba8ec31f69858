#pragma once

#include "uad/kernels.hpp"
#include "uad/tensor.hpp"

namespace uad {

// Gradient-free twin of Tape: same op surface, plain tensors as handles.
// Lets the network forward be written once and run with or without autodiff.
template <typename S>
class Eval {
  public:
    using H = TensorT<S>;

    H leaf(TensorT<S> v) { return v; }
    const TensorT<S>& value(const H& h) const { return h; }

    H add(const H& a, const H& b) {
        check_same_shape(a, b, "add");
        H out = a;
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
        return out;
    }

    H silu(const H& a) {
        H out = a;
        for (auto& v : out.data) v *= kernels::sigmoid(v);
        return out;
    }

    H conv2d(const H& in, const H& w, int stride, int pad, PadMode mode = PadMode::Zero) {
        return kernels::conv2d_fwd(in, w, stride, pad, mode);
    }

    H down2(const H& a) { return kernels::down2_fwd(a); }
    H up2(const H& a) { return kernels::up2_fwd(a); }

    H group_norm(const H& x, int groups, S eps) {
        const int c = x.shape[0];
        if (c % groups) throw std::invalid_argument("group_norm: groups must divide channels");
        const std::size_t gsz = x.data.size() / groups;
        H out = x;
        for (int g = 0; g < groups; ++g) {
            S m = 0, v = 0;
            const S* p = &x.data[g * gsz];
            for (std::size_t i = 0; i < gsz; ++i) m += p[i];
            m /= static_cast<S>(gsz);
            for (std::size_t i = 0; i < gsz; ++i) v += (p[i] - m) * (p[i] - m);
            v /= static_cast<S>(gsz);
            S istd = S(1) / std::sqrt(v + eps);
            S* q = &out.data[g * gsz];
            for (std::size_t i = 0; i < gsz; ++i) q[i] = (p[i] - m) * istd;
        }
        return out;
    }

    H channel_affine(const H& x, const H& gamma, const H& beta) {
        const int c = x.shape[0];
        const std::size_t hw = x.data.size() / c;
        H out = x;
        for (int ci = 0; ci < c; ++ci) {
            S gm = gamma.data[ci], bt = beta.data[ci];
            S* p = &out.data[ci * hw];
            for (std::size_t i = 0; i < hw; ++i) p[i] = p[i] * gm + bt;
        }
        return out;
    }

    H add_channel_bias(const H& x, const H& bias) {
        const int c = x.shape[0];
        const std::size_t hw = x.data.size() / c;
        H out = x;
        for (int ci = 0; ci < c; ++ci) {
            S b = bias.data[ci];
            S* p = &out.data[ci * hw];
            for (std::size_t i = 0; i < hw; ++i) p[i] += b;
        }
        return out;
    }

    H dense(const H& x, const H& w, const H& b) {
        const int n = x.shape[0], m = w.shape[0];
        H out({m});
        for (int i = 0; i < m; ++i) {
            S acc = b.data[i];
            const S* wr = &w.data[static_cast<std::size_t>(i) * n];
            for (int j = 0; j < n; ++j) acc += wr[j] * x.data[j];
            out.data[i] = acc;
        }
        return out;
    }

    H concat_ch(const H& a, const H& b) {
        H out({a.shape[0] + b.shape[0], a.shape[1], a.shape[2]});
        std::copy(a.data.begin(), a.data.end(), out.data.begin());
        std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.data.size());
        return out;
    }
};

}  // namespace uad
