#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "uad/kernels.hpp"
#include "uad/tensor.hpp"

namespace uad {

// Reverse-mode tape. Nodes are appended in evaluation order, so the reverse
// scan in backward() is already topological and touches each node once.
template <typename S>
class Tape {
  public:
    using H = int;

    H leaf(TensorT<S> v) {
        nodes_.push_back({std::move(v), {}, nullptr});
        return static_cast<H>(nodes_.size()) - 1;
    }

    const TensorT<S>& value(H h) const { return nodes_[h].value; }
    const TensorT<S>& grad(H h) const { return nodes_[h].grad; }

    H add(H a, H b) {
        check_same_shape(value(a), value(b), "add");
        TensorT<S> out = value(a);
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += value(b).data[i];
        return make(std::move(out), [a, b](Tape& t, const TensorT<S>& g) {
            t.accum(a, g);
            t.accum(b, g);
        });
    }

    H sub(H a, H b) {
        check_same_shape(value(a), value(b), "sub");
        TensorT<S> out = value(a);
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= value(b).data[i];
        return make(std::move(out), [a, b](Tape& t, const TensorT<S>& g) {
            t.accum(a, g);
            TensorT<S> ng = g;
            for (auto& v : ng.data) v = -v;
            t.accum(b, ng);
        });
    }

    H mul(H a, H b) {
        check_same_shape(value(a), value(b), "mul");
        TensorT<S> out = value(a);
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= value(b).data[i];
        return make(std::move(out), [a, b](Tape& t, const TensorT<S>& g) {
            TensorT<S> ga = g, gb = g;
            for (std::size_t i = 0; i < g.data.size(); ++i) {
                ga.data[i] *= t.value(b).data[i];
                gb.data[i] *= t.value(a).data[i];
            }
            t.accum(a, ga);
            t.accum(b, gb);
        });
    }

    H scale(H a, S c) {
        TensorT<S> out = value(a);
        for (auto& v : out.data) v *= c;
        return make(std::move(out), [a, c](Tape& t, const TensorT<S>& g) {
            TensorT<S> ga = g;
            for (auto& v : ga.data) v *= c;
            t.accum(a, ga);
        });
    }

    H silu(H a) {
        TensorT<S> out = value(a);
        for (auto& v : out.data) v *= kernels::sigmoid(v);
        return make(std::move(out), [a](Tape& t, const TensorT<S>& g) {
            TensorT<S> ga = g;
            for (std::size_t i = 0; i < g.data.size(); ++i) {
                S x = t.value(a).data[i];
                S s = kernels::sigmoid(x);
                ga.data[i] *= s * (S(1) + x * (S(1) - s));
            }
            t.accum(a, ga);
        });
    }

    H conv2d(H in, H w, int stride, int pad, PadMode mode = PadMode::Zero) {
        TensorT<S> out = kernels::conv2d_fwd(value(in), value(w), stride, pad, mode);
        return make(std::move(out), [in, w, stride, pad, mode](Tape& t, const TensorT<S>& g) {
            TensorT<S> gin(t.value(in).shape);
            TensorT<S> gw(t.value(w).shape);
            kernels::conv2d_bwd(t.value(in), t.value(w), g, stride, pad, mode, gin, gw);
            t.accum(in, gin);
            t.accum(w, gw);
        });
    }

    H down2(H a) {
        return make(kernels::down2_fwd(value(a)), [a](Tape& t, const TensorT<S>& g) {
            TensorT<S> gin(t.value(a).shape);
            kernels::down2_bwd(g, gin);
            t.accum(a, gin);
        });
    }

    H up2(H a) {
        return make(kernels::up2_fwd(value(a)), [a](Tape& t, const TensorT<S>& g) {
            TensorT<S> gin(t.value(a).shape);
            kernels::up2_bwd(g, gin);
            t.accum(a, gin);
        });
    }

    // Normalizes [C,H,W] over channel groups; affine handled separately.
    H group_norm(H a, int groups, S eps) {
        const TensorT<S>& x = value(a);
        const int c = x.shape[0];
        if (c % groups) throw std::invalid_argument("group_norm: groups must divide channels");
        const std::size_t gsz = x.data.size() / groups;
        TensorT<S> out = x;
        std::vector<S> mean(groups), istd(groups);
        for (int g = 0; g < groups; ++g) {
            S m = 0, v = 0;
            const S* p = &x.data[g * gsz];
            for (std::size_t i = 0; i < gsz; ++i) m += p[i];
            m /= static_cast<S>(gsz);
            for (std::size_t i = 0; i < gsz; ++i) v += (p[i] - m) * (p[i] - m);
            v /= static_cast<S>(gsz);
            mean[g] = m;
            istd[g] = S(1) / std::sqrt(v + eps);
            S* q = &out.data[g * gsz];
            for (std::size_t i = 0; i < gsz; ++i) q[i] = (p[i] - m) * istd[g];
        }
        return make(std::move(out), [a, groups, gsz, istd](Tape& t, const TensorT<S>& g) {
            TensorT<S> gin(t.value(a).shape);
            t.group_norm_backward(a, groups, gsz, istd, g, gin);
            t.accum(a, gin);
        });
    }

    H channel_affine(H a, H gamma, H beta) {
        const TensorT<S>& x = value(a);
        const int c = x.shape[0];
        const std::size_t hw = x.data.size() / c;
        TensorT<S> out = x;
        for (int ci = 0; ci < c; ++ci) {
            S gm = value(gamma).data[ci], bt = value(beta).data[ci];
            S* p = &out.data[ci * hw];
            for (std::size_t i = 0; i < hw; ++i) p[i] = p[i] * gm + bt;
        }
        return make(std::move(out), [a, gamma, beta, c, hw](Tape& t, const TensorT<S>& g) {
            TensorT<S> ga = g, gg({c}), gb({c});
            for (int ci = 0; ci < c; ++ci) {
                S gm = t.value(gamma).data[ci];
                S sg = 0, sgx = 0;
                const S* gp = &g.data[ci * hw];
                const S* xp = &t.value(a).data[ci * hw];
                S* gap = &ga.data[ci * hw];
                for (std::size_t i = 0; i < hw; ++i) {
                    sg += gp[i];
                    sgx += gp[i] * xp[i];
                    gap[i] = gp[i] * gm;
                }
                gg.data[ci] = sgx;
                gb.data[ci] = sg;
            }
            t.accum(a, ga);
            t.accum(gamma, gg);
            t.accum(beta, gb);
        });
    }

    // bias [C] broadcast over [C,H,W]
    H add_channel_bias(H a, H bias) {
        const TensorT<S>& x = value(a);
        const int c = x.shape[0];
        if (value(bias).rank() != 1 || value(bias).shape[0] != c)
            throw std::invalid_argument("add_channel_bias: bias shape mismatch");
        const std::size_t hw = x.data.size() / c;
        TensorT<S> out = x;
        for (int ci = 0; ci < c; ++ci) {
            S b = value(bias).data[ci];
            S* p = &out.data[ci * hw];
            for (std::size_t i = 0; i < hw; ++i) p[i] += b;
        }
        return make(std::move(out), [a, bias, c, hw](Tape& t, const TensorT<S>& g) {
            t.accum(a, g);
            TensorT<S> gb({c});
            for (int ci = 0; ci < c; ++ci) {
                S s = 0;
                const S* gp = &g.data[ci * hw];
                for (std::size_t i = 0; i < hw; ++i) s += gp[i];
                gb.data[ci] = s;
            }
            t.accum(bias, gb);
        });
    }

    // x [n], w [m,n], b [m] -> [m]
    H dense(H x, H w, H b) {
        const TensorT<S>& xv = value(x);
        const TensorT<S>& wv = value(w);
        const int n = xv.shape[0], m = wv.shape[0];
        if (wv.shape[1] != n || value(b).shape[0] != m)
            throw std::invalid_argument("dense: shape mismatch");
        TensorT<S> out({m});
        for (int i = 0; i < m; ++i) {
            S acc = value(b).data[i];
            const S* wr = &wv.data[static_cast<std::size_t>(i) * n];
            for (int j = 0; j < n; ++j) acc += wr[j] * xv.data[j];
            out.data[i] = acc;
        }
        return make(std::move(out), [x, w, b, n, m](Tape& t, const TensorT<S>& g) {
            TensorT<S> gx({n}), gw({m, n});
            for (int i = 0; i < m; ++i) {
                const S gi = g.data[i];
                const S* wr = &t.value(w).data[static_cast<std::size_t>(i) * n];
                S* gwr = &gw.data[static_cast<std::size_t>(i) * n];
                for (int j = 0; j < n; ++j) {
                    gx.data[j] += gi * wr[j];
                    gwr[j] = gi * t.value(x).data[j];
                }
            }
            t.accum(x, gx);
            t.accum(w, gw);
            t.accum(b, g);
        });
    }

    H concat_ch(H a, H b) {
        const TensorT<S>& av = value(a);
        const TensorT<S>& bv = value(b);
        if (av.shape[1] != bv.shape[1] || av.shape[2] != bv.shape[2])
            throw std::invalid_argument("concat_ch: spatial mismatch");
        TensorT<S> out({av.shape[0] + bv.shape[0], av.shape[1], av.shape[2]});
        std::copy(av.data.begin(), av.data.end(), out.data.begin());
        std::copy(bv.data.begin(), bv.data.end(), out.data.begin() + av.data.size());
        return make(std::move(out), [a, b](Tape& t, const TensorT<S>& g) {
            TensorT<S> ga(t.value(a).shape), gb(t.value(b).shape);
            std::copy(g.data.begin(), g.data.begin() + ga.data.size(), ga.data.begin());
            std::copy(g.data.begin() + ga.data.size(), g.data.end(), gb.data.begin());
            t.accum(a, ga);
            t.accum(b, gb);
        });
    }

    H sum(H a) {
        S s = 0;
        for (S v : value(a).data) s += v;
        TensorT<S> out({1});
        out.data[0] = s;
        return make(std::move(out), [a](Tape& t, const TensorT<S>& g) {
            TensorT<S> ga(t.value(a).shape, g.data[0]);
            t.accum(a, ga);
        });
    }

    H mean(H a) {
        const S inv = S(1) / static_cast<S>(value(a).numel());
        return scale(sum(a), inv);
    }

    void backward(H loss) {
        if (value(loss).numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
        for (auto& n : nodes_)
            if (!n.grad.data.empty()) n.grad = TensorT<S>(n.value.shape);
        ensure_grad(loss);
        nodes_[loss].grad.data[0] = S(1);
        for (int i = loss; i >= 0; --i) {
            if (nodes_[i].back && !nodes_[i].grad.data.empty()) nodes_[i].back(*this, nodes_[i].grad);
        }
    }

    const TensorT<S>& grad_of(H h) const { return nodes_[h].grad; }

  private:
    struct Node {
        TensorT<S> value;
        TensorT<S> grad;
        std::function<void(Tape&, const TensorT<S>&)> back;
    };
    std::vector<Node> nodes_;

    H make(TensorT<S> v, std::function<void(Tape&, const TensorT<S>&)> back) {
        nodes_.push_back({std::move(v), {}, std::move(back)});
        return static_cast<H>(nodes_.size()) - 1;
    }

    void ensure_grad(H h) {
        if (nodes_[h].grad.data.empty()) nodes_[h].grad = TensorT<S>(nodes_[h].value.shape);
    }

    void accum(H h, const TensorT<S>& g) {
        ensure_grad(h);
        auto& dst = nodes_[h].grad;
        for (std::size_t i = 0; i < g.data.size(); ++i) dst.data[i] += g.data[i];
    }

    void group_norm_backward(H a, int groups, std::size_t gsz, const std::vector<S>& istd,
                             const TensorT<S>& g, TensorT<S>& gin) {
        const TensorT<S>& x = value(a);
        for (int gi = 0; gi < groups; ++gi) {
            const S* xp = &x.data[gi * gsz];
            const S* gp = &g.data[gi * gsz];
            S* op = &gin.data[gi * gsz];
            S m = 0;
            for (std::size_t i = 0; i < gsz; ++i) m += xp[i];
            m /= static_cast<S>(gsz);
            S gmean = 0, gymean = 0;
            for (std::size_t i = 0; i < gsz; ++i) {
                S y = (xp[i] - m) * istd[gi];
                gmean += gp[i];
                gymean += gp[i] * y;
            }
            gmean /= static_cast<S>(gsz);
            gymean /= static_cast<S>(gsz);
            for (std::size_t i = 0; i < gsz; ++i) {
                S y = (xp[i] - m) * istd[gi];
                op[i] = istd[gi] * (gp[i] - gmean - y * gymean);
            }
        }
    }
};

}  // namespace uad
