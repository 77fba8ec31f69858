#include "uad/training.hpp"

#include <chrono>
#include <cmath>
#include <ostream>
#include <thread>

#include "uad/rng.hpp"
#include "uad/tape.hpp"

namespace uad {

void write_train_log_csv(const TrainLog& log, std::ostream& os) {
    os << "epoch,mean_loss,mean_kl,wall_seconds\n";
    os.precision(12);
    for (const auto& r : log.rows) {
        os << r.epoch << ',' << r.mean_loss << ',';
        if (r.mean_kl >= 0) os << r.mean_kl;
        os << ',' << r.wall_seconds << '\n';
    }
}

Tensor dihedral(const Tensor& img, int k) {
    if (img.rank() != 3) throw std::invalid_argument("dihedral: expected [C,H,W]");
    const int c = img.shape[0], h = img.shape[1], w = img.shape[2];
    const int rot = k & 3;
    const bool flip = (k & 4) != 0;
    const bool swap = (rot & 1) != 0;
    Tensor out({c, swap ? w : h, swap ? h : w});
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                int sx = flip ? (w - 1 - x) : x;
                int oy = 0, ox = 0;
                switch (rot) {
                    case 0: oy = y; ox = sx; break;
                    case 1: oy = sx; ox = h - 1 - y; break;          // 90 cw
                    case 2: oy = h - 1 - y; ox = w - 1 - sx; break;  // 180
                    case 3: oy = w - 1 - sx; ox = y; break;          // 270 cw
                }
                out.chw(ci, oy, ox) = img.chw(ci, y, x);
            }
    return out;
}

double simplified_loss(const EpsPredictor& predict, const std::vector<Tensor>& batch,
                       const NoiseSchedule& sched, NoiseKind kind, const SimplexParams& sp,
                       std::uint64_t seed, std::uint64_t index_base) {
    if (batch.empty()) throw std::invalid_argument("simplified_loss: empty batch");
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Tensor& x0 = batch[i];
        const std::uint64_t idx = index_base + i;
        int t = 1 + static_cast<int>(rng::key(seed, rng::kTagTimestep, idx) %
                                     static_cast<std::uint64_t>(sched.T));
        NoiseField eps = make_noise(kind, x0.shape[1], x0.shape[2],
                                    rng::key(seed, rng::kTagForwardNoise, idx), sp);
        Tensor x_t = forward_sample(x0, t, eps.grid, sched);
        Tensor eps_hat = predict(x_t, t, eps.grid);
        check_same_shape(eps.grid, eps_hat, "simplified_loss");
        double acc = 0.0;
        for (std::size_t j = 0; j < eps_hat.data.size(); ++j) {
            double d = static_cast<double>(eps.grid.data[j]) - eps_hat.data[j];
            acc += d * d;
        }
        total += acc / static_cast<double>(eps_hat.numel());
    }
    return total / static_cast<double>(batch.size());
}

double kl_diagnostic(const Denoiser& denoiser, const Tensor& x0, int t,
                     const NoiseSchedule& sched, const NoiseField& eps) {
    check_t(sched, t, 1);
    Tensor x_t = forward_sample(x0, t, eps.grid, sched);
    Tensor eps_hat = denoiser.predict_eps(x_t, t);
    const double b = sched.beta[t];
    const double a = sched.alpha[t];
    const double abar = sched.alpha_bar[t];
    const double abar_prev = sched.alpha_bar[t - 1];
    const double bt = sched.beta_tilde[t];
    double acc = 0.0;
    for (std::size_t i = 0; i < x0.data.size(); ++i) {
        double mu_model = (x_t.data[i] - b / std::sqrt(1.0 - abar) * eps_hat.data[i]) / std::sqrt(a);
        double mu_post = (std::sqrt(abar_prev) * b * x0.data[i] +
                          std::sqrt(a) * (1.0 - abar_prev) * x_t.data[i]) /
                         (1.0 - abar);
        double d = mu_post - mu_model;
        if (bt == 0.0) {
            if (d != 0.0) return std::numeric_limits<double>::infinity();
        } else {
            acc += d * d / (2.0 * bt);
        }
    }
    return acc / static_cast<double>(x0.numel());
}

namespace {

struct ItemGrads {
    double loss = 0.0;
    std::map<std::string, Tensor> grads;
};

// one item's loss and parameter gradients on a private tape
ItemGrads item_backward(const DenoiserParams& params, const Tensor& x0_aug, int t,
                        const Tensor& eps, const NoiseSchedule& sched) {
    Tape<float> tape;
    std::map<std::string, int> handles;
    for (const auto& [name, tensor] : params.tensors) handles.emplace(name, tape.leaf(tensor));
    Tensor x_t = forward_sample(x0_aug, t, eps, sched);
    UNetForward<Tape<float>, float> fwd(tape, params.config, handles,
                                        UNetForward<Tape<float>, float>::Prelifted{});
    int eps_hat = fwd(tape.leaf(x_t), t);
    int diff = tape.sub(tape.leaf(eps), eps_hat);
    int loss = tape.mean(tape.mul(diff, diff));
    tape.backward(loss);
    ItemGrads out;
    out.loss = tape.value(loss).data[0];
    for (const auto& [name, h] : handles) {
        const Tensor& g = tape.grad_of(h);
        out.grads.emplace(name, g.data.empty() ? Tensor(params.tensors.at(name).shape) : g);
    }
    return out;
}

}  // namespace

TrainResult train(const TrainConfig& config, const UNetConfig& arch,
                  const std::vector<Tensor>& dataset, const NoiseSchedule& sched) {
    if (config.epochs < 1 || config.batch < 1 || !(config.learning_rate > 0))
        throw std::invalid_argument("train: invalid config");
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");

    TrainResult res;
    res.params = unet_init(arch, config.seed);

    // Adam state
    std::map<std::string, Tensor> m, v;
    for (const auto& [name, tensor] : res.params.tensors) {
        m.emplace(name, Tensor(tensor.shape));
        v.emplace(name, Tensor(tensor.shape));
    }
    long step = 0;

    const std::size_t n = dataset.size();
    const int workers = std::max(1, config.workers);

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        auto t_start = std::chrono::steady_clock::now();
        // deterministic per-epoch shuffle
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        for (std::size_t i = n - 1; i > 0; --i) {
            std::uint64_t r = rng::key(config.seed, rng::kTagShuffle,
                                       static_cast<std::uint64_t>(epoch) * (n + 1) + i);
            std::swap(order[i], order[r % (i + 1)]);
        }

        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t batch_start = 0; batch_start < n; batch_start += config.batch) {
            const std::size_t batch_end = std::min(n, batch_start + config.batch);
            const std::size_t bsz = batch_end - batch_start;
            std::vector<ItemGrads> items(bsz);

            auto run_item = [&](std::size_t bi) {
                const std::size_t di = order[batch_start + bi];
                // stream partitioned by (epoch, dataset index): worker count
                // cannot change the draws
                const std::uint64_t idx =
                    static_cast<std::uint64_t>(epoch) * n + di;
                Tensor x0 = dataset[di];
                if (config.augment) {
                    int k = static_cast<int>(rng::key(config.seed, rng::kTagAugment, idx) & 7);
                    x0 = dihedral(x0, k);
                }
                int t = 1 + static_cast<int>(rng::key(config.seed, rng::kTagTimestep, idx) %
                                             static_cast<std::uint64_t>(sched.T));
                NoiseField eps = make_noise(config.noise_kind, x0.shape[1], x0.shape[2],
                                            rng::key(config.seed, rng::kTagForwardNoise, idx),
                                            config.simplex);
                items[bi] = item_backward(res.params, x0, t, eps.grid, sched);
            };

            if (workers == 1) {
                for (std::size_t bi = 0; bi < bsz; ++bi) run_item(bi);
            } else {
                std::vector<std::thread> pool;
                for (int wkr = 0; wkr < workers; ++wkr)
                    pool.emplace_back([&, wkr] {
                        for (std::size_t bi = wkr; bi < bsz; bi += workers) run_item(bi);
                    });
                for (auto& th : pool) th.join();
            }

            // fixed-order reduction, then Adam
            ++step;
            const double bias1 = 1.0 - std::pow(config.adam_beta1, step);
            const double bias2 = 1.0 - std::pow(config.adam_beta2, step);
            double batch_loss = 0.0;
            for (const auto& item : items) batch_loss += item.loss;
            batch_loss /= static_cast<double>(bsz);
            epoch_loss += batch_loss * static_cast<double>(bsz);
            seen += bsz;
            if (!std::isfinite(batch_loss)) {
                auto dump = config.dump_dir / "train_abort_dump.uadc";
                checkpoint_save(res.params, dump);
                throw std::runtime_error("train: non-finite loss at step " + std::to_string(step) +
                                         "; state dumped to " + dump.string());
            }
            for (auto& [name, p] : res.params.tensors) {
                Tensor& mm = m.at(name);
                Tensor& vv = v.at(name);
                for (std::size_t j = 0; j < p.data.size(); ++j) {
                    double g = 0.0;
                    for (const auto& item : items) g += item.grads.at(name).data[j];
                    g /= static_cast<double>(bsz);
                    mm.data[j] = static_cast<float>(config.adam_beta1 * mm.data[j] +
                                                    (1.0 - config.adam_beta1) * g);
                    vv.data[j] = static_cast<float>(config.adam_beta2 * vv.data[j] +
                                                    (1.0 - config.adam_beta2) * g * g);
                    double mhat = mm.data[j] / bias1;
                    double vhat = vv.data[j] / bias2;
                    p.data[j] -= static_cast<float>(config.learning_rate * mhat /
                                                    (std::sqrt(vhat) + 1e-8));
                }
            }
        }

        TrainLogRow row;
        row.epoch = epoch;
        row.mean_loss = epoch_loss / static_cast<double>(seen);
        if (config.log_kl) {
            UNetDenoiser d(res.params);
            int t = std::max(2, sched.T / 4);
            NoiseField eps = make_noise(config.noise_kind, dataset[0].shape[1],
                                        dataset[0].shape[2],
                                        rng::key(config.seed, rng::kTagForwardNoise,
                                                 0x6b1000ULL + epoch),
                                        config.simplex);
            row.mean_kl = kl_diagnostic(d, dataset[0], t, sched, eps);
        }
        row.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        res.log.rows.push_back(row);
    }

    if (!config.checkpoint_path.empty()) checkpoint_save(res.params, config.checkpoint_path);
    return res;
}

}  // namespace uad
