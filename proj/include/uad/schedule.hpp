#pragma once

#include <cmath>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "uad/tensor.hpp"

namespace uad {

// Linear variance schedule plus derived arrays; index 1..T, alpha_bar[0] = 1.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;
    std::vector<double> beta_tilde;
};

NoiseSchedule linear_schedule(int T, double beta_1, double beta_T);

void write_schedule_csv(const NoiseSchedule& s, std::ostream& os);

inline void check_t(const NoiseSchedule& s, int t, int lo) {
    if (t < lo || t > s.T) throw std::out_of_range("schedule: t out of range");
}

// x_t = sqrt(abar_t) x0 + sqrt(1-abar_t) eps  (closed-form t-step corruption)
template <typename S>
TensorT<S> forward_sample(const TensorT<S>& x0, int t, const TensorT<S>& eps,
                          const NoiseSchedule& sched) {
    check_t(sched, t, 0);
    check_same_shape(x0, eps, "forward_sample");
    const S a = static_cast<S>(std::sqrt(sched.alpha_bar[t]));
    const S b = static_cast<S>(std::sqrt(1.0 - sched.alpha_bar[t]));
    TensorT<S> out = x0;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = a * x0.data[i] + b * eps.data[i];
    return out;
}

// mu + sqrt(beta_tilde_t) z; z must be zero at t = 1
template <typename S>
TensorT<S> reverse_step(const TensorT<S>& x_t, int t, const TensorT<S>& eps_hat,
                        const TensorT<S>& z, const NoiseSchedule& sched) {
    check_t(sched, t, 1);
    check_same_shape(x_t, eps_hat, "reverse_step");
    check_same_shape(x_t, z, "reverse_step");
    const S inv_sqrt_a = static_cast<S>(1.0 / std::sqrt(sched.alpha[t]));
    const S coef = static_cast<S>(sched.beta[t] / std::sqrt(1.0 - sched.alpha_bar[t]));
    const S sigma = static_cast<S>(std::sqrt(sched.beta_tilde[t]));
    TensorT<S> out = x_t;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = inv_sqrt_a * (x_t.data[i] - coef * eps_hat.data[i]) + sigma * z.data[i];
    return out;
}

template <typename S>
TensorT<S> predict_x0(const TensorT<S>& x_t, int t, const TensorT<S>& eps_hat,
                      const NoiseSchedule& sched) {
    check_t(sched, t, 1);
    check_same_shape(x_t, eps_hat, "predict_x0");
    const S a = static_cast<S>(std::sqrt(sched.alpha_bar[t]));
    const S b = static_cast<S>(std::sqrt(1.0 - sched.alpha_bar[t]));
    TensorT<S> out = x_t;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = (x_t.data[i] - b * eps_hat.data[i]) / a;
    return out;
}

}  // namespace uad
