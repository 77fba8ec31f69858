#include "uad/schedule.hpp"

#include <ostream>

namespace uad {

NoiseSchedule linear_schedule(int T, double beta_1, double beta_T) {
    if (T < 2) throw std::invalid_argument("linear_schedule: T must be >= 2");
    if (!(beta_1 > 0.0) || !(beta_1 <= beta_T) || !(beta_T < 1.0))
        throw std::invalid_argument("linear_schedule: need 0 < beta_1 <= beta_T < 1");
    NoiseSchedule s;
    s.T = T;
    s.beta.assign(T + 1, 0.0);
    s.alpha.assign(T + 1, 0.0);
    s.alpha_bar.assign(T + 1, 0.0);
    s.beta_tilde.assign(T + 1, 0.0);
    s.alpha_bar[0] = 1.0;
    for (int t = 1; t <= T; ++t) {
        s.beta[t] = beta_1 + (t - 1) * (beta_T - beta_1) / (T - 1);
        s.alpha[t] = 1.0 - s.beta[t];
        s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
        s.beta_tilde[t] = (1.0 - s.alpha_bar[t - 1]) / (1.0 - s.alpha_bar[t]) * s.beta[t];
    }
    return s;
}

void write_schedule_csv(const NoiseSchedule& s, std::ostream& os) {
    os << "t,beta,alpha_bar,beta_tilde\n";
    os.precision(17);
    for (int t = 1; t <= s.T; ++t)
        os << t << ',' << s.beta[t] << ',' << s.alpha_bar[t] << ',' << s.beta_tilde[t] << '\n';
}

}  // namespace uad
