#pragma once

// Embedded Dormand-Prince 5(4) pair with PI step control and exact hard
// stops.  Internal machinery for the simulators; states are small fixed-size
// arrays.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>

namespace slowfast::detail {

struct step_size_collapse : std::runtime_error {
    double t;
    explicit step_size_collapse(double t_)
        : std::runtime_error("step size collapse at t=" + std::to_string(t_)), t(t_) {}
};
struct step_budget_exhausted : std::runtime_error {
    explicit step_budget_exhausted(double t_)
        : std::runtime_error("step budget exhausted at t=" + std::to_string(t_)) {}
};

struct OdeOptions {
    double rtol = 1e-10;
    double atol = 1e-12;
    double h_init = 1e-6;
    double h_min = 1e-14;
    double h_max = std::numeric_limits<double>::infinity();
    std::uint64_t max_steps = 200'000'000;
};

// RHS signature: void(double t, const std::array<double,N>& y, std::array<double,N>& dydt)
template <std::size_t N, class RHS>
class AdaptiveIntegrator {
  public:
    using State = std::array<double, N>;

    AdaptiveIntegrator(RHS rhs, double t0, const State& y0, OdeOptions opt = {})
        : rhs_(std::move(rhs)), opt_(opt) {
        reset_state(t0, y0);
        h_ = opt_.h_init;
    }

    double time() const { return t_; }
    const State& state() const { return y_; }
    const State& deriv() const { return k1_; }
    std::uint64_t steps_taken() const { return n_steps_; }

    void reset_state(double t, const State& y) {
        t_ = t;
        y_ = y;
        rhs_(t_, y_, k1_);
        err_prev_ = 1.0;
    }

    void suggest_step(double h) { h_ = h; }
    double current_step() const { return h_; }

    // Advance to exactly t_stop (t_stop >= current time).  The observer is
    // called as obs(t, y, dydt) after every accepted step, including the final
    // one landing on t_stop; it is not called for the initial state.  An
    // observer returning bool may stop the march early by returning false.
    // step_cap(t, y), when provided, bounds the attempted step size.
    template <class Obs, class Cap>
    void advance_to(double t_stop, Obs&& obs, Cap&& step_cap) {
        auto call_obs = [&obs](double t, const State& y, const State& k) -> bool {
            if constexpr (std::is_void_v<decltype(obs(t, y, k))>) {
                obs(t, y, k);
                return true;
            } else {
                return obs(t, y, k);
            }
        };
        while (t_ < t_stop) {
            double h = std::min({h_, opt_.h_max, t_stop - t_});
            double cap = step_cap(t_, y_);
            if (cap > 0 && h > cap) h = cap;
            bool hit_stop = (t_ + h >= t_stop);
            if (hit_stop) h = t_stop - t_;

            State y5, k7;
            double err = step_once(h, y5, k7);

            if (err <= 1.0) {
                t_ = hit_stop ? t_stop : t_ + h;
                y_ = y5;
                k1_ = k7;  // FSAL
                double fac = 0.9 * std::pow(err > 1e-30 ? err : 1e-30, -0.2) *
                             std::pow(err_prev_ > 1e-30 ? err_prev_ : 1e-30, 0.04);
                h_ = h * std::clamp(fac, 0.2, 5.0);
                err_prev_ = std::max(err, 1e-30);
                if (!call_obs(t_, y_, k1_)) return;
            } else {
                double fac = std::max(0.1, 0.9 * std::pow(err, -0.2));
                h_ = h * fac;
                if (h_ < opt_.h_min) throw step_size_collapse(t_);
            }
            if (++n_steps_ > opt_.max_steps) throw step_budget_exhausted(t_);
        }
    }

    template <class Obs>
    void advance_to(double t_stop, Obs&& obs) {
        advance_to(t_stop, std::forward<Obs>(obs),
                   [](double, const State&) { return 0.0; });
    }

  private:
    RHS rhs_;
    OdeOptions opt_;
    double t_ = 0.0;
    State y_{};
    State k1_{};
    double h_ = 1e-6;
    double err_prev_ = 1.0;
    std::uint64_t n_steps_ = 0;

    // One trial step of size h; returns the scaled error norm.
    double step_once(double h, State& y5, State& k7) {
        static constexpr double a21 = 1.0 / 5;
        static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
        static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
        static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                                a53 = 64448.0 / 6561, a54 = -212.0 / 729;
        static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                                a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                                a65 = -5103.0 / 18656;
        static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                                b5 = -2187.0 / 6784, b6 = 11.0 / 84;
        static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                                e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
        static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;

        State k2, k3, k4, k5, k6, tmp;
        auto axpy = [&](const auto&... terms) {
            for (std::size_t i = 0; i < N; ++i) {
                double s = y_[i];
                ((s += h * terms.first * terms.second[i]), ...);
                tmp[i] = s;
            }
        };
        using P = std::pair<double, const State&>;
        axpy(P{a21, k1_});
        rhs_(t_ + c2 * h, tmp, k2);
        axpy(P{a31, k1_}, P{a32, k2});
        rhs_(t_ + c3 * h, tmp, k3);
        axpy(P{a41, k1_}, P{a42, k2}, P{a43, k3});
        rhs_(t_ + c4 * h, tmp, k4);
        axpy(P{a51, k1_}, P{a52, k2}, P{a53, k3}, P{a54, k4});
        rhs_(t_ + c5 * h, tmp, k5);
        axpy(P{a61, k1_}, P{a62, k2}, P{a63, k3}, P{a64, k4}, P{a65, k5});
        rhs_(t_ + h, tmp, k6);
        axpy(P{b1, k1_}, P{b3, k3}, P{b4, k4}, P{b5, k5}, P{b6, k6});
        y5 = tmp;
        rhs_(t_ + h, y5, k7);

        double err = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            double e = h * (e1 * k1_[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] +
                            e6 * k6[i] + e7 * k7[i]);
            double sc = opt_.atol + opt_.rtol * std::max(std::fabs(y_[i]), std::fabs(y5[i]));
            double q = e / sc;
            if (!std::isfinite(q) || !std::isfinite(y5[i])) return 1e6;
            err = std::max(err, std::fabs(q));
        }
        return err;
    }
};

template <std::size_t N, class RHS>
AdaptiveIntegrator<N, RHS> make_integrator(RHS rhs, double t0,
                                           const std::array<double, N>& y0,
                                           OdeOptions opt = {}) {
    return AdaptiveIntegrator<N, RHS>(std::move(rhs), t0, y0, opt);
}

}  // namespace slowfast::detail
