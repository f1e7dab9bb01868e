#pragma once

// Numerical integration of the slow-fast system
//
//     x' = 1,   y' = (1/eps) * sqrt(m^2 + y^2) * (f(x) - y),   m = e^(rho/eps)
//
// in three exactly-equivalent charts, switched by state magnitude:
//
//   raw    state y            |y| >= y_switch
//   lens   state ln|z| + sign, z = sgn(y)|y|^eps   (axis halo)
//   cross  state w = y/m      |w| <= W             (axis crossing band, m > 0)
//
// Chart handoffs are exact log-domain transforms, so tiny |y| never has to be
// materialized.  x is never integrated: x(t) = x0 + t identically.

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ode.hpp"
#include "piecewise.hpp"

namespace slowfast {

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct SmParams {
    double eps = 0.01;
    double ln_m = -inf;  // log m; -inf encodes m = 0 exactly

    static SmParams from_rho(double eps, double rho) {
        if (!(eps > 0)) throw std::invalid_argument("SmParams: eps must be positive");
        if (!(rho < 0)) throw std::invalid_argument("SmParams: rho must be negative");
        return {eps, rho / eps};
    }
    static SmParams from_m(double eps, double m) {
        if (!(eps > 0)) throw std::invalid_argument("SmParams: eps must be positive");
        if (m < 0) throw std::invalid_argument("SmParams: m must be nonnegative");
        return {eps, m == 0.0 ? -inf : std::log(m)};
    }

    bool m_zero() const { return ln_m == -inf; }
    double m() const { return m_zero() ? 0.0 : std::exp(ln_m); }  // may underflow
    double rho() const { return eps * ln_m; }
};

// ---------------------------------------------------------------------------
// Exponential lens
// ---------------------------------------------------------------------------

inline double lens(double y, double eps) {
    if (y == 0.0) return 0.0;
    return std::copysign(std::exp(eps * std::log(std::fabs(y))), y);
}
// lens from ln|y| directly, for magnitudes below the representable floor
inline double lens_ln(double ln_abs_y, double sign, double eps) {
    return std::copysign(std::exp(eps * ln_abs_y), sign);
}
inline double unlens(double z, double eps) {
    if (z == 0.0) return 0.0;
    double e = std::log(std::fabs(z)) / eps;
    if (e < -745.0) return std::copysign(0.0, z);  // underflow to signed zero
    return std::copysign(std::exp(e), z);
}

// ---------------------------------------------------------------------------
// Right-hand sides
// ---------------------------------------------------------------------------

inline double rhs_raw(const SmParams& p, const PiecewiseFunction& f, double x, double y) {
    return (1.0 / p.eps) * std::hypot(p.m(), y) * (f.eval(x) - y);
}

// dz/dt in the lens chart, evaluated fully in the log domain.
inline double rhs_lens(const SmParams& p, const PiecewiseFunction& f, double x, double z) {
    const double fx = f.eval(x);
    const double clamp = 700.0;
    if (z == 0.0) {
        if (p.m_zero()) return 0.0;
        // the field blows up at z = 0 for m > 0; saturate with the sign of f
        return std::copysign(std::exp(clamp), fx);
    }
    double la = std::log(std::fabs(z));
    // sqrt(1 + m^2/y^2) with ln(m/|y|) = ln_m - la/eps
    double L = p.m_zero() ? -inf : (p.ln_m - la / p.eps);
    double sqrt_ln;
    if (L == -inf || 2 * L < -clamp) sqrt_ln = 0.0;
    else if (2 * L > clamp) sqrt_ln = L;
    else sqrt_ln = 0.5 * std::log1p(std::exp(2 * L));
    double psi_ln = la / p.eps;  // [z]^(1/eps)
    double psi = psi_ln < -745.0 ? 0.0
                                 : std::copysign(std::exp(std::min(psi_ln, clamp)), z);
    double mag_ln = la + sqrt_ln;
    if (mag_ln > clamp) mag_ln = clamp;
    return std::exp(mag_ln) * (fx - psi);
}

// ---------------------------------------------------------------------------
// Trajectory record
// ---------------------------------------------------------------------------

enum class Chart : std::uint8_t { raw, lens };

struct Sample {
    double t = 0, x = 0;
    double y = 0;      // meaningful only when y_ok
    bool y_ok = true;  // false when |y| is below the representable floor
    double z = 0;
    Chart chart = Chart::raw;
};

struct Event {
    enum class Kind : std::uint8_t { chart_switch, breakpoint, level_cross, sign_change };
    double t = 0, x = 0;
    Kind kind = Kind::level_cross;
    std::string detail;
    double a = 0, b = 0;  // payload: switches store ln|y| before/after;
                          // level crossings store direction and side
};

struct Trajectory {
    std::vector<Sample> samples;
    std::vector<Event> events;
    SmParams params;
    double x0 = 0, y0 = 0, t_end = 0;
    double kappa = 0, y_switch = 0;
};

struct SimOptions {
    double rtol = 1e-11;
    double atol = 1e-13;
    double y_switch = 0.05;    // raw/lens boundary in |y|
    double kappa = -1.0;       // |z| = 1-kappa detection band; sqrt(eps) when < 0
    double c_h = 1.0;          // raw-chart step cap factor
    double max_sample_dt = 0;  // extra hard samples at this stride when > 0
    std::size_t max_samples = 4'000'000;
    std::uint64_t max_steps = 100'000'000;
    bool refine_events = true;  // bisect the z=1-kappa crossings by re-integration
};

namespace detail {

struct sample_budget_exhausted : std::runtime_error {
    explicit sample_budget_exhausted(double x)
        : std::runtime_error("sample budget exhausted at x=" + std::to_string(x)) {}
};

inline constexpr double W_in = 32.0;   // lens -> cross when |w| falls below
inline constexpr double W_out = 64.0;  // cross -> lens when |w| rises above

}  // namespace detail

// ---------------------------------------------------------------------------
// Simulator
// ---------------------------------------------------------------------------

class Simulator {
    enum class Tag : std::uint8_t { raw, lens, cross, axis };

    struct ChartState {
        Tag tag = Tag::raw;
        double v = 0;     // y (raw), ln|z| (lens), w (cross)
        double sign = 1;  // sign of y; authoritative in the lens chart
    };

  public:
    Simulator(SmParams p, PiecewiseFunction f, SimOptions opts = {})
        : p_(p), f_(std::move(f)), o_(opts) {
        if (o_.kappa < 0) o_.kappa = std::sqrt(p_.eps);
        lens_enabled_ = p_.m_zero() || (p_.ln_m < std::log(o_.y_switch / 4.0));
    }

    const SimOptions& options() const { return o_; }

    Trajectory run(double x0, double y0, double t_end) const {
        ChartState s;
        if (y0 == 0.0) {
            if (p_.m_zero()) s = {Tag::axis, 0, 1};
            else if (lens_enabled_) s = {Tag::cross, 0.0, 1};
            else s = {Tag::raw, 0.0, 1};
        } else {
            s = classify(std::log(std::fabs(y0)), y0 > 0 ? 1.0 : -1.0);
            if (s.tag == Tag::raw) s.v = y0;  // keep the exact caller value
        }
        return run_state(x0, y0, s, t_end);
    }

    // Start inside the axis halo, prescribed in lens coordinates.
    Trajectory run_from_lens(double x0, double z0, double t_end) const {
        if (z0 == 0.0) return run(x0, 0.0, t_end);
        double ln_y = std::log(std::fabs(z0)) / p_.eps;
        auto s = classify(ln_y, z0 > 0 ? 1.0 : -1.0);
        return run_state(x0, unlens(z0, p_.eps), s, t_end);
    }

  private:
    SmParams p_;
    PiecewiseFunction f_;
    SimOptions o_;
    bool lens_enabled_ = true;

    struct Stop { double t; int kind; };  // 0 plain, 1 breakpoint, 2 sign change

    // Stop planning reruns sign-change searches; cache per (x0, t_end) since
    // fixed-point solvers call run() repeatedly with identical windows.  The
    // cache makes one Simulator instance non-reentrant; use separate
    // instances for concurrent runs.
    mutable std::vector<Stop> stop_cache_;
    mutable double cache_x0_ = std::numeric_limits<double>::quiet_NaN();
    mutable double cache_t_end_ = std::numeric_limits<double>::quiet_NaN();

    const std::vector<Stop>& plan_stops(double x0, double t_end) const {
        if (x0 == cache_x0_ && t_end == cache_t_end_) return stop_cache_;
        std::vector<Stop> stops;
        for (double k : f_.knots(x0, x0 + t_end)) stops.push_back({k - x0, 1});
        for (const auto& sc : f_.sign_changes(x0, x0 + t_end))
            if (sc.kind == SignChange::Kind::simple_zero) stops.push_back({sc.x - x0, 2});
        if (o_.max_sample_dt > 0)
            for (double t = o_.max_sample_dt; t < t_end; t += o_.max_sample_dt)
                stops.push_back({t, 0});
        stops.push_back({t_end, 0});
        std::sort(stops.begin(), stops.end(),
                  [](const Stop& u, const Stop& v) { return u.t < v.t; });
        stop_cache_ = std::move(stops);
        cache_x0_ = x0;
        cache_t_end_ = t_end;
        return stop_cache_;
    }

    ChartState classify(double ln_abs_y, double sign) const {
        if (!lens_enabled_ || ln_abs_y >= std::log(o_.y_switch))
            return {Tag::raw, sign * std::exp(ln_abs_y), sign};
        if (!p_.m_zero() && ln_abs_y - p_.ln_m <= std::log(detail::W_in))
            return {Tag::cross, sign * std::exp(ln_abs_y - p_.ln_m), sign};
        return {Tag::lens, p_.eps * ln_abs_y, sign};
    }

    double state_ln_y(const ChartState& s) const {
        switch (s.tag) {
            case Tag::raw: return s.v == 0 ? -inf : std::log(std::fabs(s.v));
            case Tag::lens: return s.v / p_.eps;
            case Tag::cross: return s.v == 0 ? -inf : p_.ln_m + std::log(std::fabs(s.v));
            case Tag::axis: return -inf;
        }
        return -inf;
    }
    double state_sign(const ChartState& s) const {
        if (s.tag == Tag::lens) return s.sign;
        return s.v > 0 ? 1.0 : (s.v < 0 ? -1.0 : s.sign);
    }
    // ln|z| of a state; the event monitors live on this scale
    double state_u(const ChartState& s) const {
        double ln_y = state_ln_y(s);
        return ln_y == -inf ? -inf : p_.eps * ln_y;
    }

    Sample make_sample(double t, double x0, const ChartState& s) const {
        Sample out;
        out.t = t;
        out.x = x0 + t;
        double ln_y = state_ln_y(s);
        double sg = state_sign(s);
        if (ln_y == -inf) {
            out.y = 0.0;
            out.z = 0.0;
        } else {
            out.y_ok = ln_y >= -744.0;
            out.y = out.y_ok ? sg * std::exp(ln_y) : 0.0;
            out.z = lens_ln(ln_y, sg, p_.eps);
        }
        out.chart = (s.tag == Tag::raw) ? Chart::raw : Chart::lens;
        return out;
    }

    // samples keep strictly increasing t
    static void push_sample(Trajectory& traj, const Sample& s) {
        if (!traj.samples.empty() && !(s.t > traj.samples.back().t)) return;
        traj.samples.push_back(s);
    }

    // Switch decision; nullopt = stay in the current chart.
    std::optional<Tag> want_switch(const ChartState& s) const {
        if (!lens_enabled_) return std::nullopt;
        switch (s.tag) {
            case Tag::raw:
                if (std::fabs(s.v) < o_.y_switch) {
                    double ln_y = std::log(std::fabs(s.v));
                    if (!p_.m_zero() && ln_y - p_.ln_m <= std::log(detail::W_in))
                        return Tag::cross;
                    return Tag::lens;
                }
                return std::nullopt;
            case Tag::lens:
                if (s.v >= p_.eps * std::log(2.0 * o_.y_switch)) return Tag::raw;
                if (!p_.m_zero() &&
                    s.v <= p_.rho() + p_.eps * std::log(detail::W_in))
                    return Tag::cross;
                return std::nullopt;
            case Tag::cross: {
                if (s.v == 0) return std::nullopt;
                double ln_y = p_.ln_m + std::log(std::fabs(s.v));
                if (ln_y >= std::log(2.0 * o_.y_switch)) return Tag::raw;
                if (std::fabs(s.v) >= detail::W_out) return Tag::lens;
                return std::nullopt;
            }
            case Tag::axis: return std::nullopt;
        }
        return std::nullopt;
    }

    ChartState transform(const ChartState& s, Tag to) const {
        double ln_y = state_ln_y(s);
        double sg = state_sign(s);
        switch (to) {
            case Tag::raw: return {Tag::raw, sg * std::exp(ln_y), sg};
            case Tag::lens: return {Tag::lens, p_.eps * ln_y, sg};
            case Tag::cross: return {Tag::cross, sg * std::exp(ln_y - p_.ln_m), sg};
            case Tag::axis: return {Tag::axis, 0, sg};
        }
        return s;
    }

    static const char* tag_name(Tag t) {
        switch (t) {
            case Tag::raw: return "raw";
            case Tag::lens: return "lens";
            case Tag::cross: return "cross";
            case Tag::axis: return "axis";
        }
        return "?";
    }

    Trajectory run_state(double x0, double y0, ChartState st, double t_end) const {
        Trajectory traj;
        traj.params = p_;
        traj.x0 = x0;
        traj.y0 = y0;
        traj.t_end = t_end;
        traj.kappa = o_.kappa;
        traj.y_switch = o_.y_switch;

        const std::vector<Stop>& stops = plan_stops(x0, t_end);

        push_sample(traj, make_sample(0.0, x0, st));

        double t = 0.0;
        double h_hint = std::min(1e-4, p_.eps);
        for (const auto& stop : stops) {
            if (stop.t > t) {
                double span_end_x = x0 + stop.t;
                double lf = f_.sup_abs_deriv(x0 + t, span_end_x, 64);
                while (t < stop.t) {
                    if (st.tag == Tag::axis) {
                        t = stop.t;
                        push_sample(traj, make_sample(t, x0, st));
                        break;
                    }
                    march(traj, x0, st, t, stop.t, span_end_x, lf, h_hint);
                    if (traj.samples.size() > o_.max_samples)
                        throw detail::sample_budget_exhausted(x0 + t);
                }
            }
            if (stop.kind == 1)
                traj.events.push_back(
                    {stop.t, x0 + stop.t, Event::Kind::breakpoint, "breakpoint", 0, 0});
            else if (stop.kind == 2)
                traj.events.push_back(
                    {stop.t, x0 + stop.t, Event::Kind::sign_change, "f sign change", 0, 0});
        }
        return traj;
    }

    // Integrate the current chart from (t, st) toward t_stop; returns after a
    // chart switch or when t_stop is reached.  Appends samples and events.
    void march(Trajectory& traj, double x0, ChartState& st, double& t, double t_stop,
               double span_end_x, double lf, double& h_hint) const {
        detail::OdeOptions oo;
        oo.rtol = o_.rtol;
        oo.atol = o_.atol;
        oo.max_steps = o_.max_steps;

        auto feval = [this, span_end_x, x0](double tt) {
            double x = x0 + tt;
            return x < span_end_x ? f_.eval(x) : f_.eval_left(span_end_x);
        };

        const Tag tag = st.tag;
        const double sign = st.sign;
        const double m = p_.m();

        // chart-specific right-hand side on the scalar state
        auto rhs = [this, tag, sign, m, &feval](double tt, const std::array<double, 1>& v,
                                                std::array<double, 1>& dv) {
            switch (tag) {
                case Tag::raw:
                    dv[0] = (1.0 / p_.eps) * std::hypot(m, v[0]) * (feval(tt) - v[0]);
                    break;
                case Tag::lens: {
                    // d ln|z| / dt = S(u) (sgn(z) f - e^{u/eps})
                    double u = v[0];
                    double L = p_.m_zero() ? -inf : (p_.ln_m - u / p_.eps);
                    double S;
                    if (L == -inf || 2 * L < -700.0) S = 1.0;
                    else if (2 * L > 700.0) S = std::exp(std::min(L, 350.0));
                    else S = std::exp(0.5 * std::log1p(std::exp(2 * L)));
                    double pe = u / p_.eps;
                    double psi = pe < -745.0 ? 0.0 : std::exp(std::min(pe, 700.0));
                    dv[0] = S * (sign * feval(tt) - psi);
                    break;
                }
                case Tag::cross:
                    dv[0] = (1.0 / p_.eps) * std::hypot(1.0, v[0]) *
                            (feval(tt) - m * v[0]);
                    break;
                case Tag::axis: dv[0] = 0; break;
            }
        };

        auto cap = [this, tag, lf, &feval](double tt, const std::array<double, 1>& v) {
            switch (tag) {
                case Tag::raw: {
                    double fx = feval(tt);
                    double den = std::max(1.0, std::fabs(v[0]) * lf + std::fabs(fx - v[0]));
                    return o_.c_h * p_.eps / den;
                }
                case Tag::lens: return 0.05;
                case Tag::cross: return o_.c_h * p_.eps;
                default: return 0.0;
            }
        };

        oo.h_init = std::min({std::max(h_hint, 1e-12), cap(t, {st.v})});
        auto integ = detail::make_integrator<1>(rhs, t, std::array<double, 1>{st.v}, oo);

        double prev_t = t;
        double prev_v = st.v;
        bool switched = false;

        auto u_of = [this, tag, sign](double v) {
            return state_u(ChartState{tag, v, sign});
        };

        integ.advance_to(
            t_stop,
            [&](double tb, const std::array<double, 1>& yb, const std::array<double, 1>&) {
                double vb = yb[0];
                record_crossings(traj, x0, tag, sign, prev_t, prev_v, tb, vb, u_of, rhs, oo);
                ChartState cur{tag, vb, sign};
                push_sample(traj, make_sample(tb, x0, cur));
                prev_t = tb;
                prev_v = vb;
                if (want_switch(cur)) {
                    switched = true;
                    return false;
                }
                return true;
            },
            cap);

        t = integ.time();
        st.v = integ.state()[0];
        h_hint = integ.current_step();

        if (switched) {
            ChartState cur{tag, st.v, sign};
            Tag to = *want_switch(cur);
            double before = state_ln_y(cur);
            ChartState next = transform(cur, to);
            double after = state_ln_y(next);
            Event e;
            e.kind = Event::Kind::chart_switch;
            e.t = t;
            e.x = x0 + t;
            e.detail = std::string(tag_name(tag)) + "->" + tag_name(to);
            e.a = before;
            e.b = after;
            traj.events.push_back(e);
            st = next;
        } else {
            st.sign = state_sign(ChartState{tag, st.v, sign});
            if (tag == Tag::lens) st.sign = sign;
        }
    }

    // Detect and record monitor crossings inside one accepted step.
    template <class UOf, class RHS>
    void record_crossings(Trajectory& traj, double x0, Tag tag, double sign, double ta,
                          double va, double tb, double vb, UOf&& u_of, RHS&& rhs,
                          const detail::OdeOptions& oo) const {
        const double ln_z_exit = std::log1p(-o_.kappa);

        // monitor 0: ln|z| - ln(1-kappa), refined by re-integration
        double ga = u_of(va) - ln_z_exit;
        double gb = u_of(vb) - ln_z_exit;
        if (ga != 0.0 && ((ga < 0) != (gb < 0))) {
            double tc = tb, vc = vb;
            if (o_.refine_events) {
                refine(rhs, oo, ta, va, tb, vb,
                       [&](double v) { return u_of(v) - ln_z_exit; }, tc, vc);
            } else {
                tc = ta + (tb - ta) * (0.0 - ga) / (gb - ga);
                vc = va + (vb - va) * (tc - ta) / (tb - ta);
            }
            Event e;
            e.kind = Event::Kind::level_cross;
            e.detail = "z=1-kappa";
            e.t = tc;
            e.x = x0 + tc;
            e.a = gb > ga ? +1 : -1;  // +1 leaving the halo, -1 entering
            e.b = sign;
            traj.events.push_back(e);
            push_sample(traj, make_sample(tc, x0, ChartState{tag, vc, sign}));
        }

        if (tag == Tag::cross) {
            // |w| = 1, i.e. |z| = e^rho
            double ha = std::fabs(va) - 1.0, hb = std::fabs(vb) - 1.0;
            if (ha != 0.0 && ((ha < 0) != (hb < 0))) {
                double tc = ta + (tb - ta) * (0.0 - ha) / (hb - ha);
                traj.events.push_back({tc, x0 + tc, Event::Kind::level_cross, "z=e^rho",
                                       hb > ha ? +1.0 : -1.0, va >= 0 ? 1.0 : -1.0});
            }
            // axis crossing
            if (va != 0.0 && ((va < 0) != (vb < 0))) {
                double tc = ta + (tb - ta) * (0.0 - va) / (vb - va);
                traj.events.push_back({tc, x0 + tc, Event::Kind::level_cross, "axis",
                                       vb > va ? +1.0 : -1.0, 0.0});
            }
        }
    }

    // Bisect a monitor crossing inside [ta, tb] by re-integration from (ta, va).
    template <class RHS, class G>
    void refine(RHS&& rhs, const detail::OdeOptions& oo, double ta, double va, double tb,
                double vb, G&& g, double& tc, double& vc) const {
        double lo = ta, hi = tb;
        double g_lo = g(va);
        vc = vb;
        for (int it = 0; it < 60 && hi - lo > 1e-13 * std::max(1.0, std::fabs(hi)); ++it) {
            double mid = 0.5 * (lo + hi);
            if (mid <= lo || mid >= hi) break;
            detail::OdeOptions op = oo;
            op.h_init = std::max((mid - ta) / 8.0, 1e-13);
            auto probe = detail::make_integrator<1>(rhs, ta, std::array<double, 1>{va}, op);
            probe.advance_to(mid, [](double, const auto&, const auto&) { return true; });
            double gm = g(probe.state()[0]);
            if (gm == 0.0) { lo = hi = mid; vc = probe.state()[0]; break; }
            if ((gm < 0) == (g_lo < 0)) { lo = mid; g_lo = gm; }
            else { hi = mid; vc = probe.state()[0]; }
        }
        tc = 0.5 * (lo + hi);
    }
};

inline Trajectory simulate(const SmParams& p, const PiecewiseFunction& f, double x0,
                           double y0, double t_end, const SimOptions& opts = {}) {
    return Simulator(p, f, opts).run(x0, y0, t_end);
}

inline Trajectory simulate_from_lens(const SmParams& p, const PiecewiseFunction& f,
                                     double x0, double z0, double t_end,
                                     const SimOptions& opts = {}) {
    return Simulator(p, f, opts).run_from_lens(x0, z0, t_end);
}

}  // namespace slowfast
