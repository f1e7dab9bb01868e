#pragma once

// Constrained-system trajectories: the exact piecewise-geometric prediction a
// simulated trajectory shadows.  A trajectory is a chain of
//   vertical    (x, y_from) -> (x, y_to)
//   slow        ride the graph of f from x_from to the next sign change
//   horizontal  ride the axis from x_from to the exit point S_rho(x_from)
// following the succession rules vertical->slow|horizontal, slow->horizontal,
// horizontal->vertical.
//
// S_rho(x) is the first x* > x with ∫_x^{x*} f ∈ {2rho, 0, -2rho}.  With
// explicit m = 0 (rho = -inf) the target set degenerates to {0}.
//
// At a jump sign change the slow segment's right end (x, f(x-)) sits off the
// axis while the following horizontal starts at (x, 0) by definition; the
// connecting drop belongs to no segment and is emitted by polyline() only.

#include <cmath>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "piecewise.hpp"

namespace slowfast {

enum class SegmentKind : std::uint8_t { vertical, slow, horizontal };

struct CSegment {
    SegmentKind kind = SegmentKind::vertical;
    double x_from = 0, y_from = 0, x_to = 0, y_to = 0;
    // horizontal bookkeeping
    double level = std::numeric_limits<double>::quiet_NaN();  // target hit; NaN when unresolved
    int entry_side = 0;   // +1 entered the axis halo from above, -1 from below
    int exit_side = 0;    // side the trajectory leaves on (0 when unresolved)
    bool unresolved = false;  // horizontal truncated at x_max
    bool truncated = false;   // slow segment truncated at x_max
};

struct ExitInfo {
    double x_entry = 0;
    double S = 0;          // exit abscissa (x_max when unresolved)
    double level = std::numeric_limits<double>::quiet_NaN();
    int entry_side = 0;
    int exit_side = 0;
    double retard = 0;     // S - x_entry
    bool unresolved = false;
    bool touch = false;
};

struct CTrajectory {
    std::vector<CSegment> segments;
    double rho = 0, x_max = 0, x0 = 0, y0 = 0;
    PiecewiseFunction f;
    bool nonstandard_horizontal_start = false;  // a horizontal began off a sign change
};

namespace detail {

// Sign of f immediately before x; robust at simple zeros and jumps.
inline int side_before(const PiecewiseFunction& f, double x) {
    double v = f.eval_left(x);
    if (std::fabs(v) <= 1e-12) v = f.eval_left(x - 1e-7);
    if (std::fabs(v) <= 1e-12) v = f.eval_left(x - 1e-4);
    return v > 0 ? +1 : (v < 0 ? -1 : 0);
}

inline bool is_sign_change(const PiecewiseFunction& f, double x) {
    auto sc = f.sign_changes(x - 1e-7, x + 1e-7);
    return !sc.empty();
}

}  // namespace detail

// Exit point with the entry side supplied by the caller (used by build for
// horizontals that begin away from a sign change).
inline ExitInfo exit_point_from(const PiecewiseFunction& f, double rho, double x_entry,
                                int entry_side, double x_max) {
    if (!(rho < 0)) throw std::invalid_argument("exit_point: rho must be negative");
    ExitInfo out;
    out.x_entry = x_entry;
    out.entry_side = entry_side;
    std::vector<double> targets{0.0};
    if (std::isfinite(rho)) {
        targets.push_back(2 * rho);
        targets.push_back(-2 * rho);
    }
    auto hit = first_level_crossing(f, x_entry, targets, x_max);
    if (!hit) {
        out.S = x_max;
        out.retard = x_max - x_entry;
        out.unresolved = true;
        out.exit_side = 0;
        return out;
    }
    out.S = hit->x;
    out.level = hit->level;
    out.touch = hit->touch;
    out.exit_side = (hit->level == 0.0) ? entry_side : -entry_side;
    out.retard = out.S - x_entry;
    return out;
}

// Exit point for an entry at a sign change of f: the entry side is the side
// the slow curve approached from (+ -> - change means entry from above).
inline ExitInfo exit_point(const PiecewiseFunction& f, double rho, double x_entry,
                           double x_max) {
    int side = detail::side_before(f, x_entry);
    if (side == 0)
        throw std::invalid_argument("exit_point: x_entry is not a sign change of f");
    return exit_point_from(f, rho, x_entry, side, x_max);
}

// The unique constrained trajectory from (x0, y0), y0 != 0, up to x_max.
inline CTrajectory build_ctrajectory(const PiecewiseFunction& f, double rho, double x0,
                                     double y0, double x_max) {
    if (y0 == 0.0) throw std::invalid_argument("build_ctrajectory: y0 must be nonzero");
    if (!(x0 < x_max)) throw std::invalid_argument("build_ctrajectory: x0 >= x_max");
    if (!(rho < 0)) throw std::invalid_argument("build_ctrajectory: rho must be negative");

    CTrajectory ct;
    ct.rho = rho;
    ct.x_max = x_max;
    ct.x0 = x0;
    ct.y0 = y0;
    ct.f = f;

    enum class Mode { slow_ride, horizontal } mode;
    double x = x0;
    int entry_side = 0;

    double fx = f.eval(x0);
    bool same_side = (y0 > 0 && fx > 0) || (y0 < 0 && fx < 0);
    if (same_side) {
        ct.segments.push_back({SegmentKind::vertical, x0, y0, x0, fx});
        mode = Mode::slow_ride;
    } else {
        ct.segments.push_back({SegmentKind::vertical, x0, y0, x0, 0.0});
        entry_side = y0 > 0 ? +1 : -1;
        if (!detail::is_sign_change(f, x0)) ct.nonstandard_horizontal_start = true;
        mode = Mode::horizontal;
    }

    const std::size_t max_segments = 100000;
    while (ct.segments.size() < max_segments) {
        if (mode == Mode::slow_ride) {
            double th = f.theta_next(x, x_max);
            if (!(th < x_max)) {
                CSegment s{SegmentKind::slow, x, f.eval(x), x_max, f.eval_left(x_max)};
                s.truncated = true;
                ct.segments.push_back(s);
                return ct;
            }
            ct.segments.push_back({SegmentKind::slow, x, f.eval(x), th, f.eval_left(th)});
            // sign of f on (x, th) is the side the curve rides on
            entry_side = f.eval(0.5 * (x + th)) > 0 ? +1 : -1;
            x = th;
            mode = Mode::horizontal;
        } else {
            ExitInfo ei = exit_point_from(f, rho, x, entry_side, x_max);
            CSegment h{SegmentKind::horizontal, x, 0.0, ei.S, 0.0};
            h.level = ei.level;
            h.entry_side = ei.entry_side;
            h.exit_side = ei.exit_side;
            h.unresolved = ei.unresolved;
            ct.segments.push_back(h);
            if (ei.unresolved) return ct;

            double fS = f.eval(ei.S);
            if (std::fabs(fS) <= 1e-12) {
                // exit landed exactly on a vanishing f: restart the axis ride
                entry_side = ei.exit_side;
                x = ei.S;
                mode = Mode::horizontal;
                continue;
            }
            ct.segments.push_back({SegmentKind::vertical, ei.S, 0.0, ei.S, fS});
            x = ei.S;
            if (!(x < x_max)) return ct;
            mode = Mode::slow_ride;
        }
    }
    throw std::runtime_error("build_ctrajectory: segment cap exceeded");
}

// Densified vertex list; slow segments follow the graph of f, and the drop at
// a jump sign change is emitted between a slow segment and its successor.
inline std::vector<std::pair<double, double>> polyline(const CTrajectory& ct, double ds) {
    if (!(ds > 0)) throw std::invalid_argument("polyline: ds must be positive");
    std::vector<std::pair<double, double>> pts;
    auto push = [&pts, ds](double x, double y) {
        if (!pts.empty() && pts.back().first == x && pts.back().second == y) return;
        if (!pts.empty() && pts.back().first == x) {
            // densify connector drops (jump sign changes) so the vertex list
            // has no gaps larger than ds
            double y0 = pts.back().second;
            int n = static_cast<int>(std::ceil(std::fabs(y - y0) / ds));
            for (int i = 1; i < n; ++i) pts.emplace_back(x, y0 + (y - y0) * i / n);
        }
        pts.emplace_back(x, y);
    };
    for (const auto& s : ct.segments) {
        switch (s.kind) {
            case SegmentKind::vertical: {
                double len = std::fabs(s.y_to - s.y_from);
                int n = std::max(1, static_cast<int>(std::ceil(len / ds)));
                for (int i = 0; i <= n; ++i)
                    push(s.x_from, s.y_from + (s.y_to - s.y_from) * i / n);
                break;
            }
            case SegmentKind::slow: {
                double len = s.x_to - s.x_from;
                int n = std::max(1, static_cast<int>(std::ceil(len / ds)));
                for (int i = 0; i < n; ++i) {
                    double x = s.x_from + len * i / n;
                    push(x, ct.f.eval(x));
                }
                push(s.x_to, ct.f.eval_left(s.x_to));
                break;
            }
            case SegmentKind::horizontal: {
                double len = s.x_to - s.x_from;
                int n = std::max(1, static_cast<int>(std::ceil(len / ds)));
                for (int i = 0; i <= n; ++i) push(s.x_from + len * i / n, 0.0);
                break;
            }
        }
    }
    return pts;
}

// One row per segment: kind,x_from,y_from,x_to,y_to,level,entry_side,exit_side
inline std::string to_csv(const CTrajectory& ct) {
    std::ostringstream os;
    os.precision(17);
    os << "kind,x_from,y_from,x_to,y_to,level,entry_side,exit_side\n";
    for (const auto& s : ct.segments) {
        switch (s.kind) {
            case SegmentKind::vertical: os << "vertical"; break;
            case SegmentKind::slow: os << "slow"; break;
            case SegmentKind::horizontal: os << "horizontal"; break;
        }
        os << ',' << s.x_from << ',' << s.y_from << ',' << s.x_to << ',' << s.y_to << ',';
        if (s.kind == SegmentKind::horizontal) {
            if (s.unresolved) os << "unresolved";
            else os << s.level;
            os << ',' << s.entry_side << ',' << s.exit_side;
        } else {
            os << ",,";
        }
        os << '\n';
    }
    return os.str();
}

// Mechanical check of the succession automaton.
inline bool succession_ok(const CTrajectory& ct) {
    for (std::size_t i = 0; i + 1 < ct.segments.size(); ++i) {
        SegmentKind a = ct.segments[i].kind, b = ct.segments[i + 1].kind;
        bool ok = false;
        switch (a) {
            case SegmentKind::vertical:
                ok = (b == SegmentKind::slow || b == SegmentKind::horizontal);
                break;
            case SegmentKind::slow: ok = (b == SegmentKind::horizontal); break;
            case SegmentKind::horizontal: ok = (b == SegmentKind::vertical); break;
        }
        if (!ok) return false;
    }
    return true;
}

// Exact x-chaining everywhere; exact y-chaining except slow->horizontal,
// where the horizontal starts on the axis by definition.
inline bool chaining_ok(const CTrajectory& ct) {
    for (std::size_t i = 0; i + 1 < ct.segments.size(); ++i) {
        const auto& a = ct.segments[i];
        const auto& b = ct.segments[i + 1];
        if (a.x_to != b.x_from) return false;
        bool y_exempt = (a.kind == SegmentKind::slow &&
                         b.kind == SegmentKind::horizontal);
        if (!y_exempt && a.y_to != b.y_from) return false;
    }
    return true;
}

inline double total_horizontal_length(const CTrajectory& ct) {
    double sum = 0;
    for (const auto& s : ct.segments)
        if (s.kind == SegmentKind::horizontal) sum += s.x_to - s.x_from;
    return sum;
}

inline int horizontal_count(const CTrajectory& ct) {
    int n = 0;
    for (const auto& s : ct.segments)
        if (s.kind == SegmentKind::horizontal) ++n;
    return n;
}

}  // namespace slowfast
