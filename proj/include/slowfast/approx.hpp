#pragma once

// Shadowing verification: how close does a simulated trajectory track its
// constrained-trajectory prediction, and where does it enter/leave the axis
// halo.  Closeness is the discrete Frechet distance (monotone matching, like
// the reparameterization in the approximation statement).

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "ctraj.hpp"
#include "sim.hpp"

namespace slowfast {

using Polyline = std::vector<std::pair<double, double>>;

// Discrete Frechet distance under the Euclidean point distance.
// O(|A||B|) time, O(|B|) memory.
inline double frechet_distance(const Polyline& A, const Polyline& B) {
    if (A.empty() || B.empty())
        throw std::invalid_argument("frechet_distance: empty polyline");
    const std::size_t n = A.size(), m = B.size();
    auto dist = [&](std::size_t i, std::size_t j) {
        return std::hypot(A[i].first - B[j].first, A[i].second - B[j].second);
    };
    std::vector<double> prev(m), cur(m);
    prev[0] = dist(0, 0);
    for (std::size_t j = 1; j < m; ++j) prev[j] = std::max(prev[j - 1], dist(0, j));
    for (std::size_t i = 1; i < n; ++i) {
        cur[0] = std::max(prev[0], dist(i, 0));
        for (std::size_t j = 1; j < m; ++j)
            cur[j] = std::max(dist(i, j),
                              std::min({prev[j], cur[j - 1], prev[j - 1]}));
        std::swap(prev, cur);
    }
    return prev[m - 1];
}

// ---------------------------------------------------------------------------
// Axis-halo entry/exit extraction
// ---------------------------------------------------------------------------

struct ExitObservation {
    double x_entry = 0;      // extrapolated to the |z| = 1 boundary (see below)
    double x_exit = 0;
    int side_in = 0, side_out = 0;
    double x_entry_raw = 0;  // first |z| = 1-kappa crossing abscissae
    double x_exit_raw = 0;
    bool entered_at_start = false;  // trajectory began inside the halo
    bool exited = false;            // still inside at the end when false
};

// Entries: |z| first drops below 1-kappa; exits: |z| first returns above.
// The raw crossing abscissa is biased by |ln(1-kappa)| / |d ln|z|/dx| relative
// to the idealized corner at |z| = 1; when `extrapolate` is set (default) the
// reported abscissae extend ln|z| to 0 at the measured local slope, which
// removes the kappa term and leaves only the O(eps ln 1/eps) corner rounding.
inline std::vector<ExitObservation> extract_exits(const Trajectory& traj, double kappa,
                                                  bool extrapolate = true) {
    std::vector<ExitObservation> out;
    if (traj.samples.empty()) return out;
    const double target = std::log1p(-kappa);  // ln(1-kappa)

    auto u_of = [&](const Sample& s) {
        if (s.z == 0.0) return -1e30;
        return std::log(std::fabs(s.z));
    };

    bool inside = u_of(traj.samples.front()) < target;
    ExitObservation cur;
    if (inside) {
        cur.entered_at_start = true;
        cur.x_entry = cur.x_entry_raw = traj.samples.front().x;
        cur.side_in = traj.samples.front().z > 0 ? +1 : (traj.samples.front().z < 0 ? -1 : 0);
    }

    for (std::size_t i = 1; i < traj.samples.size(); ++i) {
        const Sample& a = traj.samples[i - 1];
        const Sample& b = traj.samples[i];
        double ua = u_of(a), ub = u_of(b);
        bool inb = ub < target;
        if (inb == inside) continue;

        double slope = (ub - ua) / (b.x - a.x);
        double x_raw = a.x + (target - ua) / (slope == 0 ? 1e-300 : slope) *
                                 ((b.x - a.x) == 0 ? 0 : 1);
        if (!(x_raw >= a.x && x_raw <= b.x)) x_raw = b.x;
        // extend ln|z| to 0 at the measured slope
        double x_ext = extrapolate && slope != 0 ? x_raw - target / slope : x_raw;

        if (!inside) {  // entering
            cur = ExitObservation{};
            cur.x_entry_raw = x_raw;
            cur.x_entry = x_ext;
            cur.side_in = b.z > 0 ? +1 : (b.z < 0 ? -1 : 0);
        } else {  // leaving
            cur.x_exit_raw = x_raw;
            cur.x_exit = x_ext;
            cur.side_out = b.z > 0 ? +1 : (b.z < 0 ? -1 : 0);
            cur.exited = true;
            out.push_back(cur);
        }
        inside = inb;
    }
    if (inside) {  // never exited
        cur.x_exit = cur.x_exit_raw = traj.samples.back().x;
        cur.side_out = 0;
        cur.exited = false;
        out.push_back(cur);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Shadowing report
// ---------------------------------------------------------------------------

struct SegmentDeviation {
    std::size_t segment = 0;
    double t_start = 0, t_end = 0;
    double max_dev = 0;
};

struct ShadowReport {
    double frechet = 0;
    std::vector<SegmentDeviation> per_segment;
    std::vector<ExitObservation> exits;
    bool pass = false;
    double tol = 0, ds = 0;
};

// Trajectory samples projected to the (x, y) plane; sub-representation
// magnitudes project to the axis, which is exact at any metric scale above
// the representable floor.  Decimated to at most max_pts vertices.
inline Polyline trajectory_polyline(const Trajectory& traj, std::size_t max_pts = 4000) {
    Polyline out;
    std::size_t n = traj.samples.size();
    std::size_t stride = std::max<std::size_t>(1, n / max_pts);
    for (std::size_t i = 0; i < n; i += stride) {
        const Sample& s = traj.samples[i];
        out.emplace_back(s.x, s.y_ok ? s.y : 0.0);
    }
    const Sample& last = traj.samples.back();
    if (out.back().first != last.x) out.emplace_back(last.x, last.y_ok ? last.y : 0.0);
    return out;
}

namespace detail {

inline double point_segment_distance(double px, double py, double ax, double ay,
                                     double bx, double by) {
    double vx = bx - ax, vy = by - ay;
    double L2 = vx * vx + vy * vy;
    double t = L2 == 0 ? 0.0 : ((px - ax) * vx + (py - ay) * vy) / L2;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(px - (ax + t * vx), py - (ay + t * vy));
}

}  // namespace detail

inline ShadowReport verify(const Trajectory& traj, const CTrajectory& ct, double tol,
                           double ds) {
    if (traj.x0 != ct.x0 || traj.y0 != ct.y0)
        throw std::invalid_argument("verify: trajectory and prediction have different origins");

    ShadowReport rep;
    rep.tol = tol;
    rep.ds = ds;

    Polyline tp = trajectory_polyline(traj);
    Polyline cp = polyline(ct, ds);
    rep.frechet = frechet_distance(tp, cp);
    rep.pass = rep.frechet <= tol;
    rep.exits = extract_exits(traj, traj.kappa);

    // deviation segment by segment, samples matched by x-interval
    std::size_t si = 0;
    for (std::size_t k = 0; k < ct.segments.size(); ++k) {
        const CSegment& seg = ct.segments[k];
        SegmentDeviation dev;
        dev.segment = k;
        dev.t_start = seg.x_from - traj.x0;
        dev.t_end = seg.x_to - traj.x0;
        double worst = 0;
        bool is_last = (k + 1 == ct.segments.size());
        while (si < traj.samples.size()) {
            const Sample& s = traj.samples[si];
            if (s.x > seg.x_to && !is_last) break;
            double y = s.y_ok ? s.y : 0.0;
            double ya = seg.y_from, yb = seg.y_to;
            double xa = seg.x_from, xb = seg.x_to;
            if (seg.kind == SegmentKind::slow) {
                // deviation to the graph of f, measured vertically
                double xq = std::clamp(s.x, seg.x_from, seg.x_to);
                double fy = xq < seg.x_to ? ct.f.eval(xq) : ct.f.eval_left(seg.x_to);
                worst = std::max(worst, std::fabs(y - fy));
            } else {
                worst = std::max(worst,
                                 detail::point_segment_distance(s.x, y, xa, ya, xb, yb));
            }
            ++si;
        }
        dev.max_dev = worst;
        rep.per_segment.push_back(dev);
    }
    return rep;
}

}  // namespace slowfast
