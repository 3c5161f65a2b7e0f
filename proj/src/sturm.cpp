#include "s1dyn/sturm.hpp"

#include <algorithm>
#include <cmath>

namespace s1dyn {

namespace {

// refined recount of sign changes inside one cell [xa, xb]
int refined_count(const LocalInterpolant& interp, double xa, double xb,
                  double eps, int samples) {
    int count = 0;
    int prev_sign = 0;
    for (int s = 0; s <= samples; ++s) {
        double x = xa + (xb - xa) * s / samples;
        double v = interp.value(x);
        int sign = (v > eps) ? 1 : (v < -eps ? -1 : 0);
        if (sign != 0) {
            if (prev_sign != 0 && sign != prev_sign) ++count;
            prev_sign = sign;
        }
    }
    return count;
}

} // namespace

int zero_number(const Field& v, const SturmConfig& cfg) {
    const int n = v.n();
    const double vmax = v.sup_norm();
    if (vmax < cfg.degenerate_floor)
        throw DegenerateFieldError("zero_number: field below degeneracy tolerance");

    const double eps = cfg.rel_zero_tol * vmax;
    const double dip = 1e-5 * vmax;

    // indices with decided sign
    std::vector<int> idx;
    std::vector<int> sgn;
    for (int j = 0; j < n; ++j) {
        double val = v[j];
        if (val > eps) { idx.push_back(j); sgn.push_back(1); }
        else if (val < -eps) { idx.push_back(j); sgn.push_back(-1); }
    }
    if (idx.empty())
        throw DegenerateFieldError("zero_number: no sample above threshold");

    LocalInterpolant interp(v);
    const int m = static_cast<int>(idx.size());
    int total = 0;
    for (int r = 0; r < m; ++r) {
        int jr = idx[r], jn = idx[(r + 1) % m];
        int sr = sgn[r], sn = sgn[(r + 1) % m];
        int gap = (jn - jr + n) % n;  // samples skipped between decided signs
        bool suspicious = gap > 1 || std::min(std::abs(v[jr]), std::abs(v[jn])) < dip;
        int coarse = (sr != sn) ? 1 : 0;
        if (!suspicious) {
            total += coarse;
            continue;
        }
        double xa = v.grid.x(jr);
        double xb = xa + gap * v.grid.dx();
        int fine = refined_count(interp, xa, xb, eps, cfg.refine_samples);
        // the refined count must match the endpoint-sign parity
        if (fine % 2 == coarse % 2) total += fine;
        else total += coarse;
    }
    if (total % 2 != 0)
        throw std::logic_error("zero_number: odd sign-change count on the circle");
    return total;
}

std::vector<double> multiple_zeros(const Field& v, double tol, const SturmConfig& cfg) {
    const int n = v.n();
    const double vmax = v.sup_norm();
    if (vmax < cfg.degenerate_floor)
        throw DegenerateFieldError("multiple_zeros: field below degeneracy tolerance");

    Field vx = spectral_derivative(v, 1);
    Field vxx = spectral_derivative(v, 2);
    const double h = v.grid.dx();
    const double curv = vxx.sup_norm();
    const double coarse_v = std::max(tol, 0.6 * curv * h * h);
    const double coarse_vx = std::max(tol, 1.2 * curv * h);

    LocalInterpolant interp(v);
    std::vector<double> found;
    for (int j = 0; j < n; ++j) {
        if (std::abs(v[j]) > coarse_v || std::abs(vx[j]) > coarse_vx) continue;

        // golden-section minimization of v^2 + (v' h)^2 around the candidate
        double lo = v.grid.x(j) - h, hi = v.grid.x(j) + h;
        auto g = [&](double x) {
            double a = interp.value(x), b = interp.derivative(x) * h;
            return a * a + b * b;
        };
        const double gr = 0.6180339887498949;
        double c = hi - gr * (hi - lo), d = lo + gr * (hi - lo);
        double gc = g(c), gd = g(d);
        for (int it = 0; it < 60; ++it) {
            if (gc < gd) { hi = d; d = c; gd = gc; c = hi - gr * (hi - lo); gc = g(c); }
            else { lo = c; c = d; gc = gd; d = lo + gr * (hi - lo); gd = g(d); }
        }
        double xs = 0.5 * (lo + hi);
        if (std::abs(interp.value(xs)) < tol && std::abs(interp.derivative(xs)) < tol) {
            double xw = std::fmod(xs, kTwoPi);
            if (xw < 0) xw += kTwoPi;
            bool dup = false;
            for (double f : found)
                if (std::abs(f - xw) < h || kTwoPi - std::abs(f - xw) < h) dup = true;
            if (!dup) found.push_back(xw);
        }
    }
    std::sort(found.begin(), found.end());
    return found;
}

namespace {

Field lerp_field(const Field& a, const Field& b, double w) {
    Field out = a;
    for (int j = 0; j < a.n(); ++j) out[j] = (1.0 - w) * a[j] + w * b[j];
    return out;
}

// locate the drop time inside [times[i-1], times[i]] by bisection on the
// zero number of the linearly interpolated field
DropEvent refine_drop(const Field& va, const Field& vb, double ta, double tb,
                      int z_hi, int z_lo, const SturmConfig& cfg, int depth,
                      double interp_err) {
    double wa = 0.0, wb = 1.0;
    for (int it = 0; it < depth; ++it) {
        double wm = 0.5 * (wa + wb);
        int zm;
        try {
            zm = zero_number(lerp_field(va, vb, wm), cfg);
        } catch (const DegenerateFieldError&) {
            break;
        } catch (const std::logic_error&) {
            break;  // mid-tangency count can be ill-posed; keep the bracket
        }
        if (zm >= z_hi) wa = wm;
        else wb = wm;
    }
    DropEvent ev;
    ev.time = ta + 0.5 * (wa + wb) * (tb - ta);
    ev.z_before = z_hi;
    ev.z_after = z_lo;
    Field mid = lerp_field(va, vb, 0.5 * (wa + wb));
    double tol = std::max(cfg.multiple_zero_tol, 4.0 * interp_err);
    try {
        ev.locations = multiple_zeros(mid, tol, cfg);
    } catch (const DegenerateFieldError&) {
    }
    return ev;
}

} // namespace

LapHistory track_lap(const Trajectory& diff, const SturmConfig& cfg, int bisect_depth) {
    LapHistory hist;
    const int N = diff.size();
    hist.times = diff.times;
    hist.z_values.assign(N, 0);
    hist.low_confidence.assign(N, false);

    int z_prev = zero_number(diff.states[0], cfg);
    hist.z_values[0] = z_prev;
    int last_counted = 0;
    std::vector<std::pair<double, std::vector<double>>> pending;  // skipped tangencies

    // local second difference in time bounds the linear interpolation error
    auto interp_error_near = [&](int i) {
        double err = 0.0;
        for (int c : {last_counted, i}) {
            if (c < 1 || c + 1 >= N) continue;
            const Field& a = diff.states[c - 1];
            const Field& b = diff.states[c];
            const Field& d = diff.states[c + 1];
            for (int j = 0; j < a.n(); ++j)
                err = std::max(err, std::abs(a[j] - 2.0 * b[j] + d[j]));
        }
        if (err == 0.0 && N >= 3) {
            for (int j = 0; j < diff.states[0].n(); ++j)
                err = std::max(err, std::abs(diff.states[0][j] - 2.0 * diff.states[1][j] +
                                             diff.states[2][j]));
        }
        return err / 8.0;
    };

    for (int i = 1; i < N; ++i) {
        const Field& v = diff.states[i];
        double vmax = v.sup_norm();
        hist.low_confidence[i] = vmax < 1e4 * cfg.degenerate_floor;

        // tangency in progress: carry the count forward, remember the spot
        auto mz_now = multiple_zeros(v, cfg.multiple_zero_tol, cfg);
        if (!mz_now.empty()) {
            hist.z_values[i] = z_prev;
            pending.emplace_back(diff.times[i], std::move(mz_now));
            continue;
        }

        int z = zero_number(v, cfg);
        hist.z_values[i] = z;
        if (z > z_prev) {
            hist.consistent = false;
            hist.inconsistency_note = "zero number increased at t=" +
                                      std::to_string(diff.times[i]);
        } else if (z < z_prev) {
            DropEvent ev;
            if (!pending.empty()) {
                // a skipped sample already caught the tangency
                ev.time = pending.front().first;
                ev.locations = pending.front().second;
                ev.z_before = z_prev;
                ev.z_after = z;
            } else {
                ev = refine_drop(diff.states[last_counted], v,
                                 diff.times[last_counted], diff.times[i],
                                 z_prev, z, cfg, bisect_depth, interp_error_near(i));
            }
            if (ev.locations.empty()) {
                hist.consistent = false;
                hist.inconsistency_note =
                    "drop " + std::to_string(z_prev) + "->" + std::to_string(z) +
                    " near t=" + std::to_string(ev.time) + " has no bracketed multiple zero";
            }
            hist.drop_events.push_back(std::move(ev));
        }
        z_prev = z;
        last_counted = i;
        pending.clear();
    }
    return hist;
}

LapHistory track_lap_difference(const Trajectory& u1, const Trajectory& u2,
                                const SturmConfig& cfg) {
    if (u1.size() != u2.size())
        throw InputError("track_lap_difference: trajectories not co-sampled");
    Trajectory diff;
    diff.times = u1.times;
    diff.cfg = u1.cfg;
    diff.spec = u1.spec;
    diff.states.reserve(u1.size());
    for (int i = 0; i < u1.size(); ++i)
        diff.states.push_back(u1.states[i] - u2.states[i]);
    return track_lap(diff, cfg);
}

} // namespace s1dyn
