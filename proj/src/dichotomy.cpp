#include "s1dyn/dichotomy.hpp"

#include <algorithm>
#include <cmath>

namespace s1dyn {

namespace {

Eigen::VectorXd to_vec(const Field& f) {
    return Eigen::Map<const Eigen::VectorXd>(f.values.data(), f.n());
}

Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& A) {
    if (A.cols() == 0) return A;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
    return qr.householderQ() * Eigen::MatrixXd::Identity(A.rows(), A.cols());
}

// orthonormal basis of the complement of span(A) (A with orthonormal columns)
Eigen::MatrixXd complement(const Eigen::MatrixXd& A, int d) {
    if (A.cols() == 0) return Eigen::MatrixXd::Identity(d, d);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
    Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
    return Q.rightCols(d - A.cols());
}

} // namespace

EvolutionFamily EvolutionFamily::constant(const Eigen::MatrixXd& T, int n_lo, int n_hi) {
    EvolutionFamily fam;
    fam.n_lo = n_lo;
    fam.n_hi = n_hi;
    fam.steps.assign(n_hi - n_lo, T);
    return fam;
}

EvolutionFamily pde_family(const Trajectory& traj, double t_center, double tau,
                           int n_lo, int n_hi) {
    const Grid& g = traj.grid();
    const Eigen::MatrixXd& V = band_basis(g, trusted_band(g.n));
    EvolutionFamily fam;
    fam.n_lo = n_lo;
    fam.n_hi = n_hi;
    fam.steps.reserve(n_hi - n_lo);
    for (int n = n_lo; n < n_hi; ++n) {
        double t0 = t_center + n * tau;
        Eigen::MatrixXd M = tangent_matrix(traj, t0, t0 + tau);
        fam.steps.push_back(V.transpose() * M * V);
    }
    return fam;
}

// --- dichotomy detection -----------------------------------------------------

namespace {

struct Sweeps {
    // frames at every index n in [n_lo, n_hi]
    std::vector<Eigen::MatrixXd> forward;   // leading-column spans grow fastest
    std::vector<Eigen::MatrixXd> backward;  // adjoint frames, same convention
    std::vector<double> fwd_rates;          // averaged log growth per direction
    std::vector<double> bwd_rates;
};

Sweeps run_sweeps(const EvolutionFamily& fam, double scale) {
    const int d = fam.dim();
    const int len = fam.length();
    Sweeps s;
    s.forward.resize(len + 1);
    s.backward.resize(len + 1);
    s.fwd_rates.assign(d, 0.0);
    s.bwd_rates.assign(d, 0.0);

    Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(d, d);
    s.forward[0] = Q;
    for (int i = 0; i < len; ++i) {
        Eigen::MatrixXd A = (fam.steps[i] / scale) * Q;
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
        Q = qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
        Eigen::MatrixXd R = Q.transpose() * A;
        for (int k = 0; k < d; ++k) {
            double r = std::abs(R(k, k));
            s.fwd_rates[k] += std::log(std::max(r, 1e-300));
            if (R(k, k) < 0) Q.col(k) *= -1.0;  // keep a deterministic sign
        }
        s.forward[i + 1] = Q;
    }
    Q = Eigen::MatrixXd::Identity(d, d);
    s.backward[len] = Q;
    for (int i = len - 1; i >= 0; --i) {
        Eigen::MatrixXd A = (fam.steps[i].transpose() / scale) * Q;
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
        Q = qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
        Eigen::MatrixXd R = Q.transpose() * A;
        for (int k = 0; k < d; ++k) {
            double r = std::abs(R(k, k));
            s.bwd_rates[k] += std::log(std::max(r, 1e-300));
            if (R(k, k) < 0) Q.col(k) *= -1.0;
        }
        s.backward[i] = Q;
    }
    for (int k = 0; k < d; ++k) {
        s.fwd_rates[k] /= len;
        s.bwd_rates[k] /= len;
    }
    return s;
}

} // namespace

DichotomyReport detect_dichotomy(const EvolutionFamily& fam,
                                 std::optional<double> shift,
                                 const DichotomyConfig& cfg) {
    if (fam.length() < 10)
        throw InputError("detect_dichotomy: window shorter than 10 steps");
    const int d = fam.dim();
    const double rho = shift.value_or(1.0);
    Sweeps sw = run_sweeps(fam, rho);

    // rank from the averaged exponents; both sweeps must agree
    int r_fwd = 0, r_bwd = 0;
    double min_abs = std::numeric_limits<double>::infinity();
    for (double g : sw.fwd_rates) {
        if (g > 0) ++r_fwd;
        min_abs = std::min(min_abs, std::abs(g));
    }
    for (double g : sw.bwd_rates) {
        if (g > 0) ++r_bwd;
        min_abs = std::min(min_abs, std::abs(g));
    }
    if (min_abs < cfg.gap_tol)
        throw NoGapError("detect_dichotomy: averaged exponent " + std::to_string(min_abs) +
                         " inside the gap tolerance (spectrum on the reference circle)");
    if (r_fwd != r_bwd)
        throw NoGapError("detect_dichotomy: forward/backward ranks disagree (" +
                         std::to_string(r_fwd) + " vs " + std::to_string(r_bwd) + ")");
    const int r = r_fwd;

    DichotomyReport rep;
    rep.rank = r;
    rep.rho = rho;

    // burn-in with a conditioning guard on the oblique pairing W^T U
    int burn = std::min(cfg.max_burn, fam.length() / 4);
    auto pair_ok = [&](int i) {
        if (r == 0 || r == d) return true;
        Eigen::MatrixXd WtU = sw.backward[i].leftCols(r).transpose() *
                              sw.forward[i].leftCols(r);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(WtU);
        double smin = svd.singularValues().minCoeff();
        return smin > 1.0 / cfg.condition_guard;
    };
    while (burn < fam.length() / 2 &&
           (!pair_ok(burn) || !pair_ok(fam.length() - burn)))
        ++burn;

    rep.window_lo = fam.n_lo + burn;
    rep.window_hi = fam.n_hi - burn;
    if (rep.window_hi - rep.window_lo < 2)
        throw NoGapError("detect_dichotomy: sweeps failed to converge inside the window");

    // oblique projections P(n) with range U(n) and kernel S(n) = W(n)^perp
    for (int n = rep.window_lo; n <= rep.window_hi; ++n) {
        int i = n - fam.n_lo;
        if (r == 0) {
            rep.projections.push_back(Eigen::MatrixXd::Zero(d, d));
        } else if (r == d) {
            rep.projections.push_back(Eigen::MatrixXd::Identity(d, d));
        } else {
            Eigen::MatrixXd U = sw.forward[i].leftCols(r);
            Eigen::MatrixXd W = sw.backward[i].leftCols(r);
            Eigen::MatrixXd P = U * (W.transpose() * U).lu().solve(W.transpose());
            rep.projections.push_back(P);
        }
    }
    rep.unstable_at_hi = sw.forward[fam.length()].leftCols(r);
    rep.adjoint_unstable_at_lo = sw.backward[0].leftCols(r);

    // restricted one-step maps on the unstable ranges, for backward products
    const int wlen = rep.window_hi - rep.window_lo;
    std::vector<Eigen::MatrixXd> Bres(wlen);  // U(n+1)^T (T_n/rho) U(n), r x r
    if (r > 0) {
        for (int n = rep.window_lo; n < rep.window_hi; ++n) {
            int i = n - fam.n_lo;
            Bres[n - rep.window_lo] = sw.forward[i + 1].leftCols(r).transpose() *
                                      (fam.step(n) / rho) * sw.forward[i].leftCols(r);
        }
    }

    // decay profiles over all reported-window pairs
    const int d2 = d;
    std::vector<double> prof_fwd(wlen + 1, 0.0), prof_bwd(wlen + 1, 0.0);
    {
        // forward: ||T(n,m)(I-P(m))||, propagate the complement blocks
        for (int m = rep.window_lo; m <= rep.window_hi; ++m) {
            Eigen::MatrixXd X = Eigen::MatrixXd::Identity(d2, d2) - rep.P(m);
            prof_fwd[0] = std::max(prof_fwd[0], X.operatorNorm());
            Eigen::MatrixXd Y = X;
            for (int n = m; n < rep.window_hi; ++n) {
                Y = (fam.step(n) / rho) * Y;
                prof_fwd[n + 1 - m] = std::max(prof_fwd[n + 1 - m], Y.operatorNorm());
            }
        }
        // backward: ||T(n,m)P(m)|| for n <= m via restricted inverses
        for (int m = rep.window_lo; m <= rep.window_hi; ++m) {
            Eigen::MatrixXd X = rep.P(m);
            prof_bwd[0] = std::max(prof_bwd[0], X.operatorNorm());
            if (r == 0) continue;
            int im = m - fam.n_lo;
            // coordinates of P(m) in U(m): U(m)^T P(m)
            Eigen::MatrixXd C = sw.forward[im].leftCols(r).transpose() * X;
            for (int n = m - 1; n >= rep.window_lo; --n) {
                C = Bres[n - rep.window_lo].lu().solve(C);
                int in = n - fam.n_lo;
                Eigen::MatrixXd Yn = sw.forward[in].leftCols(r) * C;
                prof_bwd[m - n] = std::max(prof_bwd[m - n], Yn.operatorNorm());
            }
        }
    }

    // tightest (beta, M): slope fit on the log profiles, envelope for M
    auto fit_beta = [&](const std::vector<double>& prof) {
        double sxx = 0, sxy = 0, sx = 0, sy = 0;
        int cnt = 0;
        for (int k = 0; k <= wlen; ++k) {
            if (prof[k] <= 0) continue;
            double y = std::log(prof[k]);
            sx += k; sy += y; sxx += k * k; sxy += k * y;
            ++cnt;
        }
        if (cnt < 2) return 0.0;
        return -(cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    };
    double beta_f = fit_beta(prof_fwd);
    double beta_b = fit_beta(prof_bwd);
    double beta = std::min(beta_f, beta_b);
    if (r == 0) beta = beta_f;
    if (r == d) beta = beta_b;
    beta = std::max(beta, 1e-12);
    double M = 0.0;
    for (int k = 0; k <= wlen; ++k) {
        if (prof_fwd[k] > 0) M = std::max(M, prof_fwd[k] * std::exp(beta * k));
        if (prof_bwd[k] > 0) M = std::max(M, prof_bwd[k] * std::exp(beta * k));
    }
    rep.exponent = beta;
    rep.bound = M;
    if (shift) rep.gap = std::make_pair(rho * std::exp(-beta), rho * std::exp(beta));

    // clause diagnostics
    for (int n = rep.window_lo; n <= rep.window_hi; ++n) {
        const Eigen::MatrixXd& P = rep.P(n);
        rep.max_projection_defect =
            std::max(rep.max_projection_defect, (P * P - P).operatorNorm());
        if (n < rep.window_hi) {
            const Eigen::MatrixXd& T = fam.step(n);
            double defect = (T * P - rep.P(n + 1) * T).operatorNorm();
            rep.max_commutation_defect =
                std::max(rep.max_commutation_defect, defect / std::max(1e-300, T.operatorNorm()));
        }
    }
    bool decay_ok = true;
    for (int k = 0; k <= wlen; ++k) {
        if (prof_fwd[k] > M * std::exp(-beta * k) * (1 + 1e-9)) decay_ok = false;
        if (prof_bwd[k] > M * std::exp(-beta * k) * (1 + 1e-9)) decay_ok = false;
    }
    rep.clauses_ok = decay_ok && rep.max_projection_defect < 1e-8 &&
                     rep.max_commutation_defect < 1e-6;
    return rep;
}

// --- Green function solve ------------------------------------------------------

GreenSolution green_solve(const EvolutionFamily& fam, const DichotomyReport& report,
                          const std::vector<Eigen::VectorXd>& F) {
    const int d = fam.dim();
    const int lo = report.window_lo, hi = report.window_hi;
    const int wlen = hi - lo;
    if (static_cast<int>(F.size()) < wlen)
        throw InputError("green_solve: F must cover the report window");
    auto F_at = [&](int n) -> const Eigen::VectorXd& { return F.at(n - lo); };

    const double rho = report.rho;
    double supF = 0.0;
    for (int n = lo; n < hi; ++n) supF = std::max(supF, F_at(n).norm());

    // stable part: forward recursion (zero tail at the left edge)
    std::vector<Eigen::VectorXd> Ys(wlen + 1, Eigen::VectorXd::Zero(d));
    for (int n = lo; n < hi; ++n) {
        Eigen::MatrixXd IP = Eigen::MatrixXd::Identity(d, d) - report.P(n + 1);
        Ys[n + 1 - lo] = (fam.step(n) / rho) * Ys[n - lo] + IP * F_at(n);
    }

    // unstable part: backward recursion through the restricted inverse
    std::vector<Eigen::VectorXd> Yu(wlen + 1, Eigen::VectorXd::Zero(d));
    const int r = report.rank;
    if (r > 0) {
        // bases of the ranges: re-derive from the projections by QR
        std::vector<Eigen::MatrixXd> U(wlen + 1);
        for (int n = lo; n <= hi; ++n) {
            Eigen::MatrixXd P = report.P(n);
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(P, Eigen::ComputeThinU);
            U[n - lo] = svd.matrixU().leftCols(r);
        }
        Eigen::VectorXd c = Eigen::VectorXd::Zero(r);  // coordinates in U(hi)
        for (int n = hi - 1; n >= lo; --n) {
            Eigen::VectorXd z = U[n + 1 - lo] * c - report.P(n + 1) * F_at(n);
            // solve (T_n/rho) x = z with x constrained to span U(n)
            Eigen::MatrixXd TU = (fam.step(n) / rho) * U[n - lo];
            c = (TU.transpose() * TU).ldlt().solve(TU.transpose() * z);
            Yu[n - lo] = U[n - lo] * c;
            c = U[n - lo].transpose() * Yu[n - lo];
        }
    }

    GreenSolution sol;
    sol.n_lo = lo;
    sol.Y.resize(wlen + 1);
    sol.tail_bound.resize(wlen + 1);
    const double beta = report.exponent, M = report.bound;
    const double geo = M / (1.0 - std::exp(-beta));
    for (int n = lo; n <= hi; ++n) {
        sol.Y[n - lo] = Ys[n - lo] + Yu[n - lo];
        double dl = n - lo, dr = hi - n;
        sol.tail_bound[n - lo] = supF * geo * (std::exp(-beta * dl) + std::exp(-beta * dr));
    }
    return sol;
}

// --- Fredholm machinery ----------------------------------------------------------

namespace {

struct IntersectionResult {
    int dim = 0;
    bool indeterminate = false;
    std::vector<double> sigmas;
    std::vector<Eigen::VectorXd> basis;  // common vectors, unit norm
};

// dimension and a basis of span(A) /\ span(B); A, B orthonormal columns
IntersectionResult subspace_intersection(const Eigen::MatrixXd& A,
                                         const Eigen::MatrixXd& B,
                                         const DichotomyConfig& cfg) {
    IntersectionResult out;
    const int a = static_cast<int>(A.cols()), b = static_cast<int>(B.cols());
    if (a == 0 || b == 0) return out;
    Eigen::MatrixXd C(A.rows(), a + b);
    C << A, -B;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(C, Eigen::ComputeFullV);
    const int nsv = static_cast<int>(svd.singularValues().size());
    int rank = 0;
    for (int i = 0; i < nsv; ++i) {
        double s = svd.singularValues()(i);
        out.sigmas.push_back(s);
        if (s > cfg.sigma_high) ++rank;
        else if (s > cfg.sigma_low) out.indeterminate = true;
    }
    out.dim = a + b - rank;
    for (int q = 0; q < out.dim && q < nsv; ++q) {
        Eigen::VectorXd alpha = svd.matrixV().col(a + b - 1 - q).head(a);
        Eigen::VectorXd v = A * alpha;
        double nv = v.norm();
        if (nv > 1e-12) out.basis.push_back(v / nv);
    }
    return out;
}

} // namespace

FredholmReport fredholm_index(const EvolutionFamily& fam,
                              const DichotomyReport& report_minus,
                              const DichotomyReport& report_plus,
                              const DichotomyConfig& cfg) {
    const int d = fam.dim();
    FredholmReport rep;
    rep.rank_minus = report_minus.rank;
    rep.rank_plus = report_plus.rank;
    rep.index = rep.rank_minus - rep.rank_plus;

    // canonical subspaces at n = 0
    Eigen::MatrixXd Um = report_minus.unstable_at_hi;          // U^-(0)
    Eigen::MatrixXd Wp = report_plus.adjoint_unstable_at_lo;   // R(P^{+*}(0))
    Eigen::MatrixXd Sp = complement(Wp, d);                    // S^+(0)
    Eigen::MatrixXd UmPerp = complement(Um, d);                // R(I - P^{-*}(0))

    IntersectionResult ker = subspace_intersection(Um, Sp, cfg);
    IntersectionResult cok = subspace_intersection(UmPerp, Wp, cfg);
    // empty factors: the intersection is the other subspace when one factor
    // is the whole space, or trivial when it is {0}
    if (Um.cols() == 0 || Sp.cols() == 0) ker.dim = 0;
    if (UmPerp.cols() == 0 || Wp.cols() == 0) cok.dim = 0;

    rep.kernel_dim = ker.dim;
    rep.cokernel_dim = cok.dim;
    rep.kernel_sigmas = ker.sigmas;
    rep.cokernel_sigmas = cok.sigmas;
    rep.indeterminate = ker.indeterminate || cok.indeterminate;
    rep.kernel_at_zero = ker.basis;
    rep.cokernel_at_zero = cok.basis;
    return rep;
}

namespace {

// materialize x(n) on [lo, hi] from x(0): forward by plain steps, backward by
// least-squares inversion restricted to the minus unstable range
AdjointSequence materialize_kernel(const EvolutionFamily& fam,
                                   const Eigen::VectorXd& x0,
                                   const DichotomyReport& rm) {
    AdjointSequence seq;
    seq.psi0 = x0;
    const int lo = rm.window_lo, hi = fam.n_hi;
    seq.n_lo = lo;
    seq.values.assign(hi - lo + 1, Eigen::VectorXd());
    seq.values[0 - lo] = x0;
    for (int n = 0; n < hi; ++n)
        seq.values[n + 1 - lo] = fam.step(n) * seq.values[n - lo];
    Eigen::MatrixXd U = rm.unstable_at_hi;
    Eigen::VectorXd cur = x0;
    for (int n = -1; n >= lo; --n) {
        // step back inside W^u: solve T_n (U c) = cur
        Eigen::MatrixXd TU = fam.step(n) * U;
        Eigen::VectorXd c = (TU.transpose() * TU).ldlt().solve(TU.transpose() * cur);
        cur = U * c;
        seq.values[n - lo] = cur;
        // realign the working basis one step back
        Eigen::MatrixXd TUinv(U.rows(), U.cols());
        for (int k = 0; k < U.cols(); ++k) {
            Eigen::VectorXd ck = (TU.transpose() * TU).ldlt().solve(TU.transpose() * U.col(k));
            TUinv.col(k) = ck;
        }
        U = orthonormalize(U * TUinv);
    }
    return seq;
}

AdjointSequence materialize_adjoint(const EvolutionFamily& fam,
                                    const Eigen::VectorXd& psi0,
                                    const DichotomyReport& rp) {
    AdjointSequence seq;
    seq.psi0 = psi0;
    const int lo = fam.n_lo, hi = rp.window_hi;
    seq.n_lo = lo;
    seq.values.assign(hi - lo + 1, Eigen::VectorXd());
    seq.values[0 - lo] = psi0;
    // minus side: psi(n) = T_n^T psi(n+1)
    for (int n = -1; n >= lo; --n)
        seq.values[n - lo] = fam.step(n).transpose() * seq.values[n + 1 - lo];
    // plus side: solve T_n^T psi(n+1) = psi(n), constrained to R(P^{+*})
    Eigen::MatrixXd W = rp.adjoint_unstable_at_lo;
    Eigen::VectorXd cur = psi0;
    for (int n = 0; n < hi; ++n) {
        Eigen::MatrixXd TW = fam.step(n).transpose() * W;
        Eigen::VectorXd c = (TW.transpose() * TW).ldlt().solve(TW.transpose() * cur);
        cur = W * c;
        seq.values[n + 1 - lo] = cur;
        Eigen::MatrixXd TWinv(W.rows(), W.cols());
        for (int k = 0; k < W.cols(); ++k)
            TWinv.col(k) = (TW.transpose() * TW).ldlt().solve(TW.transpose() * W.col(k));
        W = orthonormalize(W * TWinv);
    }
    return seq;
}

} // namespace

std::vector<AdjointSequence> bounded_adjoint_solutions(const EvolutionFamily& fam,
                                                       const DichotomyReport& report_minus,
                                                       const DichotomyReport& report_plus,
                                                       const DichotomyConfig& cfg) {
    FredholmReport fr = fredholm_index(fam, report_minus, report_plus, cfg);
    if (fr.indeterminate)
        throw IndeterminateError("bounded_adjoint_solutions: intersection singular value "
                                 "inside the ambiguity band",
                                 fr.cokernel_sigmas.empty() ? 0.0 : fr.cokernel_sigmas.back());
    std::vector<AdjointSequence> out;
    for (const auto& psi0 : fr.cokernel_at_zero)
        out.push_back(materialize_adjoint(fam, psi0, report_plus));
    return out;
}

std::vector<AdjointSequence> bounded_kernel_solutions(const EvolutionFamily& fam,
                                                      const DichotomyReport& report_minus,
                                                      const DichotomyReport& report_plus,
                                                      const DichotomyConfig& cfg) {
    FredholmReport fr = fredholm_index(fam, report_minus, report_plus, cfg);
    std::vector<AdjointSequence> out;
    for (const auto& x0 : fr.kernel_at_zero)
        out.push_back(materialize_kernel(fam, x0, report_minus));
    return out;
}

// --- Melnikov pairing ---------------------------------------------------------------

AdjointPath adjoint_path_from_sequence(const Trajectory& traj, double t_center,
                                       double tau, const std::vector<Field>& psi_steps,
                                       int n_lo, int substeps) {
    AdjointPath path;
    for (size_t i = 0; i + 1 < psi_steps.size(); ++i) {
        double t_right = t_center + (n_lo + static_cast<int>(i) + 1) * tau;
        for (int s = substeps; s >= 1; --s) {
            double sigma = t_right - tau * s / substeps;
            path.times.push_back(sigma);
            path.psi.push_back(adjoint_evolve(traj, psi_steps[i + 1], t_right, sigma));
        }
    }
    // append the final node
    path.times.push_back(t_center + (n_lo + static_cast<int>(psi_steps.size()) - 1) * tau);
    path.psi.push_back(psi_steps.back());
    return path;
}

namespace {

double bump_pairing(const Trajectory& traj, const Field& psi, double t, const Term& g) {
    Field u = traj.at_time(t);
    Field ux = spectral_derivative(u, 1);
    NonlinearitySpec one_term;
    one_term.terms.push_back(g);
    double s = 0.0;
    const Grid& gr = u.grid;
    for (int j = 0; j < gr.n; ++j)
        s += psi[j] * one_term.eval(gr.x(j), u[j], ux[j]);
    return s * gr.dx();
}

double simpson(const std::vector<double>& t, const std::vector<double>& y, int stride) {
    // composite Simpson over samples thinned by `stride` (assumed uniform)
    double total = 0.0;
    size_t i = 0;
    while (i + 2 * stride < t.size()) {
        double h = t[i + stride] - t[i];
        total += h / 3.0 * (y[i] + 4.0 * y[i + stride] + y[i + 2 * stride]);
        i += 2 * stride;
    }
    // trapezoid cleanup for the ragged end
    for (; i + stride < t.size(); i += stride)
        total += 0.5 * (y[i] + y[i + stride]) * (t[i + stride] - t[i]);
    return total;
}

} // namespace

MelnikovResult melnikov_integral(const Trajectory& traj, const AdjointPath& psi,
                                 const Term& bump) {
    const size_t N = psi.times.size();
    if (N < 5) throw InputError("melnikov_integral: too few adjoint samples");
    std::vector<double> y(N);
    for (size_t i = 0; i < N; ++i)
        y[i] = bump_pairing(traj, psi.psi[i], psi.times[i], bump);

    MelnikovResult res;
    double fine = simpson(psi.times, y, 1);
    double coarse = simpson(psi.times, y, 2);
    res.value = fine;
    res.quadrature_error = std::abs(fine - coarse) / 15.0;

    // tail bound: exponential extrapolation of the envelope at both ends
    auto tail = [&](bool left) {
        const int K = std::min<size_t>(20, N / 4);
        double a0 = 0.0, a1 = 0.0;
        for (int q = 0; q < K; ++q) {
            size_t i = left ? q : N - 1 - q;
            a1 = std::max(a1, std::abs(y[i]));
            if (q < K / 2) a0 = std::max(a0, std::abs(y[left ? K - 1 - q : N - K + q]));
        }
        if (a1 <= 0) return 0.0;
        double span = std::abs(psi.times[K - 1] - psi.times[0]);
        double rate = (a0 > 0 && a0 < a1) ? std::log(a1 / a0) / span : 1.0;
        rate = std::max(rate, 0.1);
        double edge = std::abs(y[left ? 0 : N - 1]);
        return edge / rate;
    };
    res.tail_bound = tail(true) + tail(false);
    return res;
}

BreakingBump construct_breaking_bump(const Trajectory& traj, const AdjointPath& psi,
                                     const ConnectionConfig& conn_cfg) {
    if (psi.psi.empty())
        throw InputError("construct_breaking_bump: empty adjoint solution");
    double psi_max = 0.0;
    for (const Field& p : psi.psi) psi_max = std::max(psi_max, p.sup_norm());
    if (psi_max < 1e-12)
        throw InputError("construct_breaking_bump: adjoint solution is numerically zero "
                         "(connection is transverse)");

    // peak of |psi(x, t)|
    const Grid& g = psi.psi[0].grid;
    double t0 = psi.times[0];
    int j0 = 0;
    double best = -1.0;
    for (size_t i = 0; i < psi.times.size(); ++i) {
        for (int j = 0; j < g.n; ++j) {
            if (std::abs(psi.psi[i][j]) > best) {
                best = std::abs(psi.psi[i][j]);
                t0 = psi.times[i];
                j0 = j;
            }
        }
    }
    const double x0 = g.x(j0);
    Field u_t0 = traj.at_time(t0);
    Field ux_t0 = spectral_derivative(u_t0, 1);
    const double u0 = u_t0[j0], p0 = ux_t0[j0];

    // curve ranges set the initial widths
    double umin = u0, umax = u0, pmin = p0, pmax = p0;
    for (int i = 0; i < traj.size(); i += std::max(1, traj.size() / 500)) {
        Field ux = spectral_derivative(traj.states[i], 1);
        umin = std::min(umin, traj.states[i][j0]);
        umax = std::max(umax, traj.states[i][j0]);
        pmin = std::min(pmin, ux[j0]);
        pmax = std::max(pmax, ux[j0]);
    }

    Term bump;
    bump.kind = Term::Kind::Bump;
    bump.x0 = x0;
    bump.u0 = u0;
    bump.p0 = p0;
    bump.wx = kTwoPi / 4;
    bump.wu = std::max(0.5 * (umax - umin), 1e-3);
    bump.wp = std::max(0.5 * (pmax - pmin), 1e-3);

    BreakingBump out;
    out.x0 = x0;
    out.t0 = t0;

    for (int shrink = 0; shrink < 14; ++shrink) {
        // (a) the support must meet the (u, u_x)(x0, .) curve in one run around t0
        bool contiguous = true;
        bool in_run = false, run_done = false, covers_t0 = false;
        for (size_t i = 0; i < psi.times.size(); ++i) {
            Field u = traj.at_time(psi.times[i]);
            Field ux = spectral_derivative(u, 1);
            bool inside = std::abs(u[j0] - u0) < bump.wu && std::abs(ux[j0] - p0) < bump.wp;
            if (inside) {
                if (run_done) { contiguous = false; break; }
                in_run = true;
                if (std::abs(psi.times[i] - t0) < 1e-12) covers_t0 = true;
                if (psi.times[i] <= t0 && t0 <= psi.times[std::min(i + 1, psi.times.size() - 1)])
                    covers_t0 = true;
            } else if (in_run) {
                in_run = false;
                run_done = true;
            }
        }
        // normalize the amplitude so the pairing is O(1) before sign checks
        bump.amp = 1.0;
        MelnikovResult mres = melnikov_integral(traj, psi, bump);
        if (contiguous && covers_t0 &&
            std::abs(mres.value) > 3.0 * std::max(mres.total_error(), 1e-300)) {
            out.bump = bump;
            out.melnikov = mres;
            out.shrink_steps = shrink;
            return out;
        }
        bump.wu *= 0.5;
        bump.wp *= 0.5;
        bump.wx *= 0.75;
        if (bump.wu < 10 * conn_cfg.inj_tol || bump.wp < 10 * conn_cfg.inj_tol)
            throw ConvergenceError(
                "construct_breaking_bump: injectivity margins too small at this "
                "resolution (support cannot isolate the visit)", bump.wu);
    }
    throw ConvergenceError("construct_breaking_bump: no isolating width found", bump.wu);
}

} // namespace s1dyn
