#include "s1dyn/critical.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace s1dyn {

namespace {

Eigen::VectorXd to_vec(const Field& f) {
    return Eigen::Map<const Eigen::VectorXd>(f.values.data(), f.n());
}

Field from_vec(const Grid& g, const Eigen::VectorXd& v) {
    Field f(g);
    for (int i = 0; i < g.n; ++i) f[i] = v(i);
    return f;
}

// normalize sup to 1 with a deterministic sign (peak value positive)
void normalize_field(Field& f) {
    int arg = 0;
    double best = 0.0;
    for (int j = 0; j < f.n(); ++j)
        if (std::abs(f[j]) > best) { best = std::abs(f[j]); arg = j; }
    if (best == 0.0) return;
    double s = (f[arg] > 0 ? 1.0 : -1.0) / best;
    for (double& v : f.values) v *= s;
}

Eigen::VectorXd stationary_residual(const NonlinearitySpec& spec, const Field& u) {
    Field uxx = spectral_derivative(u, 2);
    Field fu = eval_nonlinearity(spec, u);
    return to_vec(uxx) + to_vec(fu);
}

} // namespace

Eigen::MatrixXd linearized_operator(const NonlinearitySpec& spec, const Field& u) {
    const Grid& g = u.grid;
    Field b, a;
    linearization_coefficients(spec, u, b, a);
    Eigen::MatrixXd L = derivative_matrix(g, 2);
    const Eigen::MatrixXd& D1 = derivative_matrix(g, 1);
    for (int i = 0; i < g.n; ++i) {
        L.row(i) += a[i] * D1.row(i);
        L(i, i) += b[i];
    }
    return L;
}

EquilibriumRecord find_equilibrium(const Field& guess, const NonlinearitySpec& spec,
                                   const CriticalConfig& cfg) {
    if (!guess.finite()) throw InputError("find_equilibrium: non-finite guess");
    const Grid& g = guess.grid;
    Field u = guess;
    Eigen::VectorXd res = stationary_residual(spec, u);
    double rnorm = res.lpNorm<Eigen::Infinity>();

    for (int it = 0; it < cfg.max_iter && rnorm > cfg.newton_tol; ++it) {
        Eigen::MatrixXd J = linearized_operator(spec, u);
        Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
        if (!lu.isInvertible())
            throw ConvergenceError("find_equilibrium: singular Jacobian "
                                   "(near a non-hyperbolic point)", rnorm);
        Eigen::VectorXd step = lu.solve(-res);

        // halve the step while it fails to reduce the residual
        double lambda = 1.0;
        Field u_new = u;
        double rnew = rnorm;
        for (int back = 0; back < 12; ++back) {
            u_new = from_vec(g, to_vec(u) + lambda * step);
            Eigen::VectorXd rn = stationary_residual(spec, u_new);
            rnew = rn.lpNorm<Eigen::Infinity>();
            if (std::isfinite(rnew) && rnew < rnorm) { res = rn; break; }
            lambda *= 0.5;
        }
        if (!(rnew < rnorm))
            throw ConvergenceError("find_equilibrium: line search stalled", rnorm);
        u = u_new;
        rnorm = rnew;
    }
    if (rnorm > cfg.newton_tol)
        throw ConvergenceError("find_equilibrium: no convergence after max_iter", rnorm);

    EquilibriumRecord rec;
    rec.profile = u;
    rec.residual = rnorm;
    rec.spectrum = analyze_operator(linearized_operator(spec, u), g, cfg);
    return rec;
}

// --- spectra -----------------------------------------------------------------

namespace {

struct EigPair {
    std::complex<double> value;
    Eigen::VectorXcd vector;
};

std::vector<EigPair> solve_dense(const Eigen::MatrixXd& L) {
    std::vector<EigPair> out;
    const int n = static_cast<int>(L.rows());
    double scale = L.cwiseAbs().maxCoeff();
    if ((L - L.transpose()).cwiseAbs().maxCoeff() < 1e-12 * scale) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L);
        for (int i = 0; i < n; ++i) {
            EigPair p;
            p.value = es.eigenvalues()(i);
            p.vector = es.eigenvectors().col(i).cast<std::complex<double>>();
            out.push_back(std::move(p));
        }
    } else {
        Eigen::EigenSolver<Eigen::MatrixXd> es(L);
        for (int i = 0; i < n; ++i) {
            EigPair p;
            p.value = es.eigenvalues()(i);
            p.vector = es.eigenvectors().col(i);
            out.push_back(std::move(p));
        }
    }
    return out;
}

double order_key(const std::complex<double>& z, bool floquet) {
    return floquet ? std::abs(z) : z.real();
}

// drop negligible imaginary parts produced by round-off
std::complex<double> clean(const std::complex<double>& z, double scale) {
    if (std::abs(z.imag()) < 1e-8 * (1.0 + std::abs(z)) &&
        std::abs(z.imag()) < 1e-6 * scale)
        return {z.real(), 0.0};
    return z;
}

double vector_angle(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
    // angle between the complex lines spanned by a and b
    std::complex<double> ip = (a.adjoint() * b)(0);
    double c = std::abs(ip) / (a.norm() * b.norm());
    c = std::min(1.0, std::max(-1.0, c));
    return std::acos(c);
}

SpectrumReport build_report(std::vector<EigPair> eigs, const Grid& g, bool floquet,
                            const CriticalConfig& cfg) {
    double scale = 0.0;
    for (const auto& e : eigs) scale = std::max(scale, std::abs(e.value));
    for (auto& e : eigs) e.value = clean(e.value, scale);

    std::sort(eigs.begin(), eigs.end(), [&](const EigPair& a, const EigPair& b) {
        double ka = order_key(a.value, floquet), kb = order_key(b.value, floquet);
        if (ka != kb) return ka > kb;
        return a.value.imag() > b.value.imag();
    });

    SpectrumReport rep;
    rep.floquet = floquet;
    const int n = g.n;
    for (const auto& e : eigs) {
        rep.eigenvalues.push_back(e.value);
        Field re(g), im(g);
        for (int j = 0; j < n; ++j) {
            re[j] = e.vector(j).real();
            im[j] = e.vector(j).imag();
        }
        // deterministic phase: rotate so the largest-|.| component is real positive
        int arg = 0;
        double best = 0.0;
        for (int j = 0; j < n; ++j) {
            double m = std::hypot(re[j], im[j]);
            if (m > best) { best = m; arg = j; }
        }
        if (best > 0) {
            std::complex<double> ph = std::conj(std::complex<double>(re[arg], im[arg])) / best;
            for (int j = 0; j < n; ++j) {
                std::complex<double> v = ph * std::complex<double>(re[j], im[j]);
                re[j] = v.real() / best;
                im[j] = v.imag() / best;
            }
        }
        rep.eigenfunctions_re.push_back(std::move(re));
        rep.eigenfunctions_im.push_back(std::move(im));
    }

    const int total = static_cast<int>(rep.eigenvalues.size());
    int band_count = std::min(total, 2 * trusted_band(n) + 1);
    if (floquet) {
        // a compact map's small moduli are discretization noise
        double mu0 = std::abs(rep.eigenvalues.empty() ? 1.0 : rep.eigenvalues[0]);
        int solid = 0;
        while (solid < total && std::abs(rep.eigenvalues[solid]) > 1e-12 * mu0) ++solid;
        band_count = std::min(band_count, solid);
    }
    rep.trusted_count = band_count;

    // pairing blocks over the trusted range
    for (int first = 1; first + 1 < rep.trusted_count; first += 2) {
        PairBlock blk;
        blk.first_index = first;
        const auto za = rep.eigenvalues[first];
        const auto zb = rep.eigenvalues[first + 1];
        if (za.imag() != 0.0 || zb.imag() != 0.0) {
            blk.kind = PairKind::ComplexPair;
        } else if (std::abs(za.real() - zb.real()) > cfg.jordan_value_tol *
                   (1.0 + std::abs(za.real()))) {
            blk.kind = PairKind::SimpleReal;
        } else {
            double ang = vector_angle(eigs[first].vector, eigs[first + 1].vector);
            blk.kind = (ang < cfg.jordan_angle_tol) ? PairKind::DoubleRealJordan
                                                    : PairKind::DoubleRealSemisimple;
        }
        rep.pairing.push_back(blk);
    }
    return rep;
}

} // namespace

SpectrumReport analyze_operator(const Eigen::MatrixXd& L, const Grid& g,
                                const CriticalConfig& cfg) {
    SpectrumReport rep = build_report(solve_dense(L), g, /*floquet=*/false, cfg);
    rep.morse_index = 0;
    for (const auto& z : rep.eigenvalues)
        if (z.real() > 0.0) ++rep.morse_index;
    rep.hyperbolicity_margin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < rep.trusted_count; ++i)
        rep.hyperbolicity_margin =
            std::min(rep.hyperbolicity_margin, std::abs(rep.eigenvalues[i].real()));
    return rep;
}

PairingVerdict verify_pairing(const SpectrumReport& rep, const CriticalConfig& cfg) {
    PairingVerdict verdict;
    auto add = [&](const std::string& name, bool pass, const std::string& detail) {
        verdict.clauses.push_back({name, pass, detail});
        verdict.pass = verdict.pass && pass;
    };
    if (rep.eigenvalues.size() < 3 || rep.trusted_count < 3) {
        verdict.resolution_sufficient = false;
        add("resolution", false, "fewer than three trusted eigenvalues");
        return verdict;
    }
    const bool fl = rep.floquet;
    auto key = [&](int i) { return order_key(rep.eigenvalues[i], fl); };

    // (a) leading eigenvalue real, simple, eigenfunction nowhere zero
    bool a_real = rep.eigenvalues[0].imag() == 0.0;
    bool a_simple = key(0) - key(1) > 1e-12 * (1.0 + std::abs(key(0)));
    const Field& phi0 = rep.eigenfunctions_re[0];
    double mn = std::numeric_limits<double>::infinity(), mx = 0.0;
    for (int j = 0; j < phi0.n(); ++j) {
        mn = std::min(mn, std::abs(phi0[j]));
        mx = std::max(mx, std::abs(phi0[j]));
    }
    bool a_nonvanishing = mn > 1e-6 * mx;
    add("leading-real", a_real, "Im(lambda_0) = " + std::to_string(rep.eigenvalues[0].imag()));
    add("leading-simple", a_simple, "");
    add("leading-nonvanishing", a_nonvanishing,
        "min|phi_0|/max|phi_0| = " + std::to_string(mn / std::max(mx, 1e-300)));

    // (b) strict separation between consecutive pairs
    bool sep_ok = true;
    std::string sep_detail;
    for (size_t p = 0; p + 1 < rep.pairing.size(); ++p) {
        int i_hi = rep.pairing[p].first_index + 1;      // lambda_{2j}
        int i_lo = rep.pairing[p + 1].first_index;      // lambda_{2j+1}
        if (!(key(i_lo) < key(i_hi) - 1e-12 * (1.0 + std::abs(key(i_hi))))) {
            sep_ok = false;
            sep_detail = "pair boundary " + std::to_string(p) + " not separated";
        }
    }
    // also lambda_1 below lambda_0 (strictness of the first boundary)
    if (!(key(1) < key(0))) { sep_ok = false; sep_detail = "lambda_1 not below lambda_0"; }
    add("pair-separation", sep_ok, sep_detail);

    // (c) zero counts on sampled real members of each pair eigenspace
    SturmConfig sturm_cfg;
    for (size_t p = 0; p < rep.pairing.size(); ++p) {
        const PairBlock& blk = rep.pairing[p];
        int expected = 2 * (static_cast<int>(p) + 1);
        int i1 = blk.first_index, i2 = blk.first_index + 1;
        bool ok = true;
        std::string detail;
        for (double theta : {0.0, 0.7853981633974483, 1.5707963267948966, 2.356194490192345}) {
            Field member(phi0.grid, 0.0);
            double c = std::cos(theta), s = std::sin(theta);
            if (blk.kind == PairKind::ComplexPair) {
                // real part of e^{i theta} phi
                for (int j = 0; j < member.n(); ++j)
                    member[j] = c * rep.eigenfunctions_re[i1][j] -
                                s * rep.eigenfunctions_im[i1][j];
            } else {
                for (int j = 0; j < member.n(); ++j)
                    member[j] = c * rep.eigenfunctions_re[i1][j] +
                                s * rep.eigenfunctions_re[i2][j];
            }
            if (member.sup_norm() < 1e-10) continue;
            int z;
            try {
                z = zero_number(member, sturm_cfg);
            } catch (const DegenerateFieldError&) {
                continue;
            }
            bool simple = multiple_zeros(member, sturm_cfg.multiple_zero_tol, sturm_cfg).empty();
            if (z != expected || !simple) {
                ok = false;
                detail = "pair " + std::to_string(p + 1) + ": z = " + std::to_string(z) +
                         " expected " + std::to_string(expected) +
                         (simple ? "" : " (multiple zero present)");
                break;
            }
        }
        add("pair-" + std::to_string(p + 1) + "-zeros", ok, detail);
    }
    return verdict;
}

// --- periodic orbits ----------------------------------------------------------

namespace {

// smallest spatial shift symmetry: gcd of active harmonics
int fundamental_wavenumber(const Field& profile) {
    RealSpectrum s = real_spectrum(profile);
    double mx = 0.0;
    for (size_t k = 1; k < s.cos_coef.size(); ++k)
        mx = std::max(mx, std::hypot(s.cos_coef[k], s.sin_coef[k]));
    int gcd = 0;
    for (size_t k = 1; k < s.cos_coef.size(); ++k) {
        if (std::hypot(s.cos_coef[k], s.sin_coef[k]) > 1e-8 * mx)
            gcd = gcd == 0 ? static_cast<int>(k) : std::gcd(gcd, static_cast<int>(k));
    }
    return gcd == 0 ? 1 : gcd;
}

Field pde_rhs(const NonlinearitySpec& spec, const Field& u) {
    Field uxx = spectral_derivative(u, 2);
    return uxx + eval_nonlinearity(spec, u);
}

} // namespace

PeriodicOrbitRecord find_periodic_orbit(const RotatingWaveSeed& seed,
                                        const NonlinearitySpec& spec,
                                        const FlowConfig& flow,
                                        const CriticalConfig& cfg) {
    const double c = spec.advection_coefficient();
    if (std::abs(c) < 1e-12)
        throw ConvergenceError("rotating wave needs a drift term c*u_x", 0.0);

    NonlinearitySpec drift_free = spec.without_advection();
    EquilibriumRecord prof = find_equilibrium(seed.profile_guess, drift_free, cfg);

    double mean = 0.0;
    for (double v : prof.profile.values) mean += v;
    mean /= prof.profile.n();
    Field osc = prof.profile;
    for (double& v : osc.values) v -= mean;
    if (osc.sup_norm() < 1e-6)
        throw ConvergenceError("rotating-wave profile converged to a constant", osc.sup_norm());

    const int m = fundamental_wavenumber(prof.profile);
    const double period = (kTwoPi / m) / std::abs(c);

    PeriodicOrbitRecord rec;
    rec.period = period;
    FlowConfig fcfg = flow;
    fcfg.store_stride = 1;
    rec.snapshots = evolve(prof.profile, spec, period, fcfg);
    rec.closure_error = (rec.snapshots.states.back() - rec.snapshots.states.front()).sup_norm();
    if (rec.closure_error > cfg.orbit_tol)
        throw ConvergenceError("rotating-wave orbit failed to close", rec.closure_error);
    rec.gamma_dot0 = pde_rhs(spec, prof.profile);
    rec.spectrum = floquet_analysis(period_map(rec), prof.profile.grid, rec.gamma_dot0, cfg);
    return rec;
}

PeriodicOrbitRecord find_periodic_orbit(const Trajectory& loop_seed,
                                        double period_guess,
                                        const NonlinearitySpec& spec,
                                        const FlowConfig& flow,
                                        const CriticalConfig& cfg) {
    const Grid g = loop_seed.grid();
    const int n = g.n;
    Field u0 = loop_seed.states.front();
    double p = period_guess;
    Field phase_dir = pde_rhs(spec, u0);
    double pd_norm = phase_dir.l2_norm();
    if (pd_norm < 1e-12)
        throw ConvergenceError("degenerate phase condition: seed is an equilibrium", pd_norm);

    FlowConfig fcfg = flow;
    fcfg.store_stride = 1;

    // converge to the discrete fixed point itself, well below orbit_tol, so
    // that re-seeding from a solved orbit is idempotent
    const double target = std::min(1e-10, 0.3 * cfg.orbit_tol);
    double closure = std::numeric_limits<double>::infinity();
    for (int it = 0; it < cfg.max_iter; ++it) {
        Trajectory traj = evolve(u0, spec, p, fcfg);
        Field up = traj.states.back();
        double prev = closure;
        closure = (up - u0).sup_norm();
        if (closure <= target) break;
        if (closure <= cfg.orbit_tol && closure > 0.5 * prev) break;  // stagnated inside tol

        Eigen::MatrixXd DS = tangent_matrix(traj, 0.0, p);
        Eigen::VectorXd F(n + 1);
        F.head(n) = to_vec(up) - to_vec(u0);
        F(n) = 0.0;  // phase residual is zero at the current point by construction

        Eigen::MatrixXd J(n + 1, n + 1);
        J.topLeftCorner(n, n) = DS - Eigen::MatrixXd::Identity(n, n);
        J.topRightCorner(n, 1) = to_vec(pde_rhs(spec, up));
        J.bottomLeftCorner(1, n) = to_vec(phase_dir).transpose();
        J(n, n) = 0.0;

        Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
        if (!lu.isInvertible())
            throw ConvergenceError("periodic-orbit shooting: singular bordered Jacobian",
                                   closure);
        Eigen::VectorXd step = lu.solve(-F);
        u0 = from_vec(g, to_vec(u0) + step.head(n));
        p += step(n);
        if (p <= 0)
            throw ConvergenceError("periodic-orbit shooting: period went non-positive", closure);
    }
    if (!(closure <= cfg.orbit_tol))
        throw ConvergenceError("periodic-orbit shooting did not converge", closure);

    PeriodicOrbitRecord rec;
    rec.period = p;
    rec.snapshots = evolve(u0, spec, p, fcfg);
    rec.closure_error = (rec.snapshots.states.back() - rec.snapshots.states.front()).sup_norm();
    rec.gamma_dot0 = pde_rhs(spec, u0);
    rec.spectrum = floquet_analysis(period_map(rec), g, rec.gamma_dot0, cfg);
    return rec;
}

Eigen::MatrixXd period_map(const PeriodicOrbitRecord& orbit) {
    return tangent_matrix(orbit.snapshots, orbit.snapshots.t_begin(),
                          orbit.snapshots.t_end());
}

SpectrumReport floquet_analysis(const Eigen::MatrixXd& Pi, const Grid& g,
                                const Field& gamma_dot0,
                                const CriticalConfig& cfg) {
    SpectrumReport rep = build_report(solve_dense(Pi), g, /*floquet=*/true, cfg);

    // trivial eigenvalue: best eigenvector alignment with gamma_t(0)
    Eigen::VectorXd gdot = to_vec(gamma_dot0).normalized();
    double best_cos = -1.0;
    for (int i = 0; i < rep.trusted_count; ++i) {
        Eigen::VectorXd v = to_vec(rep.eigenfunctions_re[i]);
        double nv = v.norm();
        if (nv == 0.0) continue;
        double c = std::abs(v.dot(gdot)) / nv;
        if (c > best_cos) { best_cos = c; rep.trivial_index = i; }
    }
    if (best_cos < cfg.trivial_alignment) rep.trivial_index = -1;

    rep.morse_index = 0;
    for (int i = 0; i < static_cast<int>(rep.eigenvalues.size()); ++i)
        if (i != rep.trivial_index && std::abs(rep.eigenvalues[i]) > 1.0)
            ++rep.morse_index;

    rep.hyperbolicity_margin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < rep.trusted_count; ++i)
        if (i != rep.trivial_index)
            rep.hyperbolicity_margin = std::min(rep.hyperbolicity_margin,
                                                std::abs(std::abs(rep.eigenvalues[i]) - 1.0));
    return rep;
}

} // namespace s1dyn
