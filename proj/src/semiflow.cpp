#include "s1dyn/semiflow.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace s1dyn {

namespace {

// phi1(z) = (e^z - 1)/z, phi2(z) = (e^z - z - 1)/z^2, series near 0
double phi1(double z) {
    if (std::abs(z) < 1e-4) return 1.0 + z / 2.0 + z * z / 6.0;
    return (std::exp(z) - 1.0) / z;
}
double phi2(double z) {
    if (std::abs(z) < 1e-4) return 0.5 + z / 6.0 + z * z / 24.0;
    return (std::exp(z) - z - 1.0) / (z * z);
}

struct StepPartition {
    int m;
    double h;
};

StepPartition partition(double t0, double t1, double dt) {
    double span = t1 - t0;
    int m = std::max(1, static_cast<int>(std::ceil(span / dt - 1e-12)));
    return {m, span / m};
}

class NonlinearStepper {
public:
    NonlinearStepper(const Grid& g, const NonlinearitySpec& spec, double h,
                     FlowConfig::Scheme scheme)
        : grid_(g), spec_(&spec), h_(h), scheme_(scheme),
          dealias_(spec.has_nonlinear_term()) {
        const int half = g.n / 2;
        exp_h_.resize(half + 1);
        p1_.resize(half + 1);
        p2_.resize(half + 1);
        bdf_.resize(half + 1);
        for (int k = 0; k <= half; ++k) {
            double z = -static_cast<double>(k) * k * h;
            exp_h_[k] = std::exp(z);
            p1_[k] = h * phi1(z);
            p2_[k] = h * phi2(z);
            bdf_[k] = 1.0 / (1.5 + static_cast<double>(k) * k * h);
        }
    }

    Field rhs(const Field& u) const {
        if (dealias_)
            return dealiased_pointwise(u, [this](double x, double v, double p) {
                return spec_->eval(x, v, p);
            });
        return eval_nonlinearity(*spec_, u);
    }

    Field prepare(const Field& u0) const {
        if (dealias_) return band_truncate(u0, trusted_band(u0.n()));
        return u0;
    }

    // one ETDRK2 step
    Field step_etdrk2(const Field& u) const {
        Field nu = rhs(u);
        Field a = apply_multiplier(u, [this](int k) { return exp_h_[k]; }) +
                  apply_multiplier(nu, [this](int k) { return p1_[k]; });
        Field na = rhs(a);
        return a + apply_multiplier(na - nu, [this](int k) { return p2_[k]; });
    }

    // one IMEX-BDF2 step from (u_prev, u) with cached N(u_prev)
    Field step_bdf2(const Field& u_prev_n, const Field& u, Field& n_inout) const {
        Field nu = rhs(u);
        Field rhs_field = 2.0 * u - 0.5 * u_prev_n + (2.0 * h_) * nu - h_ * n_inout;
        n_inout = nu;
        return apply_multiplier(rhs_field, [this](int k) { return bdf_[k]; });
    }

private:
    Grid grid_;
    const NonlinearitySpec* spec_;
    double h_;
    FlowConfig::Scheme scheme_;
    bool dealias_;
    std::vector<double> exp_h_, p1_, p2_, bdf_;
};

void check_state(const Field& u, double t, double bound) {
    double s = u.sup_norm();
    if (!std::isfinite(s) || s > bound) throw BlowupError(t, s);
}

} // namespace

int Trajectory::index_below(double t) const {
    auto it = std::upper_bound(times.begin(), times.end(), t);
    int i = static_cast<int>(it - times.begin()) - 1;
    return std::clamp(i, 0, size() - 1);
}

Field Trajectory::at_time(double t) const {
    int i = index_below(t);
    if (i >= size() - 1) return states.back();
    double t0 = times[i], t1 = times[i + 1];
    double w = (t - t0) / (t1 - t0);
    Field out = states[i];
    for (int j = 0; j < out.n(); ++j)
        out[j] = (1.0 - w) * states[i][j] + w * states[i + 1][j];
    return out;
}

double Trajectory::step_residual(int i) const {
    double t0 = times[i], t1 = times[i + 1];
    FlowConfig half = cfg;
    half.dt = (t1 - t0) / 2.0;
    half.store_stride = 1 << 20;
    Trajectory re = evolve(states[i], spec, t1 - t0, half);
    return (re.states.back() - states[i + 1]).sup_norm();
}

Trajectory evolve(const Field& u0, const NonlinearitySpec& spec, double t_end,
                  const FlowConfig& cfg) {
    if (t_end <= 0.0) throw InputError("evolve: t_end must be positive");
    if (!u0.finite()) throw InputError("evolve: non-finite initial data");

    auto [m, h] = partition(0.0, t_end, cfg.dt);
    NonlinearStepper stepper(u0.grid, spec, h, cfg.scheme);

    Trajectory traj;
    traj.spec = spec;
    traj.cfg = cfg;
    traj.times.reserve(m / cfg.store_stride + 2);
    traj.states.reserve(m / cfg.store_stride + 2);

    Field u = stepper.prepare(u0);
    check_state(u, 0.0, cfg.blowup_bound);
    traj.times.push_back(0.0);
    traj.states.push_back(u);

    Field u_prev = u;
    Field n_prev(u.grid);
    bool have_prev = false;

    for (int k = 0; k < m; ++k) {
        Field next(u.grid);
        if (cfg.scheme == FlowConfig::Scheme::EtdRk2) {
            next = stepper.step_etdrk2(u);
        } else {
            if (!have_prev) {
                n_prev = stepper.rhs(u);
                next = stepper.step_etdrk2(u);  // bootstrap step
                have_prev = true;
            } else {
                next = stepper.step_bdf2(u_prev, u, n_prev);
            }
        }
        u_prev = u;
        u = next;
        double t = (k + 1) * h;
        check_state(u, t, cfg.blowup_bound);
        if ((k + 1) % cfg.store_stride == 0 || k + 1 == m) {
            traj.times.push_back(t);
            traj.states.push_back(u);
        }
    }
    return traj;
}

Field time_tau_map(const Field& u0, const NonlinearitySpec& spec, double tau,
                   const FlowConfig& cfg) {
    FlowConfig c = cfg;
    c.store_stride = 1 << 20;  // endpoint only
    return evolve(u0, spec, tau, c).states.back();
}

// --- tangent / adjoint -------------------------------------------------------

namespace {

// Coefficient fields (b, a) of the linearization at time t, linearly
// interpolated between the values computed at the bracketing stored samples.
class CoefficientTable {
public:
    explicit CoefficientTable(const Trajectory& base) : base_(&base) {}

    void at(double t, Field& b, Field& a) {
        int i = base_->index_below(t);
        if (i >= base_->size() - 1) i = base_->size() - 2;
        ensure(i);
        ensure(i + 1);
        double t0 = base_->times[i], t1 = base_->times[i + 1];
        double w = (t - t0) / (t1 - t0);
        w = std::clamp(w, 0.0, 1.0);
        const auto& [b0, a0] = cache_.at(i);
        const auto& [b1, a1] = cache_.at(i + 1);
        b = Field(base_->grid());
        a = Field(base_->grid());
        for (int j = 0; j < b.n(); ++j) {
            b[j] = (1.0 - w) * b0[j] + w * b1[j];
            a[j] = (1.0 - w) * a0[j] + w * a1[j];
        }
    }

private:
    void ensure(int i) {
        if (cache_.count(i)) return;
        Field b, a;
        linearization_coefficients(base_->spec, base_->states[i], b, a);
        // access is a monotone sweep (either direction); evict what it passed
        while (cache_.size() > 8) {
            if (cache_.begin()->first < i - 1) cache_.erase(cache_.begin());
            else if (std::prev(cache_.end())->first > i + 2) cache_.erase(std::prev(cache_.end()));
            else break;
        }
        cache_.emplace(i, std::make_pair(std::move(b), std::move(a)));
    }

    const Trajectory* base_;
    std::map<int, std::pair<Field, Field>> cache_;
};

// One Strang-Cayley step of the linearized equation:
//   T = e^{Lh/2} (I - (h/2)B)^{-1} (I + (h/2)B) e^{Lh/2},
// B = diag(b) + diag(a) D. The palindromic shape makes the transpose
// implementable factor by factor, and T symmetric when a = 0 and the
// coefficients are time-independent.
class TangentStep {
public:
    TangentStep(const Grid& g, const Field& b, const Field& a, double h)
        : grid_(g), h_(h), b_(b), a_(a) {
        const Eigen::MatrixXd& D = derivative_matrix(g, 1);
        Eigen::MatrixXd B = D;
        for (int i = 0; i < g.n; ++i) B.row(i) *= a[i];
        for (int i = 0; i < g.n; ++i) B(i, i) += b[i];
        Bmat_ = B;
        Eigen::MatrixXd M = Eigen::MatrixXd::Identity(g.n, g.n) - (h / 2.0) * B;
        lu_.compute(M);
    }

    Field forward(const Field& v) const {
        Field w = heat_semigroup(v, h_ / 2.0);
        Eigen::VectorXd rhs = to_vec(w) + (h_ / 2.0) * (Bmat_ * to_vec(w));
        Eigen::VectorXd sol = lu_.solve(rhs);
        return heat_semigroup(from_vec(sol), h_ / 2.0);
    }

    Field transposed(const Field& psi) const {
        Field w = heat_semigroup(psi, h_ / 2.0);
        Eigen::VectorXd s = lu_.transpose().solve(to_vec(w));
        Eigen::VectorXd out = s + (h_ / 2.0) * (Bmat_.transpose() * s);
        return heat_semigroup(from_vec(out), h_ / 2.0);
    }

    void forward_matrix(Eigen::MatrixXd& M) const {
        apply_heat_half(M);
        M += (h_ / 2.0) * (Bmat_ * M).eval();
        M = lu_.solve(M);
        apply_heat_half(M);
    }

private:
    void apply_heat_half(Eigen::MatrixXd& M) const {
        Field col(grid_);
        for (int c = 0; c < M.cols(); ++c) {
            for (int i = 0; i < grid_.n; ++i) col[i] = M(i, c);
            Field hc = heat_semigroup(col, h_ / 2.0);
            for (int i = 0; i < grid_.n; ++i) M(i, c) = hc[i];
        }
    }

    Eigen::VectorXd to_vec(const Field& f) const {
        return Eigen::Map<const Eigen::VectorXd>(f.values.data(), f.n());
    }
    Field from_vec(const Eigen::VectorXd& v) const {
        Field f(grid_);
        for (int i = 0; i < grid_.n; ++i) f[i] = v(i);
        return f;
    }

    Grid grid_;
    double h_;
    Field b_, a_;
    Eigen::MatrixXd Bmat_;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
};

void check_range(const Trajectory& base, double t0, double t1) {
    const double eps = 1e-9 * std::max(1.0, std::abs(base.t_end()));
    if (t0 < base.t_begin() - eps || t1 > base.t_end() + eps || t1 < t0)
        throw InputError("tangent/adjoint: time range outside base trajectory");
}

} // namespace

Field tangent_evolve(const Trajectory& base, const Field& v0, double t0, double t1) {
    check_range(base, t0, t1);
    if (t1 == t0) return v0;
    auto [m, h] = partition(t0, t1, base.cfg.dt);
    CoefficientTable coefs(base);
    Field v = v0;
    Field b, a;
    for (int k = 0; k < m; ++k) {
        coefs.at(t0 + (k + 0.5) * h, b, a);
        TangentStep step(base.grid(), b, a, h);
        v = step.forward(v);
        double s = v.sup_norm();
        if (!std::isfinite(s) || s > base.cfg.tangent_growth_bound)
            throw BlowupError(t0 + (k + 1) * h, s);
    }
    return v;
}

Field adjoint_evolve(const Trajectory& base, const Field& psi1, double t1, double t0) {
    check_range(base, t0, t1);
    if (t1 == t0) return psi1;
    auto [m, h] = partition(t0, t1, base.cfg.dt);
    CoefficientTable coefs(base);
    Field psi = psi1;
    Field b, a;
    for (int k = m - 1; k >= 0; --k) {
        coefs.at(t0 + (k + 0.5) * h, b, a);
        TangentStep step(base.grid(), b, a, h);
        psi = step.transposed(psi);
        double s = psi.sup_norm();
        if (!std::isfinite(s) || s > base.cfg.tangent_growth_bound)
            throw BlowupError(t0 + k * h, s);
    }
    return psi;
}

Field time_tau_derivative(const Field& u0, const Field& v0,
                          const NonlinearitySpec& spec, double tau,
                          const FlowConfig& cfg) {
    FlowConfig c = cfg;
    c.store_stride = 1;
    Trajectory base = evolve(u0, spec, tau, c);
    return tangent_evolve(base, v0, 0.0, tau);
}

Eigen::MatrixXd tangent_frame(const Trajectory& base, const Eigen::MatrixXd& frame,
                              double t0, double t1) {
    check_range(base, t0, t1);
    Eigen::MatrixXd M = frame;
    if (t1 == t0) return M;
    auto [m, h] = partition(t0, t1, base.cfg.dt);
    CoefficientTable coefs(base);
    Field b, a;
    for (int k = 0; k < m; ++k) {
        coefs.at(t0 + (k + 0.5) * h, b, a);
        TangentStep step(base.grid(), b, a, h);
        step.forward_matrix(M);
    }
    return M;
}

Eigen::MatrixXd tangent_matrix(const Trajectory& base, double t0, double t1) {
    const int n = base.grid().n;
    return tangent_frame(base, Eigen::MatrixXd::Identity(n, n), t0, t1);
}

Eigen::MatrixXd tangent_matrix_periodic(const Trajectory& orbit, double t0, double t1) {
    const double period = orbit.t_end() - orbit.t_begin();
    const int n = orbit.grid().n;
    Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n, n);
    double t = t0;
    while (t < t1 - 1e-12) {
        double base_t = orbit.t_begin() + std::fmod(t - orbit.t_begin() + 1e-15, period);
        double chunk = std::min(t1 - t, orbit.t_end() - base_t);
        if (chunk < 1e-12) { t += 1e-12; continue; }
        M = tangent_matrix(orbit, base_t, base_t + chunk) * M;
        t += chunk;
    }
    return M;
}

} // namespace s1dyn
