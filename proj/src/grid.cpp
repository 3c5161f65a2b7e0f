#include "s1dyn/grid.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

namespace s1dyn {

namespace {

// FFTW plans are cached per size; planning is not thread-safe, execution with
// the new-array interface is.
struct FftPlans {
    fftw_plan r2c;
    fftw_plan c2r;
};

std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

const FftPlans& plans_for(int n) {
    static std::map<int, FftPlans> cache;
    std::lock_guard<std::mutex> lock(planner_mutex());
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;

    std::vector<double> re(n);
    std::vector<std::complex<double>> cx(n / 2 + 1);
    FftPlans p;
    p.r2c = fftw_plan_dft_r2c_1d(n, re.data(),
                                 reinterpret_cast<fftw_complex*>(cx.data()),
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
    p.c2r = fftw_plan_dft_c2r_1d(n, reinterpret_cast<fftw_complex*>(cx.data()),
                                 re.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
    return cache.emplace(n, p).first->second;
}

} // namespace

// Forward transform, normalized so that coefficients are O(field amplitude).
static std::vector<std::complex<double>> fft_forward(const Field& f) {
    const int n = f.n();
    const FftPlans& p = plans_for(n);
    std::vector<double> in(f.values);
    std::vector<std::complex<double>> out(n / 2 + 1);
    fftw_execute_dft_r2c(p.r2c, in.data(), reinterpret_cast<fftw_complex*>(out.data()));
    const double scale = 1.0 / n;
    for (auto& c : out) c *= scale;
    return out;
}

static Field fft_backward(const Grid& g, std::vector<std::complex<double>> spec) {
    const FftPlans& p = plans_for(g.n);
    Field out(g);
    fftw_execute_dft_c2r(p.c2r, reinterpret_cast<fftw_complex*>(spec.data()),
                         out.values.data());
    return out;
}

double Field::sup_norm() const {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
}

double Field::l2_norm() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s * grid.dx());
}

bool Field::finite() const {
    return std::all_of(values.begin(), values.end(),
                       [](double v) { return std::isfinite(v); });
}

Field& Field::operator+=(const Field& o) {
    for (int j = 0; j < n(); ++j) values[j] += o.values[j];
    return *this;
}
Field& Field::operator-=(const Field& o) {
    for (int j = 0; j < n(); ++j) values[j] -= o.values[j];
    return *this;
}
Field& Field::operator*=(double a) {
    for (double& v : values) v *= a;
    return *this;
}

Field operator+(Field a, const Field& b) { a += b; return a; }
Field operator-(Field a, const Field& b) { a -= b; return a; }
Field operator*(double a, Field f) { f *= a; return f; }

double inner_l2(const Field& a, const Field& b) {
    double s = 0.0;
    for (int j = 0; j < a.n(); ++j) s += a[j] * b[j];
    return s * a.grid.dx();
}

double dot(const Field& a, const Field& b) {
    double s = 0.0;
    for (int j = 0; j < a.n(); ++j) s += a[j] * b[j];
    return s;
}

Field spectral_derivative(const Field& f, int order) {
    if (order != 1 && order != 2)
        throw InputError("spectral_derivative: order must be 1 or 2");
    if (!f.finite())
        throw InputError("spectral_derivative: field has non-finite values");

    const int n = f.n();
    auto spec = fft_forward(f);
    if (order == 1) {
        for (int k = 0; k <= n / 2; ++k)
            spec[k] *= std::complex<double>(0.0, k);
        spec[n / 2] = 0.0;  // Nyquist carries no usable odd-derivative phase
    } else {
        for (int k = 0; k <= n / 2; ++k)
            spec[k] *= -static_cast<double>(k) * k;
    }
    return fft_backward(f.grid, std::move(spec));
}

Field band_truncate(const Field& f, int kmax) {
    auto spec = fft_forward(f);
    for (int k = kmax + 1; k <= f.n() / 2; ++k) spec[k] = 0.0;
    return fft_backward(f.grid, std::move(spec));
}

double sample_energy(const Field& f) {
    double s = 0.0;
    for (double v : f.values) s += v * v;
    return s / f.n();
}

double coefficient_energy(const Field& f) {
    const int n = f.n();
    auto spec = fft_forward(f);
    double s = std::norm(spec[0]);
    for (int k = 1; k < n / 2; ++k) s += 2.0 * std::norm(spec[k]);
    s += std::norm(spec[n / 2]);
    return s;
}

RealSpectrum real_spectrum(const Field& f) {
    const int n = f.n();
    auto spec = fft_forward(f);
    RealSpectrum out;
    out.cos_coef.assign(n / 2 + 1, 0.0);
    out.sin_coef.assign(n / 2 + 1, 0.0);
    out.cos_coef[0] = spec[0].real();
    for (int k = 1; k < n / 2; ++k) {
        out.cos_coef[k] = 2.0 * spec[k].real();
        out.sin_coef[k] = -2.0 * spec[k].imag();
    }
    out.cos_coef[n / 2] = spec[n / 2].real();
    return out;
}

Field from_real_spectrum(const Grid& g, const RealSpectrum& s) {
    const int n = g.n;
    std::vector<std::complex<double>> spec(n / 2 + 1, 0.0);
    spec[0] = s.cos_coef[0];
    for (int k = 1; k < n / 2; ++k)
        spec[k] = std::complex<double>(0.5 * s.cos_coef[k], -0.5 * s.sin_coef[k]);
    spec[n / 2] = s.cos_coef[n / 2];
    return fft_backward(g, std::move(spec));
}

Field heat_semigroup(const Field& f, double t) {
    const int n = f.n();
    auto spec = fft_forward(f);
    for (int k = 0; k <= n / 2; ++k)
        spec[k] *= std::exp(-static_cast<double>(k) * k * t);
    return fft_backward(f.grid, std::move(spec));
}

Field apply_multiplier(const Field& f, const std::function<double(int)>& symbol) {
    const int n = f.n();
    auto spec = fft_forward(f);
    for (int k = 0; k <= n / 2; ++k) spec[k] *= symbol(k);
    return fft_backward(f.grid, std::move(spec));
}

const Eigen::MatrixXd& derivative_matrix(const Grid& g, int order) {
    static std::map<std::pair<int, int>, Eigen::MatrixXd> cache;
    static std::mutex m;
    std::lock_guard<std::mutex> lock(m);
    auto key = std::make_pair(g.n, order);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;

    Eigen::MatrixXd D(g.n, g.n);
    Field e(g);
    for (int j = 0; j < g.n; ++j) {
        std::fill(e.values.begin(), e.values.end(), 0.0);
        e.values[j] = 1.0;
        Field col = spectral_derivative(e, order);
        for (int i = 0; i < g.n; ++i) D(i, j) = col[i];
    }
    return cache.emplace(key, std::move(D)).first->second;
}

const Eigen::MatrixXd& band_basis(const Grid& g, int kmax) {
    static std::map<std::pair<int, int>, Eigen::MatrixXd> cache;
    static std::mutex m;
    std::lock_guard<std::mutex> lock(m);
    auto key = std::make_pair(g.n, kmax);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;

    const int n = g.n;
    const int dim = 2 * kmax + 1;
    Eigen::MatrixXd V(n, dim);
    const double c0 = 1.0 / std::sqrt(static_cast<double>(n));
    const double ck = std::sqrt(2.0 / n);
    for (int j = 0; j < n; ++j) V(j, 0) = c0;
    for (int k = 1; k <= kmax; ++k) {
        for (int j = 0; j < n; ++j) {
            V(j, 2 * k - 1) = ck * std::cos(k * g.x(j));
            V(j, 2 * k) = ck * std::sin(k * g.x(j));
        }
    }
    return cache.emplace(key, std::move(V)).first->second;
}

Field dealiased_pointwise(const Field& u,
                          const std::function<double(double, double, double)>& op) {
    const int n = u.n();
    const int fine_n = 2 * n;
    const Grid fine(fine_n);

    // lift u and u_x to the fine grid by zero padding
    auto spec = fft_forward(u);
    std::vector<std::complex<double>> pad(fine_n / 2 + 1, 0.0);
    std::vector<std::complex<double>> padx(fine_n / 2 + 1, 0.0);
    for (int k = 0; k <= n / 2; ++k) pad[k] = spec[k];
    for (int k = 0; k < n / 2; ++k) padx[k] = spec[k] * std::complex<double>(0.0, k);
    Field uf = fft_backward(fine, std::move(pad));
    Field uxf = fft_backward(fine, std::move(padx));

    Field wf(fine);
    for (int j = 0; j < fine_n; ++j)
        wf[j] = op(fine.x(j), uf[j], uxf[j]);

    // project back: keep only the coarse grid's trusted band
    auto wspec = fft_forward(wf);
    const int keep = trusted_band(n);
    std::vector<std::complex<double>> back(n / 2 + 1, 0.0);
    for (int k = 0; k <= keep; ++k) back[k] = wspec[k];
    return fft_backward(u.grid, std::move(back));
}

// --- local trigonometric interpolation --------------------------------------

LocalInterpolant::LocalInterpolant(const Field& f) : f_(&f) {}

void LocalInterpolant::build_window(double x) const {
    const Grid& g = f_->grid;
    const int n = g.n;
    double xw = std::fmod(x, kTwoPi);
    if (xw < 0) xw += kTwoPi;
    int center = static_cast<int>(std::lround(xw / g.dx())) % n;
    if (center == center_) return;
    center_ = center;
    xc_ = g.x(center);

    // 8 samples around the query point; basis 1, cos m s, sin m s (m=1..3), cos 4s
    // in the local angle s = x - xc.
    Eigen::MatrixXd A(8, 8);
    Eigen::VectorXd rhs(8);
    for (int r = 0; r < 8; ++r) {
        int j = center - 3 + r;
        double s = (j - center) * g.dx();
        int jw = ((j % n) + n) % n;
        A(r, 0) = 1.0;
        for (int m = 1; m <= 3; ++m) {
            A(r, 2 * m - 1) = std::cos(m * s);
            A(r, 2 * m) = std::sin(m * s);
        }
        A(r, 7) = std::cos(4 * s);
        rhs(r) = f_->values[jw];
    }
    coef_ = A.colPivHouseholderQr().solve(rhs);
}

double LocalInterpolant::value(double x) const {
    build_window(x);
    double s = x - xc_;
    double v = coef_(0);
    for (int m = 1; m <= 3; ++m)
        v += coef_(2 * m - 1) * std::cos(m * s) + coef_(2 * m) * std::sin(m * s);
    v += coef_(7) * std::cos(4 * s);
    return v;
}

double LocalInterpolant::derivative(double x) const {
    build_window(x);
    double s = x - xc_;
    double v = 0.0;
    for (int m = 1; m <= 3; ++m)
        v += m * (-coef_(2 * m - 1) * std::sin(m * s) + coef_(2 * m) * std::cos(m * s));
    v += -4.0 * coef_(7) * std::sin(4 * s);
    return v;
}

} // namespace s1dyn
