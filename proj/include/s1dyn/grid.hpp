#pragma once
#include <vector>
#include <complex>
#include <functional>
#include <Eigen/Dense>

#include "s1dyn/errors.hpp"

namespace s1dyn {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

// Periodic spatial grid on [0, 2pi), x_j = 2pi*j/n. No duplicated endpoint.
struct Grid {
    int n = 0;

    Grid() = default;
    explicit Grid(int n_points) : n(n_points) {
        if (n < 8 || n % 2 != 0)
            throw InputError("Grid: n_points must be even and >= 8, got " + std::to_string(n));
    }

    double x(int j) const { return kTwoPi * j / n; }
    double dx() const { return kTwoPi / n; }
    bool operator==(const Grid& o) const { return n == o.n; }
};

// Real-valued function sampled on a periodic grid.
struct Field {
    Grid grid;
    std::vector<double> values;

    Field() = default;
    explicit Field(const Grid& g, double fill = 0.0) : grid(g), values(g.n, fill) {}
    Field(const Grid& g, std::vector<double> v) : grid(g), values(std::move(v)) {
        if (static_cast<int>(values.size()) != g.n)
            throw InputError("Field: value count does not match grid");
    }

    static Field sample(const Grid& g, const std::function<double(double)>& f) {
        Field out(g);
        for (int j = 0; j < g.n; ++j) out.values[j] = f(g.x(j));
        return out;
    }

    int n() const { return grid.n; }
    double& operator[](int j) { return values[j]; }
    double operator[](int j) const { return values[j]; }

    double sup_norm() const;
    double l2_norm() const;  // discrete L2: sqrt(sum v^2 * dx)
    bool finite() const;

    Field& operator+=(const Field& o);
    Field& operator-=(const Field& o);
    Field& operator*=(double a);
};

Field operator+(Field a, const Field& b);
Field operator-(Field a, const Field& b);
Field operator*(double a, Field f);

// L2(S^1) inner product (grid quadrature, exact for band-limited integrands).
double inner_l2(const Field& a, const Field& b);

// Plain R^n dot product of the sample vectors.
double dot(const Field& a, const Field& b);

// --- spectral engine -------------------------------------------------------

// Fourier-collocation derivative; exact on trigonometric polynomials the grid
// resolves. order 1 zeroes the Nyquist mode, order 2 keeps it.
Field spectral_derivative(const Field& f, int order);

// Zero all modes with wavenumber k > kmax.
Field band_truncate(const Field& f, int kmax);

// Dealiased trusted band for an n-point grid (2/3 rule).
inline int trusted_band(int n) { return n / 3; }

// Energy of the sample values and of the Fourier coefficients; Parseval says
// they agree.
double sample_energy(const Field& f);
double coefficient_energy(const Field& f);

// Real spectrum access: a[k], b[k] with f = a0 + sum a_k cos kx + b_k sin kx.
struct RealSpectrum {
    std::vector<double> cos_coef;  // index k = 0..n/2
    std::vector<double> sin_coef;  // index k = 0..n/2 (k=0 and Nyquist entries are 0)
};
RealSpectrum real_spectrum(const Field& f);
Field from_real_spectrum(const Grid& g, const RealSpectrum& s);

// Evaluate a field and its derivative at arbitrary x by local trigonometric
// interpolation through the 8 nearest samples.
struct LocalInterpolant {
    explicit LocalInterpolant(const Field& f);
    double value(double x) const;
    double derivative(double x) const;

private:
    void build_window(double x) const;
    const Field* f_;
    mutable int center_ = -1;               // cached window center index
    mutable Eigen::VectorXd coef_;          // fitted trig coefficients
    mutable double xc_ = 0.0;               // window center angle
};

// Apply exp(t * d^2/dx^2) exactly in Fourier space (heat semigroup).
Field heat_semigroup(const Field& f, double t);

// Generic Fourier multiplier: out_hat[k] = m(k) * f_hat[k], m real symbol.
Field apply_multiplier(const Field& f, const std::function<double(int)>& symbol);

// Dense matrix of the order-1/order-2 spectral derivative on an n-point grid.
// Cached per (n, order); consistent with spectral_derivative by construction.
const Eigen::MatrixXd& derivative_matrix(const Grid& g, int order);

// Orthonormal basis (columns) of the trusted band |k| <= kmax as grid vectors:
// constant, cos kx, sin kx, normalized in the R^n dot product.
const Eigen::MatrixXd& band_basis(const Grid& g, int kmax);

// Zero-padded pointwise evaluation: lift u (and u_x) to a 2n-point grid,
// apply op(x, u, u_x) pointwise there, project the result back onto the
// trusted band of the coarse grid. Alias-free for products up to degree 5
// of band-limited inputs.
Field dealiased_pointwise(const Field& u,
                          const std::function<double(double, double, double)>& op);

} // namespace s1dyn
