#pragma once
#include <optional>
#include <string>
#include <vector>

#include "s1dyn/grid.hpp"

namespace s1dyn {

// One primitive term of f(x, u, p), p standing for u_x.
//
//   poly:   (c0 + ccos*cos(harmonic*x) + csin*sin(harmonic*x)) * u^degree
//   advect: c * p
//   bump:   amp * beta((x-x0)/wx) * beta((u-u0)/wu) * beta((p-p0)/wp)
//
// beta is the C-infinity bump exp(-1/(1-s^2)) on |s|<1, scaled to unit mass;
// the x argument is wrapped to the circle.
struct Term {
    enum class Kind { Poly, Advect, Bump };
    Kind kind = Kind::Poly;

    // poly
    int degree = 1;
    double c0 = 0.0, ccos = 0.0, csin = 0.0;
    int harmonic = 0;

    // advect
    double c = 0.0;

    // bump
    double amp = 0.0;
    double x0 = 0.0, u0 = 0.0, p0 = 0.0;
    double wx = 1.0, wu = 1.0, wp = 1.0;
};

struct NonlinearitySpec {
    std::vector<Term> terms;

    double eval(double x, double u, double p) const;
    double d_u(double x, double u, double p) const;
    double d_p(double x, double u, double p) const;

    bool has_nonlinear_term() const;   // degree >= 2, bump, or x-dependent coefficient
    bool x_dependent() const;
    double advection_coefficient() const;        // sum of advect c's
    NonlinearitySpec without_advection() const;  // drift-free part

    // convenience builders
    static NonlinearitySpec poly1(double lambda);               // lambda*u
    static NonlinearitySpec cubic(double lambda);               // lambda*u - u^3
    static NonlinearitySpec cubic_drift(double lambda, double c);  // + c*u_x
    static NonlinearitySpec cubic_cosx(double lambda, double a);   // + a*cos(x)*u
};

// unit-mass bump profile and its derivative
double bump_beta(double s);
double bump_beta_prime(double s);

// Pointwise f(x_j, u(x_j), u_x(x_j)); u_x is the spectral derivative. Not
// dealiased (integration uses the padded path instead).
Field eval_nonlinearity(const NonlinearitySpec& spec, const Field& u);

// Coefficient fields of the linearization along a state u:
//   b(x) = D_u f(x, u, u_x),  a(x) = D_p f(x, u, u_x).
void linearization_coefficients(const NonlinearitySpec& spec, const Field& u,
                                Field& b_out, Field& a_out);

// Sign and growth checks for the dissipativity condition.
struct DissipativityReport {
    bool sign_ok = false;       // u f(x,u,0) <= 0 on sampled |u| in [kappa, R]
    double worst_value = 0.0;   // max of u f(x,u,0)
    double worst_x = 0.0, worst_u = 0.0;
    // violating sample with the smallest |u| (the meaningful witness: the
    // condition must hold from kappa outward)
    bool has_violation = false;
    double violation_u = 0.0, violation_x = 0.0, violation_value = 0.0;
    bool growth_ok = false;     // |f(x,u,xi)| <= kR (1+|xi|^{2-eps}) sampled
    double worst_growth_ratio = 0.0;
    bool dissipative() const { return sign_ok; }
};

DissipativityReport check_dissipativity(const NonlinearitySpec& spec,
                                        double kappa, double R,
                                        double kR = 0.0, double eps = 0.5,
                                        double xi_max = 10.0,
                                        int samples = 200);

// Structured-text serialization; doubles use shortest round-trip formatting so
// parse(format(s)) is bit-exact.
std::string format_spec(const NonlinearitySpec& spec);
NonlinearitySpec parse_spec(const std::string& text);

// shortest round-trip double formatting (shared by all text exports)
std::string format_double(double v);
double parse_double(const std::string& s);

} // namespace s1dyn
