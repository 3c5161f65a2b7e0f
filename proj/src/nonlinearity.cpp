#include "s1dyn/nonlinearity.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace s1dyn {

namespace {

// mass of exp(-1/(1-s^2)) on (-1,1), computed once by Simpson quadrature
double raw_bump_mass() {
    static const double mass = [] {
        const int m = 20000;
        const double h = 2.0 / m;
        double s = 0.0;
        auto raw = [](double t) {
            double d = 1.0 - t * t;
            return d > 0.0 ? std::exp(-1.0 / d) : 0.0;
        };
        for (int i = 0; i < m; ++i) {
            double a = -1.0 + i * h;
            s += (raw(a) + 4.0 * raw(a + 0.5 * h) + raw(a + h)) * h / 6.0;
        }
        return s;
    }();
    return mass;
}

double wrap_to_pi(double s) {
    s = std::fmod(s, kTwoPi);
    if (s > kTwoPi / 2) s -= kTwoPi;
    if (s < -kTwoPi / 2) s += kTwoPi;
    return s;
}

} // namespace

double bump_beta(double s) {
    double d = 1.0 - s * s;
    if (d <= 0.0) return 0.0;
    return std::exp(-1.0 / d) / raw_bump_mass();
}

double bump_beta_prime(double s) {
    double d = 1.0 - s * s;
    if (d <= 0.0) return 0.0;
    return std::exp(-1.0 / d) * (-2.0 * s / (d * d)) / raw_bump_mass();
}

static double poly_coef(const Term& t, double x) {
    double c = t.c0;
    if (t.harmonic != 0 || t.ccos != 0.0 || t.csin != 0.0)
        c += t.ccos * std::cos(t.harmonic * x) + t.csin * std::sin(t.harmonic * x);
    return c;
}

double NonlinearitySpec::eval(double x, double u, double p) const {
    double f = 0.0;
    for (const Term& t : terms) {
        switch (t.kind) {
            case Term::Kind::Poly:
                f += poly_coef(t, x) * std::pow(u, t.degree);
                break;
            case Term::Kind::Advect:
                f += t.c * p;
                break;
            case Term::Kind::Bump:
                f += t.amp * bump_beta(wrap_to_pi(x - t.x0) / t.wx) *
                     bump_beta((u - t.u0) / t.wu) * bump_beta((p - t.p0) / t.wp);
                break;
        }
    }
    return f;
}

double NonlinearitySpec::d_u(double x, double u, double p) const {
    double f = 0.0;
    for (const Term& t : terms) {
        switch (t.kind) {
            case Term::Kind::Poly:
                if (t.degree >= 1)
                    f += poly_coef(t, x) * t.degree * std::pow(u, t.degree - 1);
                break;
            case Term::Kind::Advect:
                break;
            case Term::Kind::Bump:
                f += t.amp * bump_beta(wrap_to_pi(x - t.x0) / t.wx) *
                     bump_beta_prime((u - t.u0) / t.wu) / t.wu *
                     bump_beta((p - t.p0) / t.wp);
                break;
        }
    }
    return f;
}

double NonlinearitySpec::d_p(double x, double u, double p) const {
    double f = 0.0;
    for (const Term& t : terms) {
        switch (t.kind) {
            case Term::Kind::Poly:
                break;
            case Term::Kind::Advect:
                f += t.c;
                break;
            case Term::Kind::Bump:
                f += t.amp * bump_beta(wrap_to_pi(x - t.x0) / t.wx) *
                     bump_beta((u - t.u0) / t.wu) *
                     bump_beta_prime((p - t.p0) / t.wp) / t.wp;
                break;
        }
    }
    return f;
}

bool NonlinearitySpec::has_nonlinear_term() const {
    for (const Term& t : terms) {
        if (t.kind == Term::Kind::Bump) return true;
        if (t.kind == Term::Kind::Poly &&
            (t.degree >= 2 || (t.degree >= 1 && (t.ccos != 0.0 || t.csin != 0.0))))
            return true;
    }
    return false;
}

bool NonlinearitySpec::x_dependent() const {
    for (const Term& t : terms) {
        if (t.kind == Term::Kind::Bump) return true;
        if (t.kind == Term::Kind::Poly && (t.ccos != 0.0 || t.csin != 0.0)) return true;
    }
    return false;
}

double NonlinearitySpec::advection_coefficient() const {
    double c = 0.0;
    for (const Term& t : terms)
        if (t.kind == Term::Kind::Advect) c += t.c;
    return c;
}

NonlinearitySpec NonlinearitySpec::without_advection() const {
    NonlinearitySpec out;
    for (const Term& t : terms)
        if (t.kind != Term::Kind::Advect) out.terms.push_back(t);
    return out;
}

NonlinearitySpec NonlinearitySpec::poly1(double lambda) {
    NonlinearitySpec s;
    Term t;
    t.kind = Term::Kind::Poly;
    t.degree = 1;
    t.c0 = lambda;
    s.terms.push_back(t);
    return s;
}

NonlinearitySpec NonlinearitySpec::cubic(double lambda) {
    NonlinearitySpec s = poly1(lambda);
    Term t;
    t.kind = Term::Kind::Poly;
    t.degree = 3;
    t.c0 = -1.0;
    s.terms.push_back(t);
    return s;
}

NonlinearitySpec NonlinearitySpec::cubic_drift(double lambda, double c) {
    NonlinearitySpec s = cubic(lambda);
    Term t;
    t.kind = Term::Kind::Advect;
    t.c = c;
    s.terms.push_back(t);
    return s;
}

NonlinearitySpec NonlinearitySpec::cubic_cosx(double lambda, double a) {
    NonlinearitySpec s = cubic(lambda);
    Term t;
    t.kind = Term::Kind::Poly;
    t.degree = 1;
    t.ccos = a;
    t.harmonic = 1;
    s.terms.push_back(t);
    return s;
}

Field eval_nonlinearity(const NonlinearitySpec& spec, const Field& u) {
    if (!u.finite()) throw InputError("eval_nonlinearity: non-finite field");
    Field ux = spectral_derivative(u, 1);
    Field out(u.grid);
    for (int j = 0; j < u.n(); ++j)
        out[j] = spec.eval(u.grid.x(j), u[j], ux[j]);
    return out;
}

void linearization_coefficients(const NonlinearitySpec& spec, const Field& u,
                                Field& b_out, Field& a_out) {
    Field ux = spectral_derivative(u, 1);
    b_out = Field(u.grid);
    a_out = Field(u.grid);
    for (int j = 0; j < u.n(); ++j) {
        double x = u.grid.x(j);
        b_out[j] = spec.d_u(x, u[j], ux[j]);
        a_out[j] = spec.d_p(x, u[j], ux[j]);
    }
}

DissipativityReport check_dissipativity(const NonlinearitySpec& spec,
                                        double kappa, double R,
                                        double kR, double eps,
                                        double xi_max, int samples) {
    if (kappa <= 0.0 || R <= kappa)
        throw InputError("check_dissipativity: need 0 < kappa < R");

    DissipativityReport rep;
    rep.worst_value = -std::numeric_limits<double>::infinity();
    const int nx = 64;
    for (int s = 0; s < samples; ++s) {
        double mag = kappa + (R - kappa) * s / (samples - 1);
        for (int i = 0; i < nx; ++i) {
            double x = kTwoPi * i / nx;
            for (double u : {mag, -mag}) {
                double v = u * spec.eval(x, u, 0.0);
                if (v > rep.worst_value) {
                    rep.worst_value = v;
                    rep.worst_x = x;
                    rep.worst_u = u;
                }
                if (v > 0.0 && !rep.has_violation) {  // smallest |u| first
                    rep.has_violation = true;
                    rep.violation_u = u;
                    rep.violation_x = x;
                    rep.violation_value = v;
                }
            }
        }
    }
    rep.sign_ok = rep.worst_value <= 0.0;

    if (kR > 0.0) {
        rep.worst_growth_ratio = 0.0;
        for (int i = 0; i < nx; ++i) {
            double x = kTwoPi * i / nx;
            for (int s = 0; s < samples; ++s) {
                double u = -R + 2.0 * R * s / (samples - 1);
                for (int q = 0; q < samples; ++q) {
                    double xi = -xi_max + 2.0 * xi_max * q / (samples - 1);
                    double bound = kR * (1.0 + std::pow(std::abs(xi), 2.0 - eps));
                    double ratio = std::abs(spec.eval(x, u, xi)) / bound;
                    rep.worst_growth_ratio = std::max(rep.worst_growth_ratio, ratio);
                }
            }
        }
        rep.growth_ok = rep.worst_growth_ratio <= 1.0;
    }
    return rep;
}

// --- serialization -----------------------------------------------------------

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc())
        throw InputError("cannot parse number: '" + s + "'");
    return v;
}

std::string format_spec(const NonlinearitySpec& spec) {
    std::ostringstream os;
    for (const Term& t : spec.terms) {
        switch (t.kind) {
            case Term::Kind::Poly:
                os << "poly degree=" << t.degree << " c0=" << format_double(t.c0)
                   << " ccos=" << format_double(t.ccos)
                   << " csin=" << format_double(t.csin)
                   << " harmonic=" << t.harmonic << "\n";
                break;
            case Term::Kind::Advect:
                os << "advect c=" << format_double(t.c) << "\n";
                break;
            case Term::Kind::Bump:
                os << "bump amp=" << format_double(t.amp)
                   << " x0=" << format_double(t.x0) << " u0=" << format_double(t.u0)
                   << " p0=" << format_double(t.p0) << " wx=" << format_double(t.wx)
                   << " wu=" << format_double(t.wu) << " wp=" << format_double(t.wp)
                   << "\n";
                break;
        }
    }
    return os.str();
}

static void assign_kv(Term& t, const std::string& key, const std::string& val) {
    if (key == "degree") t.degree = static_cast<int>(parse_double(val));
    else if (key == "c0") t.c0 = parse_double(val);
    else if (key == "ccos") t.ccos = parse_double(val);
    else if (key == "csin") t.csin = parse_double(val);
    else if (key == "harmonic") t.harmonic = static_cast<int>(parse_double(val));
    else if (key == "c") t.c = parse_double(val);
    else if (key == "amp") t.amp = parse_double(val);
    else if (key == "x0") t.x0 = parse_double(val);
    else if (key == "u0") t.u0 = parse_double(val);
    else if (key == "p0") t.p0 = parse_double(val);
    else if (key == "wx") t.wx = parse_double(val);
    else if (key == "wu") t.wu = parse_double(val);
    else if (key == "wp") t.wp = parse_double(val);
    else throw InputError("unknown term key: '" + key + "'");
}

NonlinearitySpec parse_spec(const std::string& text) {
    NonlinearitySpec spec;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string head;
        if (!(ls >> head) || head[0] == '#') continue;
        Term t;
        if (head == "poly") t.kind = Term::Kind::Poly;
        else if (head == "advect") t.kind = Term::Kind::Advect;
        else if (head == "bump") t.kind = Term::Kind::Bump;
        else throw InputError("unknown term kind: '" + head + "'");
        std::string kv;
        while (ls >> kv) {
            auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw InputError("expected key=value, got '" + kv + "'");
            assign_kv(t, kv.substr(0, eq), kv.substr(eq + 1));
        }
        spec.terms.push_back(t);
    }
    return spec;
}

} // namespace s1dyn
