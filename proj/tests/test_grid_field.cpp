#include "doctest.h"

#include <cmath>

#include "s1dyn/grid.hpp"
#include "s1dyn/nonlinearity.hpp"
#include "s1dyn/rng.hpp"

using namespace s1dyn;

TEST_CASE("grid invariants") {
    CHECK_THROWS_AS(Grid(6), InputError);
    CHECK_THROWS_AS(Grid(9), InputError);
    Grid g(64);
    CHECK(g.x(0) == 0.0);
    CHECK(g.x(32) == doctest::Approx(kTwoPi / 2));
}

TEST_CASE("spectral derivative of sin(x) is cos(x)") {
    Grid g(64);
    Field f = Field::sample(g, [](double x) { return std::sin(x); });
    Field d = spectral_derivative(f, 1);
    double err = 0;
    for (int j = 0; j < g.n; ++j)
        err = std::max(err, std::abs(d[j] - std::cos(g.x(j))));
    CHECK(err <= 1e-12);
}

TEST_CASE("second derivative of a constant is zero") {
    Grid g(64);
    Field f(g, 3.0);
    Field d = spectral_derivative(f, 2);
    CHECK(d.sup_norm() <= 1e-13);
    Field d1 = spectral_derivative(f, 1);
    CHECK(d1.sup_norm() <= 1e-13);
}

TEST_CASE("derivative of sin(20x) at n=64") {
    Grid g(64);
    Field f = Field::sample(g, [](double x) { return std::sin(20 * x); });
    Field d = spectral_derivative(f, 1);
    double err = 0;
    for (int j = 0; j < g.n; ++j)
        err = std::max(err, std::abs(d[j] - 20.0 * std::cos(20 * g.x(j))));
    CHECK(err <= 1e-10);
}

TEST_CASE("derivative rejects non-finite input") {
    Grid g(64);
    Field f(g, 1.0);
    f[3] = std::nan("");
    CHECK_THROWS_AS(spectral_derivative(f, 1), InputError);
}

TEST_CASE("Parseval consistency") {
    Grid g(128);
    CounterRng rng(7, 0);
    Field f(g);
    for (int j = 0; j < g.n; ++j) f[j] = rng.next_normal();
    double es = sample_energy(f), ec = coefficient_energy(f);
    CHECK(std::abs(es - ec) <= 1e-12 * std::max(es, 1.0));
}

TEST_CASE("derivative linearity") {
    Grid g(64);
    CounterRng rng(11, 0);
    Field f(g), h(g);
    for (int j = 0; j < g.n; ++j) { f[j] = rng.next_normal(); h[j] = rng.next_normal(); }
    double a = 1.7, b = -0.4;
    Field lhs = spectral_derivative(a * f + b * h, 1);
    Field rhs = a * spectral_derivative(f, 1) + b * spectral_derivative(h, 1);
    CHECK((lhs - rhs).sup_norm() <= 1e-12 * (1.0 + lhs.sup_norm()));
}

TEST_CASE("nonlinearity evaluation examples") {
    Grid g(64);

    SUBCASE("f = 0.5u - u^3 on u == 1 gives -0.5") {
        auto spec = NonlinearitySpec::cubic(0.5);
        Field u(g, 1.0);
        Field out = eval_nonlinearity(spec, u);
        for (int j = 0; j < g.n; ++j) CHECK(out[j] == doctest::Approx(-0.5).epsilon(1e-12));
    }
    SUBCASE("f = c p with c=1 maps sin to cos") {
        NonlinearitySpec spec;
        Term t; t.kind = Term::Kind::Advect; t.c = 1.0;
        spec.terms.push_back(t);
        Field u = Field::sample(g, [](double x) { return std::sin(x); });
        Field out = eval_nonlinearity(spec, u);
        double err = 0;
        for (int j = 0; j < g.n; ++j)
            err = std::max(err, std::abs(out[j] - std::cos(g.x(j))));
        CHECK(err <= 1e-12);
    }
    SUBCASE("bump vanishes outside its support") {
        NonlinearitySpec spec;
        Term t; t.kind = Term::Kind::Bump;
        t.amp = 1.0; t.wx = 0.5; t.wu = 0.5; t.wp = 0.5;
        spec.terms.push_back(t);
        Field u(g, 10.0);
        Field out = eval_nonlinearity(spec, u);
        CHECK(out.sup_norm() == 0.0);
    }
}

TEST_CASE("analytic partials match central differences") {
    NonlinearitySpec spec = NonlinearitySpec::cubic_cosx(2.5, 0.3);
    Term bump; bump.kind = Term::Kind::Bump;
    bump.amp = 0.8; bump.x0 = 1.0; bump.u0 = 0.2; bump.p0 = -0.1;
    bump.wx = 0.7; bump.wu = 0.9; bump.wp = 1.1;
    spec.terms.push_back(bump);
    Term adv; adv.kind = Term::Kind::Advect; adv.c = 0.4;
    spec.terms.push_back(adv);

    CounterRng rng(3, 1);
    const double h = 1e-5;
    for (int i = 0; i < 100; ++i) {
        double x = rng.uniform(0, kTwoPi);
        double u = rng.uniform(-2, 2);
        double p = rng.uniform(-2, 2);
        double du_fd = (spec.eval(x, u + h, p) - spec.eval(x, u - h, p)) / (2 * h);
        double dp_fd = (spec.eval(x, u, p + h) - spec.eval(x, u, p - h)) / (2 * h);
        CHECK(std::abs(spec.d_u(x, u, p) - du_fd) <= 1e-6);
        CHECK(std::abs(spec.d_p(x, u, p) - dp_fd) <= 1e-6);
    }
}

TEST_CASE("dissipativity verdicts") {
    SUBCASE("f = -u^3 is dissipative") {
        NonlinearitySpec spec;
        Term t; t.degree = 3; t.c0 = -1.0;
        spec.terms.push_back(t);
        auto rep = check_dissipativity(spec, 1.0, 10.0);
        CHECK(rep.dissipative());
        CHECK(rep.worst_value == doctest::Approx(-1.0).epsilon(1e-9));
    }
    SUBCASE("f = +u^3 violates at u = kappa") {
        NonlinearitySpec spec;
        Term t; t.degree = 3; t.c0 = 1.0;
        spec.terms.push_back(t);
        auto rep = check_dissipativity(spec, 1.0, 10.0);
        CHECK_FALSE(rep.dissipative());
        CHECK(std::abs(rep.violation_u) == doctest::Approx(1.0));
        CHECK(rep.violation_value == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(rep.worst_value == doctest::Approx(1e4).epsilon(1e-9));
    }
    SUBCASE("f = 2.5u - u^3 dissipative beyond sqrt(2.5)") {
        auto spec = NonlinearitySpec::cubic(2.5);
        auto rep = check_dissipativity(spec, 2.0, 10.0);
        CHECK(rep.dissipative());
        // max of 2.5 u^2 - u^4 over |u| in [2,10] sits at u = 2
        CHECK(rep.worst_value == doctest::Approx(2.5 * 4 - 16).epsilon(1e-9));
    }
    SUBCASE("growth bound check") {
        auto spec = NonlinearitySpec::cubic(0.5);
        auto rep = check_dissipativity(spec, 1.0, 2.0, /*kR=*/20.0, /*eps=*/0.5);
        CHECK(rep.growth_ok);  // |f| <= 6 on the sampled box, bound >= 20
    }
}

TEST_CASE("spec serialization round-trips bit-exactly") {
    NonlinearitySpec spec = NonlinearitySpec::cubic_cosx(0.1 + 0.2, 1.0 / 3.0);
    Term bump; bump.kind = Term::Kind::Bump;
    bump.amp = std::sqrt(2.0); bump.x0 = kTwoPi / 7; bump.u0 = -0.1;
    bump.p0 = 1e-17; bump.wx = 0.3; bump.wu = 0.123456789012345678;
    bump.wp = 2.0;
    spec.terms.push_back(bump);
    Term adv; adv.kind = Term::Kind::Advect; adv.c = -1.0 / 7.0;
    spec.terms.push_back(adv);

    std::string text = format_spec(spec);
    NonlinearitySpec back = parse_spec(text);
    REQUIRE(back.terms.size() == spec.terms.size());
    CHECK(format_spec(back) == text);  // bit-exact round trip
    for (size_t i = 0; i < spec.terms.size(); ++i) {
        CHECK(back.terms[i].kind == spec.terms[i].kind);
        CHECK(back.terms[i].c0 == spec.terms[i].c0);
        CHECK(back.terms[i].ccos == spec.terms[i].ccos);
        CHECK(back.terms[i].wu == spec.terms[i].wu);
        CHECK(back.terms[i].p0 == spec.terms[i].p0);
    }
}

TEST_CASE("local interpolant reproduces band-limited fields") {
    Grid g(64);
    Field f = Field::sample(g, [](double x) { return std::sin(x) + 0.5 * std::sin(2 * x); });
    LocalInterpolant interp(f);
    for (double x : {0.1, 1.0, 2.5, 3.14159, 5.9}) {
        double exact = std::sin(x) + 0.5 * std::sin(2 * x);
        double dexact = std::cos(x) + std::cos(2 * x);
        CHECK(std::abs(interp.value(x) - exact) <= 1e-8);
        CHECK(std::abs(interp.derivative(x) - dexact) <= 1e-6);
    }
}
