#include "doctest.h"

#include <cmath>

#include "s1dyn/rng.hpp"
#include "s1dyn/semiflow.hpp"

using namespace s1dyn;

namespace {
Field random_smooth(const Grid& g, CounterRng& rng, int modes = 6, double amp = 1.0) {
    Field f(g, 0.0);
    for (int k = 0; k <= modes; ++k) {
        double a = amp * rng.next_normal() / (1.0 + k * k);
        double b = amp * rng.next_normal() / (1.0 + k * k);
        for (int j = 0; j < g.n; ++j)
            f[j] += a * std::cos(k * g.x(j)) + b * std::sin(k * g.x(j));
    }
    return f;
}
} // namespace

TEST_CASE("heat equation endpoint matches the kernel") {
    Grid g(64);
    NonlinearitySpec zero;
    FlowConfig cfg;
    cfg.dt = 1e-3;
    Field u0 = Field::sample(g, [](double x) { return std::sin(x); });
    Trajectory traj = evolve(u0, zero, 1.0, cfg);
    double err = 0;
    for (int j = 0; j < g.n; ++j)
        err = std::max(err, std::abs(traj.states.back()[j] -
                                     std::exp(-1.0) * std::sin(g.x(j))));
    CHECK(err <= 1e-6);
    CHECK(traj.t_end() == doctest::Approx(1.0));
}

TEST_CASE("logistic plateau: f = 0.5u - u^3 from u == 0.1") {
    Grid g(64);
    auto spec = NonlinearitySpec::cubic(0.5);
    FlowConfig cfg;
    cfg.dt = 1e-3;
    cfg.store_stride = 100;
    Field u0(g, 0.1);
    Trajectory traj = evolve(u0, spec, 40.0, cfg);
    const double target = std::sqrt(0.5);
    for (int j = 0; j < g.n; ++j)
        CHECK(std::abs(traj.states.back()[j] - target) <= 1e-4);
}

TEST_CASE("super-linear growth trips the blowup guard") {
    Grid g(64);
    NonlinearitySpec spec;
    Term t; t.degree = 5; t.c0 = 1.0;
    spec.terms.push_back(t);
    FlowConfig cfg;
    cfg.dt = 1e-4;
    cfg.blowup_bound = 1e6;
    Field u0(g, 2.0);
    CHECK_THROWS_AS(evolve(u0, spec, 5.0, cfg), BlowupError);
}

TEST_CASE("spatially constant data follow the scalar ODE") {
    Grid g(64);
    auto spec = NonlinearitySpec::cubic(2.5);
    FlowConfig cfg;
    cfg.dt = 1e-3;
    cfg.store_stride = 50;
    Field u0(g, 0.3);
    Trajectory traj = evolve(u0, spec, 2.0, cfg);

    // reference: RK4 on udot = 2.5u - u^3 at tiny step
    double u = 0.3;
    const double hh = 1e-5;
    auto fode = [](double v) { return 2.5 * v - v * v * v; };
    for (int k = 0; k < 200000; ++k) {
        double k1 = fode(u), k2 = fode(u + 0.5 * hh * k1);
        double k3 = fode(u + 0.5 * hh * k2), k4 = fode(u + hh * k3);
        u += hh / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    const Field& last = traj.states.back();
    double osc = 0.0;
    for (int j = 0; j < g.n; ++j) osc = std::max(osc, std::abs(last[j] - last[0]));
    CHECK(osc <= 1e-10);
    CHECK(std::abs(last[0] - u) <= 1e-6);
}

TEST_CASE("convergence order is at least 2") {
    Grid g(64);
    Field u0 = Field::sample(g, [](double x) { return 0.4 + 0.3 * std::cos(x); });

    SUBCASE("ETDRK2 Richardson ratio on a cubic flow") {
        auto spec = NonlinearitySpec::cubic(2.5);
        auto endpoint = [&](double dt) {
            FlowConfig cfg;
            cfg.dt = dt;
            cfg.store_stride = 1 << 20;
            return evolve(u0, spec, 1.0, cfg).states.back();
        };
        Field e1 = endpoint(4e-3), e2 = endpoint(2e-3), e3 = endpoint(1e-3);
        double d12 = (e1 - e2).sup_norm(), d23 = (e2 - e3).sup_norm();
        double ratio = d12 / d23;
        CHECK(ratio >= 2.0);   // order >= 2 within a factor-of-2 band
        CHECK(ratio <= 8.0);
    }
    SUBCASE("IMEX-BDF2 against the exact heat kernel") {
        NonlinearitySpec zero;
        auto err_at = [&](double dt) {
            FlowConfig cfg;
            cfg.dt = dt;
            cfg.scheme = FlowConfig::Scheme::ImexBdf2;
            cfg.store_stride = 1 << 20;
            Field uend = evolve(u0, zero, 0.5, cfg).states.back();
            double err = 0;
            for (int j = 0; j < g.n; ++j) {
                double exact = 0.4 + 0.3 * std::exp(-0.5) * std::cos(g.x(j));
                err = std::max(err, std::abs(uend[j] - exact));
            }
            return err;
        };
        double r = err_at(2e-3) / err_at(1e-3);
        CHECK(r >= 2.0);
        CHECK(r <= 8.0);
    }
}

TEST_CASE("semigroup property") {
    Grid g(64);
    auto spec = NonlinearitySpec::cubic(2.5);
    FlowConfig cfg;
    cfg.dt = 1e-3;
    cfg.store_stride = 1 << 20;
    CounterRng rng(5, 2);
    Field u0 = random_smooth(g, rng);
    Field one_shot = evolve(u0, spec, 1.5, cfg).states.back();
    Field first = evolve(u0, spec, 0.7, cfg).states.back();
    Field two_shot = evolve(first, spec, 0.8, cfg).states.back();
    CHECK((one_shot - two_shot).sup_norm() <= 1e-6);
}

TEST_CASE("tangent flow at an equilibrium matches the exponential rate") {
    Grid g(64);
    auto spec = NonlinearitySpec::cubic(0.5);
    FlowConfig cfg;
    cfg.dt = 1e-3;
    Field e0(g, 0.0);
    Trajectory base = evolve(e0, spec, 2.0, cfg);
    Field v0(g, 1.0);
    Field v = tangent_evolve(base, v0, 0.0, 2.0);
    const double expected = std::exp(0.5 * 2.0);
    for (int j = 0; j < g.n; ++j)
        CHECK(std::abs(v[j] - expected) / expected <= 1e-6);
}

TEST_CASE("tangent of zero stays zero") {
    Grid g(64);
    auto spec = NonlinearitySpec::cubic(2.5);
    FlowConfig cfg;
    cfg.dt = 1e-3;
    Field u0(g, 0.2);
    Trajectory base = evolve(u0, spec, 1.0, cfg);
    Field v = tangent_evolve(base, Field(g, 0.0), 0.0, 1.0);
    CHECK(v.sup_norm() == 0.0);
}

TEST_CASE("time derivative of the base is a tangent solution") {
    Grid g(64);
    auto spec = NonlinearitySpec::cubic(0.5);
    FlowConfig cfg;
    cfg.dt = 1e-3;
    Field u0(g, 0.05);  // heteroclinic from 0 toward sqrt(0.5)
    Trajectory base = evolve(u0, spec, 8.0, cfg);

    // u_t at t0/t1 via centered differences of the stored states
    auto udot = [&](double t) {
        double h = 5 * cfg.dt;
        Field a = base.at_time(t - h), b = base.at_time(t + h);
        Field out(g);
        for (int j = 0; j < g.n; ++j) out[j] = (b[j] - a[j]) / (2 * h);
        return out;
    };
    double t0 = 1.0, t1 = 6.0;
    Field v = tangent_evolve(base, udot(t0), t0, t1);
    Field expect = udot(t1);
    CHECK((v - expect).sup_norm() <= 1e-5 * std::max(1.0, expect.sup_norm() * 10));
}

TEST_CASE("adjoint equals tangent for a self-adjoint linearization") {
    Grid g(64);
    auto spec = NonlinearitySpec::cubic(0.5);  // no u_x dependence
    FlowConfig cfg;
    cfg.dt = 1e-3;
    Field e(g, std::sqrt(0.5));
    Trajectory base = evolve(e, spec, 1.0, cfg);
    CounterRng rng(9, 3);
    Field psi = random_smooth(g, rng);
    Field fwd = tangent_evolve(base, psi, 0.0, 1.0);
    Field adj = adjoint_evolve(base, psi, 1.0, 0.0);
    CHECK((fwd - adj).sup_norm() <= 1e-10 * std::max(1.0, fwd.sup_norm()));
}

TEST_CASE("tangent/adjoint duality identity") {
    Grid g(64);
    NonlinearitySpec spec = NonlinearitySpec::cubic_drift(2.5, 0.7);  // non-self-adjoint
    FlowConfig cfg;
    cfg.dt = 1e-3;
    CounterRng rng(13, 4);
    Field u0 = random_smooth(g, rng, 4, 0.4);
    Trajectory base = evolve(u0, spec, 0.8, cfg);
    Field v0 = random_smooth(g, rng);
    Field psi1 = random_smooth(g, rng);
    double lhs = dot(tangent_evolve(base, v0, 0.0, 0.8), psi1);
    double rhs = dot(v0, adjoint_evolve(base, psi1, 0.8, 0.0));
    CHECK(std::abs(lhs - rhs) <= 1e-8 * std::max({std::abs(lhs), std::abs(rhs), 1.0}));
}

TEST_CASE("adjoint of zero is zero") {
    Grid g(64);
    auto spec = NonlinearitySpec::cubic(0.5);
    FlowConfig cfg;
    cfg.dt = 1e-3;
    Field u0(g, 0.1);
    Trajectory base = evolve(u0, spec, 1.0, cfg);
    Field psi = adjoint_evolve(base, Field(g, 0.0), 1.0, 0.0);
    CHECK(psi.sup_norm() == 0.0);
}

TEST_CASE("time-tau map fixes equilibria") {
    Grid g(64);
    auto spec = NonlinearitySpec::cubic(0.5);
    FlowConfig cfg;
    cfg.dt = 1e-3;
    Field e(g, std::sqrt(0.5));
    Field out = time_tau_map(e, spec, 1.0, cfg);
    CHECK((out - e).sup_norm() <= 1e-8);
}

TEST_CASE("time-tau map reproduces the heat kernel on cos(2x)") {
    Grid g(64);
    NonlinearitySpec zero;
    FlowConfig cfg;
    cfg.dt = 1e-3;
    Field u0 = Field::sample(g, [](double x) { return std::cos(2 * x); });
    Field out = time_tau_map(u0, zero, 0.25, cfg);
    double err = 0;
    for (int j = 0; j < g.n; ++j)
        err = std::max(err, std::abs(out[j] - std::exp(-1.0) * std::cos(2 * g.x(j))));
    CHECK(err <= 1e-9);
}

TEST_CASE("time-tau derivative") {
    Grid g(64);
    auto spec = NonlinearitySpec::cubic(0.5);
    FlowConfig cfg;
    cfg.dt = 1e-3;

    SUBCASE("matches a directional finite difference") {
        CounterRng rng(17, 5);
        Field u0 = random_smooth(g, rng, 4, 0.3);
        Field v0 = random_smooth(g, rng, 4, 1.0);
        double tau = 0.5, h = 1e-6;
        Field up = u0, um = u0;
        for (int j = 0; j < g.n; ++j) { up[j] += h * v0[j]; um[j] -= h * v0[j]; }
        Field gp = time_tau_map(up, spec, tau, cfg);
        Field gm = time_tau_map(um, spec, tau, cfg);
        Field fd(g);
        for (int j = 0; j < g.n; ++j) fd[j] = (gp[j] - gm[j]) / (2 * h);
        Field dv = time_tau_derivative(u0, v0, spec, tau, cfg);
        CHECK((dv - fd).sup_norm() <= 1e-4 * std::max(1.0, fd.sup_norm()));
    }
    SUBCASE("diagonalizes on sin(x) at the origin") {
        Field e0(g, 0.0);
        Field v0 = Field::sample(g, [](double x) { return std::sin(x); });
        double tau = 0.7;
        Field dv = time_tau_derivative(e0, v0, spec, tau, cfg);
        const double mu = std::exp((0.5 - 1.0) * tau);
        double err = 0;
        for (int j = 0; j < g.n; ++j)
            err = std::max(err, std::abs(dv[j] - mu * std::sin(g.x(j))));
        CHECK(err <= 1e-6);
    }
    SUBCASE("zero direction maps to zero") {
        Field u0(g, 0.2);
        Field dv = time_tau_derivative(u0, Field(g, 0.0), spec, 0.5, cfg);
        CHECK(dv.sup_norm() == 0.0);
    }
}

TEST_CASE("stored steps satisfy the one-step residual check") {
    Grid g(64);
    auto spec = NonlinearitySpec::cubic(2.5);
    FlowConfig cfg;
    cfg.dt = 1e-3;
    cfg.store_stride = 10;
    CounterRng rng(23, 6);
    Field u0 = random_smooth(g, rng, 4, 0.5);
    Trajectory traj = evolve(u0, spec, 0.2, cfg);
    for (int i : {0, 5, traj.size() - 2})
        CHECK(traj.step_residual(i) <= 1e-6);
}
