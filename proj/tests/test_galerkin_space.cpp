#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bsdelab/errors.hpp"
#include "bsdelab/galerkin_space.hpp"

using namespace bsdelab;
using Catch::Approx;

TEST_CASE("build_space sizes and normalization", "[space]") {
    const auto s1 = build_space(1, {0.5}, 20);
    CHECK(s1.size() == 20);
    double total = 0.0;
    for (double w : s1.weights()) total += w;
    CHECK(std::abs(total - 1.0) <= 1e-12);
    CHECK(build_space(2, {0.5, 0.5}, 10).size() == 100);
    const auto x2 = s1.sample([](std::span<const double> x) { return x[0] * x[0]; });
    CHECK(std::abs(s1.integrate(x2.values) - 0.5) <= 1e-10);
}

TEST_CASE("build_space rejects bad parameters", "[space]") {
    CHECK_THROWS_AS(build_space(1, {0.0}, 10), ConfigError);
    CHECK_THROWS_AS(build_space(1, {-1.0}, 10), ConfigError);
    CHECK_THROWS_AS(build_space(1, {1.0}, 1), ConfigError);
    CHECK_THROWS_AS(build_space(4, {1, 1, 1, 1}, 4), ConfigError);
    CHECK_THROWS_AS(build_space(2, {1.0}, 4), ConfigError);
}

TEST_CASE("tensor quadrature moments", "[space]") {
    const auto s = build_space(2, {0.5, 2.0}, 8);
    // E[x^4 y^6] = 3 (0.5)^2 * 15 (2)^3
    const auto f = s.sample([](std::span<const double> x) { return std::pow(x[0], 4) * std::pow(x[1], 6); });
    const double exact = 3 * 0.25 * 15 * 8;
    CHECK(std::abs(s.integrate(f.values) - exact) <= 1e-10 * exact);
}

TEST_CASE("gradient on polynomials", "[space]") {
    const auto s = build_space(1, {0.5}, 20);
    auto g = s.gradient(s.sample([](std::span<const double> x) { return x[0]; }));
    for (double v : g.values) CHECK(std::abs(v - 1.0) <= 1e-8);
    g = s.gradient(s.sample([](std::span<const double>) { return 3.0; }));
    for (double v : g.values) CHECK(std::abs(v) <= 1e-8);
    g = s.gradient(s.sample([](std::span<const double> x) { return x[0] * x[0]; }));
    double worst = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) worst = std::max(worst, std::abs(g.values[i] - 2 * s.node(i)[0]));
    CHECK(worst <= 1e-8);

    const auto s2 = build_space(2, {0.5, 1.0}, 6);
    GridField u = s2.sample(2, [](std::span<const double> x, std::span<double> out) {
        out[0] = x[0] * x[1] * x[1];
        out[1] = x[1];
    });
    const auto g2 = s2.gradient(u);
    for (std::size_t i = 0; i < s2.size(); ++i) {
        const auto x = s2.node(i);
        CHECK(g2.values[(i * 2 + 0) * 2 + 0] == Approx(x[1] * x[1]).margin(1e-10));
        CHECK(g2.values[(i * 2 + 0) * 2 + 1] == Approx(2 * x[0] * x[1]).margin(1e-10));
        CHECK(g2.values[(i * 2 + 1) * 2 + 0] == Approx(0.0).margin(1e-10));
        CHECK(g2.values[(i * 2 + 1) * 2 + 1] == Approx(1.0).margin(1e-10));
    }
    CHECK_THROWS_AS(s.gradient(GridField(7, 1)), ShapeError);
}

TEST_CASE("energy form values and symmetry", "[space]") {
    const auto s = build_space(1, {0.5}, 20);
    const auto A = DiffusionCoefficient::constant_diagonal({0.5});
    const auto x = s.sample([](std::span<const double> p) { return p[0]; });
    const auto x2 = s.sample([](std::span<const double> p) { return p[0] * p[0]; });
    const auto one = s.sample([](std::span<const double>) { return 1.0; });
    CHECK(energy_form(s, A, x, x) == Approx(0.5).epsilon(1e-12));
    CHECK(std::abs(energy_form(s, A, one, one)) <= 1e-12);
    CHECK(std::abs(energy_form(s, A, x2, x)) <= 1e-12);

    const auto s2 = build_space(2, {0.7, 1.3}, 7);
    DiffusionCoefficient B;
    B.dim = 2;
    B.c = 0.2;
    B.C1 = 3.0;
    B.eval = [](std::span<const double> p, std::span<double> a) {
        const double off = 0.3 * std::sin(p[0] + p[1]);
        a[0] = 1.0 + 0.5 * std::cos(p[0]);
        a[1] = off;
        a[2] = off;
        a[3] = 1.5;
    };
    const auto u = s2.sample([](std::span<const double> p) { return std::sin(p[0]) * p[1] + p[1] * p[1]; });
    const auto v = s2.sample([](std::span<const double> p) { return std::exp(-p[0] * p[0]) + p[0] * p[1]; });
    CHECK(energy_form(s2, B, u, v) == energy_form(s2, B, v, u));
    const double euu = energy_form(s2, B, u, u);
    CHECK(euu >= 0.0);
    const auto g = s2.gradient(u);
    double grad_sq = 0.0;
    for (std::size_t i = 0; i < s2.size(); ++i)
        grad_sq += s2.weights()[i] * (g.values[2 * i] * g.values[2 * i] + g.values[2 * i + 1] * g.values[2 * i + 1]);
    CHECK(B.c * grad_sq <= euu);
    CHECK(euu <= B.C1 * grad_sq);
}

TEST_CASE("bilinear form drift term", "[space]") {
    const auto s = build_space(1, {0.5}, 20);
    const auto A = DiffusionCoefficient::constant_diagonal({0.5});
    const auto x = s.sample([](std::span<const double> p) { return p[0]; });
    const auto one = s.sample([](std::span<const double>) { return 1.0; });
    CHECK(bilinear_form(s, A, DriftField::zero(1), x, x) == energy_form(s, A, x, x));
    DriftField b;
    b.dim = 1;
    b.eval = [](std::span<const double> p, std::span<double> out) { out[0] = p[0]; };
    CHECK(std::abs(bilinear_form(s, A, b, x, one)) <= 1e-12);
    // energy 0.5 plus drift term 0.5 E[x^2] = 0.25
    CHECK(bilinear_form(s, A, b, x, x) == Approx(0.75).epsilon(1e-12));
}

TEST_CASE("bilinear form against positive part", "[space]") {
    // symmetric OU coefficients: A = 1/2, b = 0 relative to the invariant law
    const auto s = build_space(1, {0.5}, 24);
    const auto A = DiffusionCoefficient::constant_diagonal({0.5});
    for (double shift : {-0.5, 0.0, 0.3}) {
        const auto u = s.sample([shift](std::span<const double> p) { return std::tanh(2 * p[0]) + shift; });
        const auto up = s.sample([shift](std::span<const double> p) { return std::max(0.0, std::tanh(2 * p[0]) + shift); });
        (void)up;
        // u+ is not smooth; test on the smooth surrogate u * sigmoid(k u)
        const auto surrogate = s.sample([shift](std::span<const double> p) {
            const double v = std::tanh(2 * p[0]) + shift;
            return v / (1.0 + std::exp(-8.0 * v));
        });
        CHECK(bilinear_form(s, A, DriftField::zero(1), u, surrogate) >= -1e-10);
    }
}

TEST_CASE("drift sector margins", "[space]") {
    const auto s = build_space(1, {0.5}, 24);
    const auto A = DiffusionCoefficient::constant_diagonal({0.5});
    const auto bump = s.sample([](std::span<const double> p) { return std::exp(-p[0] * p[0]); });
    const auto one = s.sample([](std::span<const double>) { return 1.0; });
    auto rep = check_drift_sector(s, A, DriftField::zero(1), 0.7, {bump, one});
    CHECK(rep.margins[0] >= 0.0);
    CHECK(rep.margins[1] == Approx(0.7).epsilon(1e-12));
    CHECK_FALSE(rep.violated);

    DriftField b;
    b.dim = 1;
    b.eval = [](std::span<const double> p, std::span<double> out) { out[0] = -2 * p[0]; };
    rep = check_drift_sector(s, A, b, 0.0, {bump});
    // independent quadrature with the analytic derivative of u^2 = exp(-2x^2)
    double oracle = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double x = s.node(i)[0];
        oracle += s.weights()[i] * 0.5 * (-2 * x) * (-4 * x * std::exp(-2 * x * x));
    }
    // the grid version differentiates the interpolant of u^2
    CHECK(rep.margins[0] > 0.0);
    CHECK(rep.margins[0] == Approx(oracle).epsilon(1e-4));

    CHECK_THROWS_AS(check_drift_sector(s, A, b, 0.0, {s.sample([](std::span<const double> p) { return p[0]; })}),
                    PreconditionError);
}

TEST_CASE("t_norm examples", "[space]") {
    const auto s = build_space(1, {0.5}, 20);
    const auto A = DiffusionCoefficient::constant_diagonal({0.5});
    SpaceTimeField u(uniform_times(1.0, 16), s.size(), 1);
    CHECK(t_norm(s, A, u) == 0.0);
    for (std::size_t i = 0; i <= 16; ++i) u.set(i, s.sample([](std::span<const double>) { return 1.0; }));
    CHECK(t_norm(s, A, u) == Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 0; i <= 16; ++i) u.set(i, s.sample([](std::span<const double> p) { return p[0]; }));
    CHECK(t_norm(s, A, u) == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("degenerate or asymmetric diffusion rejected", "[space]") {
    const auto s = build_space(2, {1.0, 1.0}, 4);
    CHECK_THROWS_AS(evaluate_on_grid(s, DiffusionCoefficient::constant_diagonal({0.0, 1.0})), ConfigError);
    DiffusionCoefficient B;
    B.dim = 2;
    B.c = 0.1;
    B.C1 = 2;
    B.eval = [](std::span<const double>, std::span<double> a) {
        a[0] = 1;
        a[1] = 0.1;
        a[2] = 0.2;
        a[3] = 1;
    };
    CHECK_THROWS_AS(evaluate_on_grid(s, B), ConfigError);
}
