#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bsdelab/errors.hpp"
#include "bsdelab/mild_solver.hpp"

using namespace bsdelab;

namespace {

std::shared_ptr<const Semigroup> ou1(std::size_t n = 20) {
    SemigroupSpec s;
    s.lambdas = {-1.0};
    s.noise = {1.0};
    auto sp = std::make_shared<TruncatedSpace>(build_space(1, {0.5}, n));
    return std::make_shared<Semigroup>(s, sp);
}

double rel_l2(const TruncatedSpace& sp, const SpaceTimeField& u,
              const std::function<double(double, double)>& exact) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < u.times.size(); ++i)
        for (std::size_t x = 0; x < u.nodes; ++x) {
            const double e = exact(u.times[i], sp.node(x)[0]);
            const double d = u.values[i * u.nodes + x] - e;
            num += sp.weights()[x] * d * d;
            den += sp.weights()[x] * e * e;
        }
    return std::sqrt(num / den);
}

double max_abs(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t q = 0; q < a.size(); ++q) m = std::max(m, std::abs(a[q] - b[q]));
    return m;
}

Driver source(double value) { return linear_driver(1, 0.0, value); }

Driver square_driver() {
    Driver f;
    f.name = "square";
    f.eval = [](double, std::span<const double>, std::span<const double> y, std::span<const double>,
                std::span<double> out) { out[0] = y[0] * y[0]; };
    return f;
}

}  // namespace

TEST_CASE("linear solve matches the mean closed form", "[mild]") {
    const auto sg = ou1();
    const auto p = make_problem(sg, terminal_preset("identity", 1), source(0.0), 1.0, 64);
    const auto u = solve_linear(p);
    REQUIRE(u.times.size() == 65);
    CHECK(rel_l2(sg->space(), u, [](double t, double x) { return std::exp(-(1.0 - t)) * x; }) <= 1e-6);
}

TEST_CASE("linear solve trivial cases", "[mild]") {
    const auto sg = ou1();
    const auto c = solve_linear(make_problem(sg, terminal_preset("constant", 1, 2.5), source(0.0), 1.0, 16));
    for (double v : c.values) CHECK(std::abs(v - 2.5) <= 1e-12);
    const auto s = solve_linear(make_problem(sg, terminal_preset("constant", 1, 0.0), source(1.0), 1.0, 16));
    for (std::size_t i = 0; i < s.times.size(); ++i)
        for (std::size_t x = 0; x < s.nodes; ++x) CHECK(std::abs(s.values[i * s.nodes + x] - (1.0 - s.times[i])) <= 1e-12);
    CHECK_THROWS_AS(solve_linear(make_problem(sg, terminal_preset("identity", 1), linear_driver(1, 1.0), 1.0, 16)),
                    PreconditionError);
}

TEST_CASE("zero horizon returns the terminal condition", "[mild]") {
    const auto sg = ou1();
    const auto p = make_problem(sg, terminal_preset("tanh", 1), sin_z_driver(1, 1.0, 0.5), 0.0, 16);
    const auto [u, rep] = picard_lipschitz(p);
    REQUIRE(u.times.size() == 1);
    CHECK(u.values == p.terminal_values.values);
    CHECK(solve_linear(make_problem(sg, terminal_preset("tanh", 1), source(1.0), 0.0, 16)).values ==
          p.terminal_values.values);
}

TEST_CASE("problem validation", "[mild]") {
    const auto sg = ou1();
    CHECK_THROWS_AS(make_problem(sg, terminal_preset("identity", 1), source(0.0), 1.0, 1), ConfigError);
    CHECK_THROWS_AS(make_problem(sg, terminal_preset("identity", 1), linear_driver(2, 1.0), 1.0, 8), ConfigError);
    CHECK_THROWS_AS(make_problem(sg, terminal_preset("identity", 1), source(0.0), -1.0, 8), ConfigError);
}

TEST_CASE("picard on a linear decay driver", "[mild]") {
    const auto sg = ou1();
    const auto p = make_problem(sg, terminal_preset("identity", 1), linear_driver(1, 1.0), 1.0, 64);
    const auto [u, rep] = picard_lipschitz(p);
    CHECK(rep.converged);
    CHECK(rel_l2(sg->space(), u, [](double t, double x) { return std::exp(-2.0 * (1.0 - t)) * x; }) <= 1e-5);
}

TEST_CASE("picard with a source-only driver equals the linear solve", "[mild]") {
    const auto sg = ou1();
    Driver f = source(0.0);
    f.eval = [](double t, std::span<const double> x, std::span<const double>, std::span<const double>,
                std::span<double> out) { out[0] = std::cos(x[0]) * (1.0 + t); };
    f.f0_bound = 2.0;
    const auto p = make_problem(sg, terminal_preset("tanh", 1), f, 1.0, 32);
    const auto [u, rep] = picard_lipschitz(p);
    CHECK(rep.iterations == 1);
    CHECK(max_abs(u.values, solve_linear(p).values) == 0.0);
}

TEST_CASE("picard contraction and a priori bound", "[mild]") {
    const auto sg = ou1();
    const auto p = make_problem(sg, terminal_preset("tanh", 1), sin_z_driver(1, 1.0, 0.5), 1.0, 64);
    const auto [u, rep] = picard_lipschitz(p);
    REQUIRE(rep.converged);
    CHECK(rep.windows.size() > 1);
    for (const auto& w : rep.windows) {
        REQUIRE(w.contraction_bound < 1.0);
        for (double r : w.ratios) CHECK(r <= w.contraction_bound);
    }
    CHECK(rep.energy_slack >= 0.0);

    // C = 1, T = 1, alpha = 0: bound e^4 (||phi||^2 + int ||f0||^2)
    const auto q = make_problem(sg, terminal_preset("tanh", 1), sin_z_driver(1, 1.0, 1.0), 1.0, 32);
    const auto [v, rq] = picard_lipschitz(q);
    CHECK(rq.alpha == 0.0);
    CHECK(std::abs(rq.energy_bound - std::exp(4.0) * q.space().norm_sq(q.terminal_values)) <= 1e-12 * rq.energy_bound);
    CHECK(rq.energy_lhs <= rq.energy_bound);
}

TEST_CASE("picard fixed point does not depend on the initial guess", "[mild]") {
    const auto sg = ou1();
    const auto p = make_problem(sg, terminal_preset("tanh", 1), sin_z_driver(1, 0.5, 0.5), 1.0, 32);
    PicardSettings a;
    a.tol = 1e-12;
    const auto [u1, r1] = picard_lipschitz(p, a);
    PicardSettings b = a;
    SpaceTimeField guess(p.times(), p.space().size(), 1);
    for (std::size_t q = 0; q < guess.values.size(); ++q) guess.values[q] = 3.0 * std::sin(double(q));
    b.initial = guess;
    const auto [u2, r2] = picard_lipschitz(p, b);
    SpaceTimeField d = u1;
    for (std::size_t q = 0; q < d.values.size(); ++q) d.values[q] -= u2.values[q];
    CHECK(t_norm(p.space(), p.semigroup->diffusion(), d) <= 1e-10);
}

TEST_CASE("picard refuses drivers without a y-Lipschitz constant", "[mild]") {
    const auto sg = ou1();
    const auto p = make_problem(sg, terminal_preset("tanh", 1), cubic_monotone_driver(1), 1.0, 16);
    CHECK_THROWS_AS(picard_lipschitz(p), PreconditionError);
    PicardSettings s;
    s.max_iter = 1;
    s.y_radius = 2.0;
    try {
        (void)picard_lipschitz(p, s);
        FAIL("expected a convergence error");
    } catch (const ConvergenceError& e) {
        CHECK(e.report().iterations == 1);
        CHECK(e.report().errors.size() == 1);
    }
}

TEST_CASE("gauge transform", "[mild]") {
    const auto sg = ou1();
    const double m = 0.7;
    const auto p = make_problem(sg, terminal_preset("tanh", 1), cubic_monotone_driver(1, m), 1.0, 32);
    const auto g = gauge_transform(p);
    for (std::size_t x = 0; x < p.space().size(); ++x)
        CHECK(std::abs(g.problem.terminal_values.values[x] - std::exp(m) * p.terminal_values.values[x]) <= 1e-14);
    CHECK(g.problem.driver.mono_rate(0.3) == 0.0);

    // round trip restores the data
    const auto r = g.restore();
    CHECK(max_abs(r.terminal_values.values, p.terminal_values.values) <= 1e-12);
    for (double t : {0.0, 0.4, 1.0})
        for (double y : {-2.0, -0.3, 0.0, 1.5}) {
            const double x[1] = {0.2}, yy[1] = {y}, z[1] = {0.1};
            double a[1], b[1];
            p.driver.eval(t, x, yy, z, a);
            r.driver.eval(t, x, yy, z, b);
            CHECK(std::abs(a[0] - b[0]) <= 1e-12 * std::max(1.0, std::abs(a[0])));
        }
    CHECK(r.driver.mono_rate(0.5) == m);

    // zero rate: identity
    const auto p0 = make_problem(sg, terminal_preset("tanh", 1), cubic_monotone_driver(1), 1.0, 32);
    const auto g0 = gauge_transform(p0);
    CHECK(g0.problem.terminal_values.values == p0.terminal_values.values);
    const double x[1] = {0.2}, yy[1] = {0.9}, z[1] = {0.0};
    double a[1], b[1];
    p0.driver.eval(0.5, x, yy, z, a);
    g0.problem.driver.eval(0.5, x, yy, z, b);
    CHECK(a[0] == b[0]);
}

TEST_CASE("gauge equivariance of the Picard solve", "[mild]") {
    const auto sg = ou1();
    const auto p = make_problem(sg, terminal_preset("tanh", 1), cubic_monotone_driver(1, 0.5), 1.0, 32);
    PicardSettings s;
    s.tol = 1e-13;
    s.y_radius = 3.0;
    const auto [direct, r1] = picard_lipschitz(p, s);
    const auto g = gauge_transform(p);
    s.y_radius = 3.0 * std::exp(0.5);
    const auto [star, r2] = picard_lipschitz(g.problem, s);
    SpaceTimeField d = g.invert(star);
    for (std::size_t q = 0; q < d.values.size(); ++q) d.values[q] -= direct.values[q];
    CHECK(t_norm(p.space(), p.semigroup->diffusion(), d) <= 1e-8);
}

TEST_CASE("mollified drivers", "[mild]") {
    const auto eval = [](const Driver& f, double y) {
        const double x[1] = {0.0}, yy[1] = {y}, z[1] = {0.0};
        double o[1];
        f.eval(0.0, x, yy, z, o);
        return o[0];
    };
    const Driver c = mollify_driver(source(1.75), 3.0);
    CHECK(std::abs(eval(c, 0.4) - 1.75) <= 1e-14);
    const Driver lin = mollify_driver(linear_driver(1, -2.5), 2.0);
    for (double y : {-3.0, 0.0, 0.7}) CHECK(std::abs(eval(lin, y) - 2.5 * y) <= 1e-10);
    Driver absd;
    absd.eval = [](double, std::span<const double>, std::span<const double> y, std::span<const double>,
                   std::span<double> out) { out[0] = std::abs(y[0]); };
    absd.lipschitz_y = 1.0;
    double prev = 1e300;
    for (double n : {1.0, 2.0, 4.0, 8.0, 16.0}) {
        const double v = eval(mollify_driver(absd, n), 0.0);
        CHECK(v > 0.0);
        CHECK(v < prev);
        prev = v;
    }
    CHECK(prev < 0.05);
    CHECK_THROWS_AS(mollify_driver(absd, 0.5), PreconditionError);

    // Lipschitz bound n sup|f| (gradient mass) of the smoothed driver
    Driver wave;
    wave.eval = [](double, std::span<const double>, std::span<const double> y, std::span<const double>,
                   std::span<double> out) { out[0] = std::sin(3.0 * y[0]); };
    wave.lipschitz_y = 3.0;
    for (double n : {1.0, 2.0}) {
        const double est = estimate_lipschitz_y(mollify_driver(wave, n), 2.0, 20000);
        CHECK(est > 0.0);
        CHECK(est <= std::min(3.0, n * 1.0 * mollifier_gradient_mass(1)));
    }
}

TEST_CASE("truncated drivers", "[mild]") {
    const double z[2] = {3.0, 4.0};
    double q[2];
    clamp_gradient(z, 2.0, q);
    CHECK(std::abs(q[0] - 1.2) <= 1e-15);
    CHECK(std::abs(q[1] - 1.6) <= 1e-15);
    clamp_gradient(z, 5.0, q);
    CHECK((q[0] == 3.0 && q[1] == 4.0));

    const Driver f = table_driver(2, {0.0, 0.0, -1.0}, {1.0, 0.5}, 0.25);
    const double r = 2.0, n = 32.0;
    const Driver h = truncate_driver(f, r, n);
    const double x[2] = {0.1, -0.3};
    double a[1], b[1];
    for (double y : {3.0, 3.5, -4.0}) {
        const double yy[1] = {y};
        h.eval(0.0, x, yy, z, a);
        CHECK(a[0] == 0.25);
    }
    // inside the ball with an inactive clamp and growth below n: unchanged
    const double small[2] = {0.3, -0.2}, y0[1] = {1.5};
    h.eval(0.0, x, y0, small, a);
    f.eval(0.0, x, y0, small, b);
    CHECK(std::abs(a[0] - b[0]) <= 1e-14);
    // bound (1 + C) n + ||f0||
    const double big[2] = {50.0, -80.0};
    for (double y : {-2.9, -1.0, 0.5, 2.2}) {
        const double yy[1] = {y};
        h.eval(0.0, x, yy, big, a);
        CHECK(std::abs(a[0]) <= (1.0 + f.lipschitz_z) * n + 0.25);
    }
    CHECK(cutoff(r, 1.9) == 1.0);
    CHECK(cutoff(r, 3.0) == 0.0);
    CHECK((cutoff(r, 2.5) > 0.0 && cutoff(r, 2.5) < 1.0));
    CHECK_THROWS_AS(truncate_driver(f, 0.5, n), PreconditionError);
}

TEST_CASE("driver validation", "[mild]") {
    const auto cubic = validate_driver(cubic_monotone_driver(1), 4000);
    CHECK(cubic.worst_dissipativity_margin <= 0.0);
    CHECK_FALSE(cubic.dissipativity_violation);
    CHECK_FALSE(cubic.monotonicity_violation);

    const auto s = validate_driver(sin_z_driver(1, 0.0, 1.0), 4000);
    CHECK(s.lipschitz_z_estimate <= 1.0);
    CHECK(s.lipschitz_z_estimate > 0.999);
    CHECK_FALSE(s.lipschitz_violation);

    const auto sq = validate_driver(square_driver(), 4000);
    CHECK(sq.monotonicity_violation);
    CHECK(sq.worst_monotonicity_margin > 0.0);

    Driver liar = sin_z_driver(1, 0.0, 1.0);
    liar.lipschitz_z = 0.5;
    CHECK(validate_driver(liar, 4000).lipschitz_violation);
    Driver f0 = source(3.0);
    f0.f0_bound = 1.0;
    CHECK(validate_driver(f0, 100).f0_violation);
    const auto g = validate_driver(cubic_monotone_driver(1), 100).growth;
    REQUIRE(g.size() == 3);
    CHECK(g[2].value == 64.0);
}

TEST_CASE("relation audit on the mean closed form", "[mild][relations]") {
    const auto sg = ou1();
    std::vector<double> energy, pointwise;
    for (std::size_t N : {32, 64}) {
        const auto p = make_problem(sg, terminal_preset("identity", 1), source(0.0), 1.0, N);
        const auto u = solve_linear(p);
        const auto rep = relation_audit(p, u);
        const double dt = 1.0 / double(N);
        for (double s : rep.energy_slack) CHECK(s >= -5 * dt);
        for (double r : rep.pointwise_residual) CHECK(r <= 5 * dt);
        CHECK(rep.worst_weak_residual <= 5 * dt);
        CHECK(rep.worst_modulus_slack >= -5 * dt);
        CHECK(rep.worst_product_slack >= -5 * dt);
        CHECK(rep.worst_positive_part_slack >= -5 * dt);
        CHECK(rep.violations.empty());
        energy.push_back(std::abs(rep.worst_energy_slack));
        pointwise.push_back(rep.worst_pointwise_residual);
    }
    CHECK(energy[0] >= 1.5 * energy[1]);
    CHECK(pointwise[0] >= 1.5 * pointwise[1]);
}

TEST_CASE("relation audit on zero data is exact", "[mild][relations]") {
    const auto sg = ou1();
    const auto p = make_problem(sg, terminal_preset("constant", 1, 0.0), source(0.0), 1.0, 16);
    const auto rep = relation_audit(p, solve_linear(p));
    for (double v : rep.energy_slack) CHECK(v == 0.0);
    for (double v : rep.pointwise_residual) CHECK(v == 0.0);
    for (double v : rep.weak_residual) CHECK(v == 0.0);
    for (double v : rep.modulus_slack) CHECK(v == 0.0);
    for (double v : rep.product_slack) CHECK(v == 0.0);
    CHECK(rep.min_value == 0.0);
}

TEST_CASE("maximum principle for nonnegative data", "[mild][relations]") {
    const auto sg = ou1();
    const auto p = make_problem(sg, terminal_preset("gaussian", 1), source(1.0), 1.0, 64);
    const auto u = solve_linear(p);
    const auto rep = relation_audit(p, u);
    CHECK(rep.nonnegative_data);
    CHECK(rep.min_value >= -1e-10);
}

TEST_CASE("a perturbed solution breaks the pointwise identity", "[mild][relations]") {
    const auto sg = ou1();
    const auto p = make_problem(sg, terminal_preset("tanh", 1), sin_z_driver(1, 1.0, 0.5), 1.0, 32);
    auto [u, rep] = picard_lipschitz(p);
    const double base = relation_audit(p, u).worst_pointwise_residual;
    for (std::size_t x = 0; x < u.nodes; ++x) u.values[10 * u.nodes + x] += 0.5 * p.space().node(x)[0];
    CHECK(relation_audit(p, u).worst_pointwise_residual > 5.0 * base);
}

TEST_CASE("comparison of linear solutions", "[mild][relations]") {
    const auto sg = ou1();
    const auto lo = solve_linear(make_problem(sg, terminal_preset("tanh", 1), source(-0.5), 1.0, 32));
    Driver up = source(0.0);
    up.eval = [](double, std::span<const double> x, std::span<const double>, std::span<const double>,
                 std::span<double> out) { out[0] = -0.5 + 0.3 * x[0] * x[0]; };
    auto phi = terminal_preset("tanh", 1);
    const auto inner = phi.fn;
    phi.fn = [inner](std::span<const double> x, std::span<double> out) {
        inner(x, out);
        out[0] += 0.1;
    };
    const auto hi = solve_linear(make_problem(sg, phi, up, 1.0, 32));
    for (std::size_t q = 0; q < lo.values.size(); ++q) CHECK(lo.values[q] <= hi.values[q] + 1e-10);
}

TEST_CASE("dispatching solver gauges nonzero rates", "[mild]") {
    const auto sg = ou1();
    const auto p = make_problem(sg, terminal_preset("identity", 1), linear_driver(1, 1.0), 1.0, 64);
    const auto [u, rep] = solve(p);
    CHECK(rep.method == "picard");
    CHECK(rel_l2(sg->space(), u, [](double t, double x) { return std::exp(-2.0 * (1.0 - t)) * x; }) <= 1e-5);
    const auto [v, rv] = solve(make_problem(sg, terminal_preset("tanh", 1), source(1.0), 1.0, 16));
    CHECK(rv.method == "linear");
}
