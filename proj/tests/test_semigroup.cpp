#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bsdelab/errors.hpp"
#include "bsdelab/parallel.hpp"
#include "bsdelab/semigroup.hpp"

using namespace bsdelab;

namespace {

SemigroupSpec ou1(double lambda = -1.0, double c = 1.0) {
    SemigroupSpec s;
    s.lambdas = {lambda};
    s.noise = {c};
    return s;
}

std::shared_ptr<const TruncatedSpace> space1(std::size_t n = 20) {
    return std::make_shared<TruncatedSpace>(build_space(1, {0.5}, n));
}

double max_abs_diff(const GridField& a, const GridField& b) {
    double m = 0.0;
    for (std::size_t q = 0; q < a.values.size(); ++q) m = std::max(m, std::abs(a.values[q] - b.values[q]));
    return m;
}

}  // namespace

TEST_CASE("ou apply closed forms", "[semigroup]") {
    const auto sp = space1();
    const Semigroup sg(ou1(), sp);
    const auto x = sp->sample([](std::span<const double> p) { return p[0]; });
    const auto x2 = sp->sample([](std::span<const double> p) { return p[0] * p[0]; });
    const auto one = sp->sample([](std::span<const double>) { return 1.0; });
    for (double t : {0.1, 0.5, 1.0, 3.0}) {
        const auto px = sg.apply(t, x);
        const auto px2 = sg.apply(t, x2);
        const auto p1 = sg.apply(t, one);
        for (std::size_t i = 0; i < sp->size(); ++i) {
            const double xi = sp->node(i)[0];
            CHECK(std::abs(px.values[i] - std::exp(-t) * xi) <= 1e-10 * std::max(1.0, std::abs(xi)));
            const double e2 = std::exp(-2 * t) * xi * xi + (1 - std::exp(-2 * t)) / 2;
            CHECK(std::abs(px2.values[i] - e2) <= 1e-8 * e2);
            CHECK(std::abs(p1.values[i] - 1.0) <= 1e-12);
        }
    }
    CHECK(sg.apply(0.0, x2).values == x2.values);
    CHECK_THROWS_AS(sg.apply(-0.1, x), DomainError);
}

TEST_CASE("ou apply in two dimensions with mismatched reference variance", "[semigroup]") {
    auto sp = std::make_shared<TruncatedSpace>(build_space(2, {0.5, 1.0}, 10));
    SemigroupSpec s;
    s.lambdas = {-1.0, -0.5};
    s.noise = {1.0, 0.6};
    const Semigroup sg(s, sp);
    const auto f = sp->sample([](std::span<const double> p) { return p[0] * p[1] + p[1] * p[1]; });
    const auto pf = sg.apply(0.7, f);
    for (std::size_t i = 0; i < sp->size(); ++i) {
        const auto x = sp->node(i);
        const double m0 = std::exp(-0.7) * x[0], m1 = std::exp(-0.35) * x[1];
        const double exact = m0 * m1 + m1 * m1 + s.q(1, 0.7);
        CHECK(std::abs(pf.values[i] - exact) <= 1e-9 * std::max(1.0, std::abs(exact)));
    }
}

TEST_CASE("ou linearity, symmetry, invariance, positivity", "[semigroup]") {
    const auto sp = space1(24);
    const Semigroup sg(ou1(), sp);
    const auto f = sp->sample([](std::span<const double> p) { return std::exp(-p[0] * p[0]); });
    const auto g = sp->sample([](std::span<const double> p) { return std::tanh(p[0]) + 0.2 * p[0] * p[0]; });
    GridField comb(f.nodes, 1);
    for (std::size_t i = 0; i < f.nodes; ++i) comb.values[i] = 2.0 * f.values[i] - 3.0 * g.values[i];
    const double t = 0.4;
    const auto pf = sg.apply(t, f), pg = sg.apply(t, g), pc = sg.apply(t, comb);
    for (std::size_t i = 0; i < f.nodes; ++i)
        CHECK(std::abs(pc.values[i] - (2.0 * pf.values[i] - 3.0 * pg.values[i])) <= 1e-12 * 10);
    CHECK(std::abs(sp->inner(pf, g) - sp->inner(f, pg)) <= 1e-8);

    const auto rep = audit_semigroup(sg, {1.0 / 64, 0.05, 0.5, 2.0},
                              {[](std::span<const double> p) { return std::exp(-p[0] * p[0]); },
                               [](std::span<const double> p) { return 1.0 + std::cos(p[0]); },
                               [](std::span<const double> p) { return std::tanh(p[0]); }});
    CHECK(rep.worst_min >= -1e-10);
    CHECK(rep.worst_contraction <= 1.0 + 1e-10);
    CHECK(rep.worst_invariance_gap <= 1e-8);

    // monotonicity on smooth ordered fields
    GridField h(f.nodes, 1);
    for (std::size_t i = 0; i < f.nodes; ++i) h.values[i] = f.values[i] + 0.1 / (1.0 + sp->node(i)[0] * sp->node(i)[0]);
    const auto ph = sg.apply(t, h);
    for (std::size_t i = 0; i < f.nodes; ++i) CHECK(pf.values[i] <= ph.values[i] + 1e-10);
}

TEST_CASE("function route agrees with interpolant route on polynomials", "[semigroup]") {
    const auto sp = std::make_shared<TruncatedSpace>(build_space(2, {0.5, 0.5}, 8));
    SemigroupSpec s;
    s.lambdas = {-1.0, -1.0};
    s.noise = {1.0, 1.0};
    const Semigroup sg(s, sp);
    const PointMap poly = [](std::span<const double> x, std::span<double> out) {
        out[0] = x[0] * x[0] * x[1] + x[1];
        out[1] = 1.0 - x[0];
    };
    const auto grid = sp->sample(2, poly);
    for (double t : {0.0, 0.3}) {
        const auto a = sg.apply_function(t, 2, poly).mean;
        const auto b = sg.apply(t, grid);
        CHECK(max_abs_diff(a, b) <= 1e-12);
    }
    const auto lags = sg.apply_function_lags(0.1, 3, 2, poly);
    CHECK(max_abs_diff(lags[2], sg.apply(0.2, grid)) <= 1e-12);
}

TEST_CASE("ou composition", "[semigroup]") {
    const auto sp = space1();
    const Semigroup sg(ou1(), sp);
    const auto f = sp->sample([](std::span<const double> p) { return std::cos(p[0]) + p[0] * p[0] * p[0]; });
    CHECK(semigroup_composition_residual(sg, 0.0, 0.3, f).residual == 0.0);
    CHECK(semigroup_composition_residual(sg, 0.5, 0.5, f).residual <= 1e-8);
}

TEST_CASE("ou lag operators match direct operators", "[semigroup]") {
    const auto sp = space1(12);
    const Semigroup sg(ou1(), sp);
    const auto f = sp->sample([](std::span<const double> p) { return std::sin(p[0]); });
    const auto lags = sg.lag_operators(0.125, 8);
    CHECK(max_abs_diff(lags[3].apply(*sp, f), sg.apply(0.375, f)) <= 1e-14);
    CHECK(max_abs_diff(lags[0].apply(*sp, f), f) == 0.0);
}

TEST_CASE("mc euler semigroup", "[semigroup]") {
    const auto sp = space1(12);
    auto spec = ou1();
    spec.kind = SemigroupKind::mc_euler;
    spec.steps = 200;
    spec.paths = 20000;
    spec.seed = 7;
    const Semigroup mc(spec, sp);
    const Semigroup ou(ou1(), sp);
    const auto f = sp->sample([](std::span<const double> p) { return std::exp(-p[0] * p[0]); });
    const auto est = mc.apply_with_se(0.5, f);
    const auto exact = ou.apply(0.5, f);
    for (std::size_t i = 0; i < sp->size(); ++i) {
        // Euler bias at h = 1/200 is far below the statistical error
        CHECK(std::abs(est.mean.values[i] - exact.values[i]) <= 4 * est.se.values[i] + 2e-3);
    }
    const auto comp = semigroup_composition_residual(mc, 0.25, 0.25, f);
    CHECK(comp.residual <= 3 * comp.se);

    spec.perturbation = DriftPerturbation::named("dissipative_cubic", 1);
    const Semigroup pert(spec, sp);
    const auto one = sp->sample([](std::span<const double>) { return 1.0; });
    const auto p1 = pert.apply(0.3, one);
    for (double v : p1.values) CHECK(std::abs(v - 1.0) <= 1e-10);
    CHECK(pert.drift().sector_alpha == Catch::Approx(1.125));
}

TEST_CASE("mc results do not depend on worker count", "[semigroup]") {
    const auto sp = space1(8);
    auto spec = ou1();
    spec.kind = SemigroupKind::mc_euler;
    spec.perturbation = DriftPerturbation::named("dissipative_cubic", 1);
    spec.paths = 2000;
    const Semigroup mc(spec, sp);
    const auto f = sp->sample([](std::span<const double> p) { return std::tanh(p[0]); });
    set_worker_count(1);
    const auto a = mc.apply_with_se(0.4, f);
    set_worker_count(4);
    const auto b = mc.apply_with_se(0.4, f);
    set_worker_count(1);
    CHECK(a.mean.values == b.mean.values);
    CHECK(a.se.values == b.se.values);
}

TEST_CASE("semigroup spec validation", "[semigroup]") {
    const auto sp = space1(8);
    CHECK_THROWS_AS(Semigroup(ou1(0.5), sp), ConfigError);
    CHECK_THROWS_AS(Semigroup(ou1(-1.0, 0.0), sp), ConfigError);
    auto spec = ou1();
    spec.kind = SemigroupKind::mc_euler;
    spec.perturbation.name = "expanding";
    spec.perturbation.eval = [](std::span<const double> x, std::span<double> out) { out[0] = x[0]; };
    CHECK_THROWS_AS(Semigroup(spec, sp), ConfigError);
    CHECK_THROWS_AS(DriftPerturbation::named("nope", 1), ConfigError);
}

TEST_CASE("generator coefficients", "[semigroup]") {
    const auto sp = space1(8);
    const Semigroup sg(ou1(), sp);
    const auto b = sg.drift();
    CHECK(b.sector_alpha == 0.0);
    double out[1];
    const double x[1] = {1.7};
    b.eval(x, out);
    CHECK(out[0] == 0.0);
    const auto A = sg.diffusion();
    CHECK(A.c == 0.5);
    // reference variance larger than invariant: drift pulls inward, finite alpha
    const auto wide = std::make_shared<TruncatedSpace>(build_space(1, {1.0}, 8));
    CHECK(Semigroup(ou1(), wide).drift().sector_alpha == Catch::Approx(0.5));
    const auto narrow = std::make_shared<TruncatedSpace>(build_space(1, {0.25}, 8));
    CHECK_THROWS_AS(Semigroup(ou1(), narrow).drift(), ConfigError);
}
