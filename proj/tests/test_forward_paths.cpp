#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>

#include "bsdelab/errors.hpp"
#include "bsdelab/forward_paths.hpp"
#include "bsdelab/mild_solver.hpp"
#include "bsdelab/parallel.hpp"

using namespace bsdelab;

namespace {

std::shared_ptr<const Semigroup> ou(std::size_t d, SemigroupKind kind = SemigroupKind::ou_analytic) {
    SemigroupSpec s;
    s.kind = kind;
    s.lambdas.assign(d, -1.0);
    s.noise.assign(d, 1.0);
    s.steps = 512;
    auto sp = std::make_shared<TruncatedSpace>(build_space(d, std::vector<double>(d, 0.5), d == 1 ? 20 : 10));
    return std::make_shared<Semigroup>(s, sp);
}

MeanSe column(const PathEnsemble& e, std::size_t k, std::size_t axis, bool square = false) {
    std::vector<double> v(e.paths);
    for (std::size_t p = 0; p < e.paths; ++p) {
        const double x = e.state(p, k)[axis];
        v[p] = square ? x * x : x;
    }
    return mean_se(v);
}

}  // namespace

TEST_CASE("paths start at the prescribed point", "[paths]") {
    const auto sg = ou(1);
    const auto e = sample(*sg, {1.0, 8, 1000, 3, {0.7}});
    for (std::size_t p = 0; p < e.paths; ++p) CHECK(e.state(p, 0)[0] == 0.7);
    CHECK(e.dt == 1.0 / 8.0);
}

TEST_CASE("exact OU moments", "[paths]") {
    const auto sg = ou(1);
    const double x0 = 1.5;
    const auto e = sample(*sg, {1.0, 16, 100000, 5, {x0}});
    for (std::size_t k : {4, 16}) {
        const double t = e.time(k);
        const auto m = column(e, k, 0);
        CHECK(std::abs(m.mean - std::exp(-t) * x0) <= 3.0 * m.se);
        // variance through the centred second moment
        std::vector<double> c(e.paths);
        const double mean = std::exp(-t) * x0;
        for (std::size_t p = 0; p < e.paths; ++p) c[p] = (e.state(p, k)[0] - mean) * (e.state(p, k)[0] - mean);
        const auto v = mean_se(c);
        CHECK(std::abs(v.mean - 0.5 * (1.0 - std::exp(-2.0 * t))) <= 3.0 * v.se);
    }
}

TEST_CASE("martingale increments are centred", "[paths]") {
    const auto sg = ou(2);
    const auto e = sample(*sg, {1.0, 8, 20000, 9, {}});
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t k = 0; k < e.steps; ++k) {
            std::vector<double> v(e.paths), xv(e.paths);
            for (std::size_t p = 0; p < e.paths; ++p) {
                v[p] = e.increment(p, k)[i];
                xv[p] = v[p] * e.state(p, k)[i];
            }
            const auto m = mean_se(v);
            CHECK(std::abs(m.mean) <= 3.5 * m.se);
            // no linear dependence on the current state
            const auto c = mean_se(xv);
            CHECK(std::abs(c.mean) <= 3.5 * c.se);
        }
}

TEST_CASE("started from the reference measure", "[paths]") {
    const auto sg = ou(1);
    const auto e = sample(*sg, {1.0, 4, 50000, 2, {}});
    CHECK(e.from_measure);
    const auto m = column(e, 0, 0), s = column(e, 0, 0, true);
    CHECK(std::abs(m.mean) <= 3.0 * m.se);
    CHECK(std::abs(s.mean - 0.5) <= 3.0 * s.se);
    // the invariant law is preserved
    const auto s4 = column(e, 4, 0, true);
    CHECK(std::abs(s4.mean - 0.5) <= 3.0 * s4.se);
}

TEST_CASE("Euler sampler agrees in law with the exact one", "[paths]") {
    const auto exact = ou(1);
    const auto euler = ou(1, SemigroupKind::mc_euler);
    const auto a = sample(*exact, {1.0, 4, 40000, 1, {1.0}});
    const auto b = sample(*euler, {1.0, 4, 40000, 2, {1.0}});
    for (bool sq : {false, true}) {
        const auto ma = column(a, 4, 0, sq), mb = column(b, 4, 0, sq);
        CHECK(std::abs(ma.mean - mb.mean) <= 3.0 * std::hypot(ma.se, mb.se));
    }
}

TEST_CASE("sampling validation", "[paths]") {
    const auto sg = ou(1);
    CHECK_THROWS_AS(sample(*sg, {1.0, 0, 10, 1, {0.0}}), ConfigError);
    CHECK_THROWS_AS(sample(*sg, {1.0, 4, 0, 1, {0.0}}), ConfigError);
    CHECK_THROWS_AS(sample(*sg, {0.0, 4, 10, 1, {0.0}}), ConfigError);
    CHECK_THROWS_AS(sample(*sg, {1.0, 4, 10, 1, {0.0, 1.0}}), ConfigError);
}

TEST_CASE("bracket law", "[paths][bracket]") {
    const auto sg = ou(1);
    const auto e = sample(*sg, {1.0, 64, 20000, 4, {0.0}});
    const auto rep = bracket_residual(e, sg->diffusion());
    REQUIRE(rep.entries.size() == 1);
    const auto& b = rep.entries[0];
    CHECK(std::abs(b.expected.mean - 1.0) <= 1e-12);
    CHECK(std::abs(b.empirical.mean - 1.0) <= 3.0 * b.empirical.se);

    // telescoping: brackets over [0, T/2] and [T/2, T] add up
    const auto half = bracket_residual(e, sg->diffusion(), 32).entries[0];
    std::vector<double> second(e.paths);
    for (std::size_t p = 0; p < e.paths; ++p) {
        double s = 0.0;
        for (std::size_t k = 32; k < 64; ++k) s += e.increment(p, k)[0] * e.increment(p, k)[0];
        second[p] = s;
    }
    CHECK(std::abs(half.empirical.mean + mean_se(second).mean - b.empirical.mean) <= 1e-12);

    const auto sg2 = ou(2);
    const auto e2 = sample(*sg2, {1.0, 32, 20000, 4, {0.0, 0.0}});
    const auto r2 = bracket_residual(e2, sg2->diffusion());
    REQUIRE(r2.entries.size() == 3);
    for (const auto& x : r2.entries) CHECK(std::abs(x.residual.mean) <= 3.0 * x.residual.se);
    CHECK(r2.entries[1].i == 0);
    CHECK(r2.entries[1].j == 1);
}

TEST_CASE("sampling does not depend on the worker count", "[paths][determinism]") {
    const auto sg = ou(2);
    set_worker_count(1);
    const auto a = sample(*sg, {1.0, 16, 5000, 8, {}});
    set_worker_count(3);
    const auto b = sample(*sg, {1.0, 16, 5000, 8, {}});
    set_worker_count(0);
    CHECK(a.states == b.states);
    CHECK(a.increments == b.increments);
    const auto ra = bracket_residual(a, sg->diffusion());
    set_worker_count(4);
    const auto rb = bracket_residual(b, sg->diffusion());
    set_worker_count(0);
    CHECK(ra.entries[1].residual.mean == rb.entries[1].residual.mean);
}

TEST_CASE("ensemble files round trip", "[paths]") {
    const auto sg = ou(2);
    const auto a = sample(*sg, {0.5, 4, 100, 8, {0.1, 0.2}});
    const std::string path = "ensemble_roundtrip.bin";
    write_ensemble(a, path);
    const auto b = read_ensemble(path);
    std::remove(path.c_str());
    CHECK(b.paths == a.paths);
    CHECK(b.steps == a.steps);
    CHECK(b.dim == 2);
    CHECK(b.states == a.states);
    CHECK(b.increments == a.increments);
}

TEST_CASE("Ito residual", "[paths][ito]") {
    const auto sg = ou(1);
    const auto& sp = sg->space();
    const auto A = sg->diffusion();
    // constant field: zero exactly
    SpaceTimeField c(uniform_times(1.0, 16), sp.size(), 1);
    for (auto& v : c.values) v = 2.0;
    const auto e = sample(*sg, {1.0, 16, 2000, 6, {0.3}});
    const auto r0 = ito_residual(e, sp, A, c, linear_driver(1, 0.0));
    for (double r : r0.residual) CHECK(std::abs(r) <= 1e-12);

    // u = e^{-(T - t)} x: mean square residual is a discretization effect
    std::vector<double> ms;
    for (std::size_t N : {16, 32}) {
        const auto p = make_problem(sg, terminal_preset("identity", 1), linear_driver(1, 0.0), 1.0, N);
        const auto u = solve_linear(p);
        const auto en = sample(*sg, {1.0, N, 20000, 6, {0.3}});
        const auto rep = ito_residual(en, sp, A, u, linear_driver(1, 0.0));
        CHECK(std::abs(rep.mean.mean) <= 3.0 * rep.mean.se + 1e-3);
        ms.push_back(rep.mean_square.mean);
    }
    CHECK(ms[1] < ms[0]);
}
