#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bsdelab/quadrature.hpp"

using namespace bsdelab;

namespace {
double double_factorial(int k) {
    double r = 1.0;
    for (int j = k; j > 1; j -= 2) r *= j;
    return r;
}
}  // namespace

TEST_CASE("gauss-hermite integrates normal moments", "[quadrature]") {
    for (std::size_t n : {2u, 5u, 12u, 20u, 40u}) {
        const auto rule = gauss_hermite_normal(n);
        double total = 0.0;
        for (double w : rule.weights) {
            CHECK(w > 0.0);
            total += w;
        }
        CHECK(std::abs(total - 1.0) <= 1e-12);
        for (int deg = 0; deg <= int(2 * n - 1); ++deg) {
            double q = 0.0;
            for (std::size_t j = 0; j < n; ++j) q += rule.weights[j] * std::pow(rule.nodes[j], deg);
            const double exact = deg % 2 ? 0.0 : double_factorial(deg - 1);
            if (deg % 2)
                CHECK(std::abs(q) <= 1e-10 * double_factorial(deg));
            else
                CHECK(std::abs(q - exact) <= 1e-10 * exact);
        }
    }
}

TEST_CASE("gauss-legendre integrates polynomials", "[quadrature]") {
    const auto rule = gauss_legendre(16);
    for (int deg = 0; deg <= 31; ++deg) {
        double q = 0.0;
        for (std::size_t j = 0; j < 16; ++j) q += rule.weights[j] * std::pow(rule.nodes[j], deg);
        const double exact = deg % 2 ? 0.0 : 2.0 / (deg + 1);
        CHECK(std::abs(q - exact) <= 1e-13);
    }
}

TEST_CASE("barycentric interpolant reproduces polynomials", "[quadrature]") {
    const auto rule = gauss_hermite_normal(12);
    BarycentricInterpolant p(rule.nodes);
    std::vector<double> f(12), df(12);
    for (std::size_t j = 0; j < 12; ++j) f[j] = std::pow(rule.nodes[j], 7) - 2.0 * rule.nodes[j];
    for (double x : {-7.5, -1.3, 0.0, 0.25, 3.9, 9.0}) {
        const double exact = std::pow(x, 7) - 2.0 * x;
        CHECK(std::abs(p.evaluate(f, x) - exact) <= 1e-9 * std::max(1.0, std::abs(exact)));
    }
    const auto& D = p.derivative_matrix();
    for (std::size_t i = 0; i < 12; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 12; ++j) s += D[i * 12 + j] * f[j];
        const double exact = 7.0 * std::pow(rule.nodes[i], 6) - 2.0;
        CHECK(std::abs(s - exact) <= 1e-9 * std::max(1.0, std::abs(exact)));
    }
    std::vector<double> b(12);
    p.basis(rule.nodes[3], b);
    for (std::size_t j = 0; j < 12; ++j) CHECK(b[j] == (j == 3 ? 1.0 : 0.0));
}
