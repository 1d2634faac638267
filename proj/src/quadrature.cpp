#include "bsdelab/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "bsdelab/errors.hpp"

namespace bsdelab {

namespace {

// Orthonormal probabilists' Hermite polynomials psi_k = He_k / sqrt(k!)
// at x; returns (psi_{n-1}, psi_n).
std::pair<double, double> hermite_pair(std::size_t n, double x) {
    double prev = 0.0;
    double cur = 1.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double next = (x * cur - std::sqrt(static_cast<double>(k)) * prev) /
                            std::sqrt(static_cast<double>(k + 1));
        prev = cur;
        cur = next;
    }
    return {prev, cur};
}

}  // namespace

QuadratureRule gauss_hermite_normal(std::size_t n) {
    if (n == 0) throw ConfigError("Gauss-Hermite rule needs at least one node");
    // Golub–Welsch for the starting nodes, then Newton on psi_n and the
    // Christoffel formula so the tail weights keep full relative accuracy.
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    Eigen::VectorXd sub(static_cast<Eigen::Index>(n > 1 ? n - 1 : 0));
    for (std::size_t k = 1; k < n; ++k) sub(static_cast<Eigen::Index>(k - 1)) = std::sqrt(double(k));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig;
    eig.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);

    QuadratureRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const double sn = std::sqrt(static_cast<double>(n));
    for (std::size_t j = 0; j < n; ++j) {
        double x = eig.eigenvalues()(static_cast<Eigen::Index>(j));
        for (int it = 0; it < 8; ++it) {
            const auto [pm1, p] = hermite_pair(n, x);
            const double step = p / (sn * pm1);
            x -= step;
            if (std::abs(step) <= 1e-16 * std::max(1.0, std::abs(x))) break;
        }
        const auto [pm1, p] = hermite_pair(n, x);
        (void)p;
        rule.nodes[j] = x;
        rule.weights[j] = 1.0 / (static_cast<double>(n) * pm1 * pm1);
    }
    // enforce exact symmetry of the rule
    for (std::size_t j = 0; j < n / 2; ++j) {
        const double x = 0.5 * (rule.nodes[n - 1 - j] - rule.nodes[j]);
        const double w = 0.5 * (rule.weights[n - 1 - j] + rule.weights[j]);
        rule.nodes[j] = -x;
        rule.nodes[n - 1 - j] = x;
        rule.weights[j] = rule.weights[n - 1 - j] = w;
    }
    if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
    const double total = std::accumulate(rule.weights.begin(), rule.weights.end(), 0.0);
    for (auto& w : rule.weights) w /= total;
    return rule;
}

QuadratureRule gauss_legendre(std::size_t n) {
    if (n == 0) throw ConfigError("Gauss-Legendre rule needs at least one node");
    QuadratureRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const double pi = 3.14159265358979323846;
    for (std::size_t i = 0; i < n; ++i) {
        double x = std::cos(pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
        double dp = 1.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0;
            double p1 = x;
            for (std::size_t k = 2; k <= n; ++k) {
                const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / static_cast<double>(k);
                p0 = p1;
                p1 = pk;
            }
            const double pn = n == 1 ? x : p1;
            const double pnm1 = n == 1 ? 1.0 : p0;
            dp = static_cast<double>(n) * (x * pn - pnm1) / (x * x - 1.0);
            const double step = pn / dp;
            x -= step;
            if (std::abs(step) < 1e-16) break;
        }
        rule.nodes[n - 1 - i] = x;
        rule.weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    return rule;
}

BarycentricInterpolant::BarycentricInterpolant(std::vector<double> nodes) : nodes_(std::move(nodes)) {
    const std::size_t n = nodes_.size();
    if (n == 0) throw ConfigError("interpolant needs nodes");
    weights_.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        double logabs = 0.0;
        int sign = 1;
        for (std::size_t k = 0; k < n; ++k) {
            if (k == j) continue;
            const double diff = nodes_[j] - nodes_[k];
            if (diff == 0.0) throw ConfigError("interpolation nodes must be distinct");
            logabs -= std::log(std::abs(diff));
            if (diff < 0) sign = -sign;
        }
        weights_[j] = sign * std::exp(logabs);
    }
    derivative_.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double diag = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double dij = (weights_[j] / weights_[i]) / (nodes_[i] - nodes_[j]);
            derivative_[i * n + j] = dij;
            diag -= dij;
        }
        derivative_[i * n + i] = diag;
    }
}

void BarycentricInterpolant::basis(double x, std::span<double> out) const {
    const std::size_t n = nodes_.size();
    double ell = 1.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double diff = x - nodes_[j];
        if (diff == 0.0) {
            std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(n), 0.0);
            out[j] = 1.0;
            return;
        }
        ell *= diff;
    }
    for (std::size_t j = 0; j < n; ++j) out[j] = ell * weights_[j] / (x - nodes_[j]);
}

double BarycentricInterpolant::evaluate(std::span<const double> values, double x) const {
    std::vector<double> b(nodes_.size());
    basis(x, b);
    double s = 0.0;
    for (std::size_t j = 0; j < b.size(); ++j) s += b[j] * values[j];
    return s;
}

}  // namespace bsdelab
