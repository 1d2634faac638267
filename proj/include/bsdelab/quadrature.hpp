#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace bsdelab {

struct QuadratureRule {
    std::vector<double> nodes;    // ascending
    std::vector<double> weights;  // positive
};

// n-point Gauss rule for the standard normal law: exact for polynomials of
// degree <= 2n-1, weights sum to 1.
QuadratureRule gauss_hermite_normal(std::size_t n);

// n-point Gauss–Legendre rule on [-1, 1], weights sum to 2.
QuadratureRule gauss_legendre(std::size_t n);

// Polynomial interpolant through fixed nodes, evaluated in the modified
// Lagrange ("first barycentric") form, which stays backward stable when x
// lies outside the node range.
class BarycentricInterpolant {
public:
    explicit BarycentricInterpolant(std::vector<double> nodes);

    std::size_t size() const { return nodes_.size(); }
    const std::vector<double>& nodes() const { return nodes_; }
    const std::vector<double>& weights() const { return weights_; }

    // out[j] = l_j(x), the j-th Lagrange basis polynomial at x.
    void basis(double x, std::span<double> out) const;
    double evaluate(std::span<const double> values, double x) const;

    // Row-major n x n matrix D with (D f)_i = p'(x_i) for the interpolant p of f.
    const std::vector<double>& derivative_matrix() const { return derivative_; }

private:
    std::vector<double> nodes_;
    std::vector<double> weights_;
    std::vector<double> derivative_;
};

}  // namespace bsdelab
