#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "bsdelab/galerkin_space.hpp"

namespace bsdelab {

// f(t, x, y, z) -> R^l with y in R^l and z in R^{l x d} (row-major, row c is
// the D_{A^{1/2}} derivative of component c).
using DriverEval = std::function<void(double t, std::span<const double> x, std::span<const double> y,
                                      std::span<const double> z, std::span<double> out)>;

struct Driver {
    std::string name = "custom";
    std::size_t components = 1;
    std::size_t dim = 1;
    DriverEval eval;
    double lipschitz_z = 0.0;
    // global Lipschitz constant in y when known, NaN otherwise
    double lipschitz_y = std::numeric_limits<double>::quiet_NaN();
    std::function<double(double)> mono_rate = [](double) { return 0.0; };
    std::function<double(double)> alpha = [](double) { return 0.0; };
    double f0_bound = 0.0;
    // sup_{|y| <= r} |f(t,x,y,0) - f(t,x,0,0)|; sampled when empty
    std::function<double(double, std::span<const double>, double)> growth_r;
    bool source_only = false;  // f depends on (t, x) only

    void check() const;
    void f0(double t, std::span<const double> x, std::span<double> out) const;
    double growth(double t, std::span<const double> x, double r) const;
    bool monotone_only() const { return !std::isfinite(lipschitz_y); }
};

// Presets, all with l = 1.
Driver linear_driver(std::size_t dim, double decay, double constant = 0.0);
Driver sin_z_driver(std::size_t dim, double decay, double amplitude, std::size_t axis = 0);
Driver cubic_monotone_driver(std::size_t dim, double rate = 0.0);
// constant + sum_k y_poly[k] y^{k+1} + sum_j z_coeffs[j] z_j
Driver table_driver(std::size_t dim, const std::vector<double>& y_poly, const std::vector<double>& z_coeffs,
                    double constant);

struct Terminal {
    std::string name = "custom";
    std::size_t components = 1;
    PointMap fn;
};

// identity (x_1), tanh (tanh x_1), tanh_sum (tanh of the coordinate sum),
// gaussian (exp(-|x|^2)), cos (cos x_1), constant (value)
Terminal terminal_preset(const std::string& name, std::size_t dim, double value = 0.0);

struct PolynomialTerm {
    double coef = 0.0;
    std::vector<unsigned> powers;
};
Terminal polynomial_terminal(const std::vector<PolynomialTerm>& terms, std::size_t dim);

}  // namespace bsdelab
