#pragma once

#include <functional>
#include <vector>

namespace oracle {

// Dense implicit-Euler finite differences for
//   u_t + a u_xx + lambda x u_x + f(u) = 0 on [-L, L], u(T) = phi,
// with zero-flux ends and Newton on each step.
struct FdSettings {
    double half_width = 5.0;
    std::size_t points = 2001;
    std::size_t substeps = 64;  // implicit steps per output interval
};

struct FdSolution {
    std::vector<double> x;
    std::vector<double> times;
    std::vector<std::vector<double>> u;  // per output time

    // linear interpolation, clamped to the end values outside the domain
    double at(std::size_t k, double x) const;
};

FdSolution solve_ou_1d(double a, double lambda, const std::function<double(double)>& f,
                       const std::function<double(double)>& fprime, const std::function<double(double)>& phi,
                       double horizon, std::size_t outputs, const FdSettings& settings = {});

}  // namespace oracle
