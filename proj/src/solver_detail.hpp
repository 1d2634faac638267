#pragma once

#include <vector>

#include "bsdelab/mild_solver.hpp"

namespace bsdelab::detail {

struct Discretization {
    std::vector<double> times;
    double dt = 0.0;
    std::vector<TransitionOperator> lags;  // P_{k dt}, k = 0..N
    DiffusionOnGrid diffusion;
};

Discretization discretize(const SemilinearProblem& problem);

// P_{k dt} phi for k = 0..N, from phi itself when it is known off the grid.
std::vector<GridField> terminal_lags(const SemilinearProblem& problem, const Discretization& disc);

// Trapezoid weight of node j in the integral over [t_i, t_N].
inline double trapezoid_weight(std::size_t i, std::size_t j, std::size_t N) {
    if (i == N) return 0.0;
    return (j == i || j == N) ? 0.5 : 1.0;
}

// z = A^{1/2} grad u per node, l x d row-major blocks.
void sqrt_gradient(const TruncatedSpace& space, const DiffusionOnGrid& diff, std::span<const double> u,
                   std::size_t l, std::vector<double>& z);

// out = f(t, x, u, z) - shift * u on the grid.
void eval_driver(const SemilinearProblem& problem, const DiffusionOnGrid& diff, double t,
                 std::span<const double> u, double shift, std::span<double> out);

double sup_abs(std::span<const double> v);
// sup |u| over nodes that are not extreme along any axis, all time slices
double interior_sup(const TruncatedSpace& sp, const SpaceTimeField& u);

// sup over the grid and the time nodes of |f(t, x, 0, 0)|, together with the declared bound
double f0_sup(const SemilinearProblem& problem);
// trapezoid of ||f0_t||_2^2
double f0_energy(const SemilinearProblem& problem);

double sampled_lipschitz_y(const Driver& f, double radius, double horizon, bool subtract_rate, std::size_t samples,
                           std::uint64_t seed);

}  // namespace bsdelab::detail
