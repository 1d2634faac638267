#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bsdelab/driver.hpp"
#include "bsdelab/galerkin_space.hpp"
#include "bsdelab/semigroup.hpp"

namespace bsdelab {

struct PathSpec {
    double horizon = 1.0;
    std::size_t steps = 64;
    std::size_t paths = 100000;
    std::uint64_t seed = 1;
    std::vector<double> start;  // empty: i.i.d. draws from the reference measure
};

// X under P^x on a uniform grid together with the increments of the
// coordinate martingales, sigma dW with sigma sigma* = 2A.
struct PathEnsemble {
    std::size_t paths = 0;
    std::size_t steps = 0;
    std::size_t dim = 1;
    double horizon = 0.0;
    double dt = 0.0;
    std::uint64_t seed = 0;
    bool from_measure = false;
    std::vector<double> states;      // (p * (steps + 1) + k) * dim + i
    std::vector<double> increments;  // (p * steps + k) * dim + i

    std::span<const double> state(std::size_t p, std::size_t k) const {
        return {states.data() + (p * (steps + 1) + k) * dim, dim};
    }
    std::span<const double> increment(std::size_t p, std::size_t k) const {
        return {increments.data() + (p * steps + k) * dim, dim};
    }
    double time(std::size_t k) const { return static_cast<double>(k) * dt; }
};

inline constexpr std::size_t max_paths = 1000000;

// ou_analytic: exact joint draw of (X_{t+h}, M_{t+h} - M_t) per axis;
// mc_euler: Euler–Maruyama with the perturbed drift.
PathEnsemble sample(const Semigroup& sg, const PathSpec& spec);

// Little-endian float64 columns after a text header "paths steps dim".
void write_ensemble(const PathEnsemble& e, const std::string& path);
PathEnsemble read_ensemble(const std::string& path);

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

MeanSe mean_se(std::span<const double> samples);

struct BracketEntry {
    std::size_t i = 0;
    std::size_t j = 0;
    MeanSe empirical;  // sum dM^i dM^j up to the node
    MeanSe expected;   // 2 int a_ij(X_s) ds, trapezoid along each path
    MeanSe residual;   // per-path difference
};

struct BracketReport {
    std::size_t node = 0;
    std::vector<BracketEntry> entries;  // i <= j
};

// Brackets at time node `node` (the last one by default).
BracketReport bracket_residual(const PathEnsemble& e, const DiffusionCoefficient& A, std::size_t node = SIZE_MAX);

// u at an off-grid point: polynomial interpolation in x, linear in t.
void evaluate_field(const TruncatedSpace& sp, const SpaceTimeField& u, double t, std::span<const double> x,
                    std::span<double> out);
// grad u (l x d row-major) at an off-grid point, same interpolation.
void evaluate_gradient(const TruncatedSpace& sp, const std::vector<GradientField>& grads,
                       const std::vector<double>& times, double t, std::span<const double> x, std::span<double> out);
std::vector<GradientField> gradients(const TruncatedSpace& sp, const SpaceTimeField& u);

struct ItoReport {
    std::vector<double> residual;  // paths x l
    MeanSe mean;  // first component
    MeanSe mean_square;
};

// R = u(T, X_N) - u(0, X_0) - sum <grad u, dM> + sum f dt, left-point sums.
ItoReport ito_residual(const PathEnsemble& e, const TruncatedSpace& sp, const DiffusionCoefficient& A,
                       const SpaceTimeField& u, const Driver& f);

}  // namespace bsdelab
