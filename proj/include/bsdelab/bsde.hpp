#pragma once

#include <memory>
#include <string>
#include <vector>

#include "bsdelab/driver.hpp"
#include "bsdelab/forward_paths.hpp"
#include "bsdelab/galerkin_space.hpp"

namespace bsdelab {

// Y_t = xi + int_t^T f(s, X, Y, A^{1/2} Z) ds - int_t^T Z . dM on [s, s + horizon].
struct BSDEProblem {
    std::shared_ptr<const PathEnsemble> ensemble;
    std::vector<double> xi;  // paths x l
    std::size_t components = 1;
    Driver driver;
    DiffusionCoefficient diffusion;
    double start_time = 0.0;

    void validate() const;
};

// xi = phi(X_T) per path.
BSDEProblem make_bsde(std::shared_ptr<const PathEnsemble> ensemble, const Terminal& phi, Driver driver,
                      DiffusionCoefficient A, double start_time = 0.0);

// Tensor monomials of total degree <= degree.
struct RegressionBasis {
    std::size_t dim = 1;
    std::size_t degree = 4;
    std::vector<std::vector<unsigned>> powers;

    static RegressionBasis polynomial(std::size_t dim, std::size_t degree);
    static std::size_t default_degree(std::size_t dim) { return dim <= 2 ? 4 : 3; }
    std::size_t size() const { return powers.size(); }
    void features(std::span<const double> x, std::span<double> out) const;
};

struct RegressionDiagnostics {
    std::size_t node = 0;
    double condition = 1.0;  // of the Gram matrix, before any ridge
    double ridge = 0.0;
    bool plain_average = false;  // all states equal: conditional mean is the sample mean
};

inline constexpr double ridge_floor = 1e-10;
inline constexpr double condition_limit = 1e8;

// Least-squares projections onto the basis at one time node. Targets are
// paths x width; fitted values overwrite out (same layout).
class Projector {
public:
    Projector(const RegressionBasis& basis, const PathEnsemble& e, std::size_t node);
    void project(std::span<const double> targets, std::size_t width, std::span<double> out) const;
    // coefficients, size() x width, of the last projection
    const std::vector<double>& coefficients() const { return coef_; }
    const RegressionDiagnostics& diagnostics() const { return diag_; }

private:
    RegressionBasis basis_;
    const PathEnsemble* ensemble_;
    std::size_t node_;
    std::vector<double> chol_;  // lower Cholesky factor of the (ridged) Gram matrix
    mutable std::vector<double> coef_;
    RegressionDiagnostics diag_;
};

struct BSDESolution {
    std::size_t paths = 0;
    std::size_t steps = 0;
    std::size_t components = 1;
    std::size_t dim = 1;
    std::vector<double> Y;  // (p * (steps + 1) + k) * l + c
    std::vector<double> Z;  // ((p * steps + k) * l + c) * d + i
    std::vector<RegressionDiagnostics> diagnostics;
    std::size_t picard_iterations = 0;
    // first component at node 0, path average; the SE is that of xi + sum dt f
    // along each path, the Monte Carlo form of the same expectation
    MeanSe y0;
    std::vector<double> y0_pathwise;  // xi + sum dt f per path, first component

    std::span<const double> y(std::size_t p, std::size_t k) const {
        return {Y.data() + (p * (steps + 1) + k) * components, components};
    }
    std::span<const double> z(std::size_t p, std::size_t k) const {
        return {Z.data() + (p * steps + k) * components * dim, components * dim};
    }
};

// Backward induction with Z = (2 A dt)^{-1} E[Y_{k+1} dM^T | X_k] and
// picard_iters sweeps of Y_k = E[Y_{k+1} + dt f(t_k, X, Y_k, A^{1/2} Z_k) | X_k].
BSDESolution lsmc_solve(const BSDEProblem& problem, const RegressionBasis& basis, std::size_t picard_iters = 3);

struct Representation {
    BSDESolution solution;  // Z holds the integrand
    std::vector<double> residual;  // xi - E xi - sum phi . dM per path (first component)
    MeanSe residual_mean;
    // SE of the mean residual including the sampling error of Y_0, which is
    // estimated from the same paths
    double residual_se = 0.0;
    double residual_rms = 0.0;
    MeanSe energy;       // E sum <A phi, phi> dt
    MeanSe half_second_moment;  // 1/2 E xi^2
    MeanSe gap;          // per-path energy minus 1/2 xi^2
};

Representation represent(const std::vector<double>& xi, std::shared_ptr<const PathEnsemble> ensemble,
                         const DiffusionCoefficient& A, const RegressionBasis& basis);

struct FeynmanKacReport {
    double u0 = 0.0;          // u(0, x0) of the mild solution, path average of u(0, X_0)
    MeanSe y0;
    double y0_gap = 0.0;      // |Y_0 - u(0, x0)|
    std::vector<double> y_gap;  // per node sqrt(E|Y_k - u(t_k, X_k)|^2)
    std::vector<double> z_gap;  // per node sqrt(E|A^{1/2}(Z_k - grad u)|^2)
    MeanSe rhs;               // E phi(X_T) + int E f(t, X_t, u, A^{1/2} grad u) dt
    double rhs_gap = 0.0;     // |rhs - u(0, x0)|
};

FeynmanKacReport feynman_kac_residual(const TruncatedSpace& sp, const SpaceTimeField& u, const BSDESolution& sol,
                                      const BSDEProblem& problem);

struct MomentReport {
    double p = 2.0;
    MeanSe lhs;  // E(sup_t |Y_t|^p + (int |A^{1/2} Z|^2 dt)^{p/2})
    MeanSe rhs;  // E(|xi|^p + (int |f0| dt)^p)
    double ratio = 0.0;
    double sup_y = 0.0;          // over paths and nodes
    double data_bound = 0.0;     // sup |xi| + sup |f0| T
    double observed_k = 0.0;     // sup_y / data_bound
};

MomentReport moment_report(const BSDESolution& sol, const BSDEProblem& problem, double p);

}  // namespace bsdelab
