#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "bsdelab/galerkin_space.hpp"

namespace bsdelab {

enum class SemigroupKind { ou_analytic, mc_euler };

// Perturbation F of the linear OU drift (mc_euler only).
struct DriftPerturbation {
    std::string name = "none";
    PointMap eval = [](std::span<const double>, std::span<double> out) {
        for (auto& v : out) v = 0.0;
    };            // x -> F(x)
    double lipschitz = 0.0;      // K_F
    double divergence_floor = 0.0;  // lower bound of div F, used for the sector constant

    static DriftPerturbation named(const std::string& name, std::size_t dim);
};

struct SemigroupSpec {
    SemigroupKind kind = SemigroupKind::ou_analytic;
    std::vector<double> lambdas;  // drift eigenvalues, all < 0
    std::vector<double> noise;    // diagonal of C = B B*
    DriftPerturbation perturbation;
    std::size_t steps = 256;      // Euler steps per unit time
    std::size_t paths = 4096;
    std::uint64_t seed = 1;

    void validate(std::size_t dim) const;
    // Q_t per axis
    double q(std::size_t k, double t) const;
    std::vector<double> invariant_variances() const;
};

SemigroupKind parse_semigroup_kind(const std::string& s);
std::string to_string(SemigroupKind k);

// P_t restricted to the grid. For ou_analytic it factorizes into one n x n
// matrix per axis; for mc_euler it is a dense nodes x nodes matrix of path
// averages of the interpolation basis.
class TransitionOperator {
public:
    TransitionOperator() = default;
    static TransitionOperator tensor(std::vector<std::vector<double>> axes);
    static TransitionOperator dense(std::vector<double> matrix, std::size_t nodes);

    void apply_scalar(const TruncatedSpace& space, std::span<const double> in, std::span<double> out) const;
    GridField apply(const TruncatedSpace& space, const GridField& f) const;
    // accumulate scale * P f into out (component layout of f)
    void apply_add(const TruncatedSpace& space, std::span<const double> f, std::size_t components, double scale,
                   std::span<double> out) const;

private:
    bool dense_ = false;
    std::vector<std::vector<double>> axes_;
    std::vector<double> matrix_;
    std::size_t nodes_ = 0;
};

struct McEstimate {
    GridField mean;
    GridField se;
    double sup_input = 0.0;  // largest |f| met at the evaluation points (apply_function)
};

class Semigroup {
public:
    Semigroup(SemigroupSpec spec, std::shared_ptr<const TruncatedSpace> space);

    const SemigroupSpec& spec() const { return spec_; }
    const TruncatedSpace& space() const { return *space_; }
    std::shared_ptr<const TruncatedSpace> space_ptr() const { return space_; }

    TransitionOperator operator_at(double t) const;
    // P_{k dt} for k = 0..count; mc lags share one batch of paths.
    std::vector<TransitionOperator> lag_operators(double dt, std::size_t count) const;

    GridField apply(double t, const GridField& f) const;
    // Pointwise estimate with standard errors (zero for ou_analytic).
    McEstimate apply_with_se(double t, const GridField& f) const;

    // P_t applied to a function known off the grid: Gauss–Hermite quadrature
    // of E[f(e^{tA1}x + xi)] (or the path average for mc_euler) evaluates f
    // itself rather than its interpolant, so f >= 0 gives P_t f >= 0.
    McEstimate apply_function(double t, std::size_t components, const PointMap& fn) const;
    // P_{k dt} fn for k = 0..count (one path batch for mc_euler).
    std::vector<GridField> apply_function_lags(double dt, std::size_t count, std::size_t components,
                                               const PointMap& fn) const;

    // The generator's coefficients relative to the reference measure:
    // A = C/2 (so that sigma sigma* = 2A with sigma = B) and the drift b of the
    // bilinear form, with its sector constant.
    DiffusionCoefficient diffusion() const;
    DriftField drift() const;

    // One Euler–Maruyama step of the mc dynamics.
    void euler_step(std::span<double> x, double h, std::span<const double> normals) const;

private:
    std::vector<double> ou_axis_matrix(std::size_t k, double t) const;
    std::vector<TransitionOperator> mc_operators(double dt, std::size_t count, std::size_t substeps) const;
    std::vector<McEstimate> mc_function(double dt, std::size_t count, std::size_t substeps, std::size_t components,
                                        const PointMap& fn) const;

    SemigroupSpec spec_;
    std::shared_ptr<const TruncatedSpace> space_;
    QuadratureRule normal_rule_;
};

GridField apply(const SemigroupSpec& spec, const TruncatedSpace& space, double t, const GridField& f);

struct SemigroupAuditEntry {
    double t = 0.0;
    std::size_t field = 0;
    double min_value = 0.0;      // min of P_t f (meaningful for f >= 0)
    bool nonnegative_input = false;
    double contraction = 0.0;    // ||P_t f||_inf / ||f||_inf
    double invariance_gap = 0.0; // |int P_t f - int f|
};

struct SemigroupAudit {
    std::vector<SemigroupAuditEntry> entries;
    double worst_min = 0.0;
    double worst_contraction = 0.0;
    double worst_invariance_gap = 0.0;
};

using TestFunction = std::function<double(std::span<const double>)>;

// Test functions are applied through apply_function; sup norms are taken over
// the grid nodes together with every point the kernel quadrature visits.
SemigroupAudit audit_semigroup(const Semigroup& sg, const std::vector<double>& times, const std::vector<TestFunction>& tests);

struct CompositionResidual {
    double residual = 0.0;  // ||P_s P_t f - P_{s+t} f||_2
    double se = 0.0;        // Monte Carlo standard error of the residual (0 for ou_analytic)
};

CompositionResidual semigroup_composition_residual(const Semigroup& sg, double s, double t, const GridField& f);

}  // namespace bsdelab
