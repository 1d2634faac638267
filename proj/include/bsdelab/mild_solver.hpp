#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsdelab/driver.hpp"
#include "bsdelab/galerkin_space.hpp"
#include "bsdelab/semigroup.hpp"

namespace bsdelab {

// (d_t + L) u + f(t, x, u, A^{1/2} grad u) = 0 on [0, T], u_T = phi.
struct SemilinearProblem {
    std::shared_ptr<const Semigroup> semigroup;
    Terminal terminal;           // fn may be empty when only grid values are known
    GridField terminal_values;   // phi on the grid
    Driver driver;
    double horizon = 1.0;
    std::size_t time_steps = 64;

    const TruncatedSpace& space() const { return semigroup->space(); }
    std::size_t components() const { return terminal_values.components; }
    std::vector<double> times() const;
    double dt() const { return horizon / static_cast<double>(time_steps); }
    void validate() const;
};

SemilinearProblem make_problem(std::shared_ptr<const Semigroup> sg, Terminal terminal, Driver driver, double horizon,
                               std::size_t time_steps);

struct WindowReport {
    std::size_t first = 0;  // time node range [first, last)
    std::size_t last = 0;
    std::size_t iterations = 0;
    std::vector<double> errors;  // window norm of successive differences
    std::vector<double> ratios;
    double contraction_bound = 0.0;
};

struct SolveReport {
    std::string method;
    std::size_t iterations = 0;
    std::vector<double> errors;
    std::vector<double> ratios;
    std::vector<WindowReport> windows;
    double lipschitz_y = 0.0;  // of f - mu y, the part left after the integrating factor
    double lipschitz_z = 0.0;
    double alpha = 0.0;        // drift sector constant
    double window_length = 0.0;
    // ||u||_T^2 against e^{T(1 + 2C + C^2 + 2 alpha)} (||phi||^2 + int ||f0||^2)
    double energy_lhs = 0.0;
    double energy_bound = 0.0;
    double energy_slack = 0.0;
    bool converged = false;
    // monotone pipeline
    double radius = 0.0;
    double k_hat = 0.0;
    // sup |u| / (sup |phi| + sup |f0|), away from the outermost grid layer
    double observed_linf_ratio = 0.0;
    std::vector<double> n_sequence;
    std::vector<double> cauchy_gaps;
    std::vector<std::size_t> level_iterations;
};

class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, SolveReport report)
        : std::runtime_error(what), report_(std::move(report)) {}
    const SolveReport& report() const { return report_; }

private:
    SolveReport report_;
};

// u_i = P_{T - t_i} phi + trapezoid over s in [t_i, T] of P_{s - t_i} f_s.
SpaceTimeField solve_linear(const SemilinearProblem& problem);

struct PicardSettings {
    double tol = 1e-10;
    std::size_t max_iter = 200;
    // When the driver has no global y-Lipschitz constant, it is sampled on
    // |y| <= y_radius (0 refuses such drivers).
    double y_radius = 0.0;
    std::optional<SpaceTimeField> initial;
};

std::pair<SpaceTimeField, SolveReport> picard_lipschitz(const SemilinearProblem& problem,
                                                        const PicardSettings& settings = {});

// u* = e^{alpha_t} u, phi* = e^{alpha_T} phi,
// f*_t(y, z) = e^{alpha_t} f_t(e^{-alpha_t} y, e^{-alpha_t} z) - mu_t y.
struct GaugedProblem {
    SemilinearProblem problem;
    std::function<double(double)> alpha;
    std::function<double(double)> mono_rate;

    SpaceTimeField invert(const SpaceTimeField& u_star) const;
    SemilinearProblem restore() const;
};

GaugedProblem gauge_transform(const SemilinearProblem& problem);

// y-convolution with n^l rho(n .), rho the unit-mass bump exp(-1/(1 - |y|^2)).
Driver mollify_driver(const Driver& f, double n);
// integral of |grad rho| over the unit ball of R^l
double mollifier_gradient_mass(std::size_t l);

// h_n = theta_r(y) (f(y, q_n(z)) - f0) n / (f^{',r+1} v n) + f0, with f^{',r+1}
// taken pointwise in (t, x)
Driver truncate_driver(const Driver& f, double r, double n);
// theta_r(|y|) and q_n on their own
double cutoff(double r, double norm_y);
void clamp_gradient(std::span<const double> z, double n, std::span<double> out);

struct MonotoneSettings {
    std::vector<double> schedule;  // empty: five doublings from a start chosen by the growth bound
    double tol = 1e-6;
    double picard_tol = 1e-12;
    std::size_t max_iter = 200;
    double safety = 2.0;
};

std::pair<SpaceTimeField, SolveReport> solve_monotone(const SemilinearProblem& problem,
                                                      const MonotoneSettings& settings = {});

// Gauge to zero rate when needed, then Picard (Lipschitz drivers) or the
// monotone pipeline, and map back.
std::pair<SpaceTimeField, SolveReport> solve(const SemilinearProblem& problem, const PicardSettings& picard = {},
                                             const MonotoneSettings& monotone = {});

struct RelationReport {
    std::vector<double> times;
    double tolerance = 0.0;
    // ||u_t||^2 + 2 int E(u) <= 2 int (f, u) + ||phi||^2 + 2 alpha int ||u||^2
    std::vector<double> energy_slack;
    double worst_energy_slack = 0.0;
    // ||u||_T^2 / (||phi||^2 + (int ||f_t|| dt)^2)
    double linear_bound_ratio = 0.0;
    // weak form against (1 + t) psi for psi in {1, x_1, x_1^2, exp(-|x|^2)}
    std::vector<double> weak_residual;
    double worst_weak_residual = 0.0;
    // Pointwise relations are measured in L2(mu) per time node: the grid
    // interpolant of a non-polynomial field is unreliable at the outermost
    // nodes, where mu puts almost no mass.
    // |u|^2 + 2 int P|A^{1/2} grad u|^2 - P|phi|^2 - 2 int P<u, f>
    std::vector<double> pointwise_residual;
    double worst_pointwise_residual = 0.0;
    // P|phi| + int P<u^, f> - |u|, as minus the norm of its negative part
    std::vector<double> modulus_slack;
    double worst_modulus_slack = 0.0;
    // 1/2 P phi^2 + int int P(f P f) - int P(f P phi), same convention, worst component
    std::vector<double> product_slack;
    double worst_product_slack = 0.0;
    // 2 int (f, u+) + ||phi+||^2 - ||u_t+||^2
    std::vector<double> positive_part_slack;
    double worst_positive_part_slack = 0.0;
    bool nonnegative_data = false;
    double min_value = 0.0;
    std::vector<std::string> violations;
};

RelationReport relation_audit(const SemilinearProblem& problem, const SpaceTimeField& u);

struct GrowthSample {
    double r = 0.0;
    double value = 0.0;
};

struct DriverReport {
    double lipschitz_z_estimate = 0.0;
    double lipschitz_z_declared = 0.0;
    bool lipschitz_violation = false;
    double worst_monotonicity_margin = 0.0;  // max <dy, df> - mu |dy|^2
    bool monotonicity_violation = false;
    double worst_dissipativity_margin = 0.0;  // max <y, f(y, 0) - f(0, 0)>
    bool dissipativity_violation = false;
    double f0_sup = 0.0;
    bool f0_violation = false;
    std::vector<GrowthSample> growth;
    std::size_t samples = 0;
};

DriverReport validate_driver(const Driver& f, std::size_t sample_budget, std::uint64_t seed = 1,
                             double horizon = 1.0);

// sup of |f(y) - f(y')| / |y - y'| over pairs in the ball |y| <= radius
double estimate_lipschitz_y(const Driver& f, double radius, std::size_t samples = 4096, std::uint64_t seed = 1);

// Driver evaluated along a solution: out_i = f(t_i, x, u_i, A^{1/2} grad u_i).
SpaceTimeField driver_along(const SemilinearProblem& problem, const SpaceTimeField& u);

}  // namespace bsdelab
