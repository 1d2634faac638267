#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "bsdelab/errors.hpp"
#include "bsdelab/mild_solver.hpp"
#include "bsdelab/quadrature.hpp"
#include "solver_detail.hpp"

namespace bsdelab {

namespace {

double bump(double r2) { return r2 < 1.0 ? std::exp(-1.0 / (1.0 - r2)) : 0.0; }

struct MollifierRule {
    std::vector<double> points;  // q * l
    std::vector<double> weights;
};

// 16 Gauss–Legendre points per axis on [-1, 1]^l, restricted to the ball.
MollifierRule mollifier_rule(std::size_t l) {
    const QuadratureRule gl = gauss_legendre(16);
    MollifierRule rule;
    std::size_t total = 1;
    for (std::size_t c = 0; c < l; ++c) total *= 16;
    double mass = 0.0;
    for (std::size_t q = 0; q < total; ++q) {
        std::size_t rem = q;
        double r2 = 0.0, w = 1.0;
        std::vector<double> eta(l);
        for (std::size_t c = 0; c < l; ++c) {
            const std::size_t k = rem % 16;
            rem /= 16;
            eta[c] = gl.nodes[k];
            r2 += eta[c] * eta[c];
            w *= gl.weights[k];
        }
        const double v = w * bump(r2);
        if (v <= 0.0) continue;
        rule.points.insert(rule.points.end(), eta.begin(), eta.end());
        rule.weights.push_back(v);
        mass += v;
    }
    for (auto& w : rule.weights) w /= mass;
    return rule;
}

// smooth step: 0 for s <= 0, 1 for s >= 1
double smooth_step(double s) {
    if (s <= 0.0) return 0.0;
    if (s >= 1.0) return 1.0;
    const double a = std::exp(-1.0 / s), b = std::exp(-1.0 / (1.0 - s));
    return a / (a + b);
}

}  // namespace

double mollifier_gradient_mass(std::size_t l) {
    // radial: int |rho'(r)| r^{l-1} dr / int rho(r) r^{l-1} dr
    const QuadratureRule gl = gauss_legendre(64);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < gl.nodes.size(); ++k) {
        const double r = 0.5 * (gl.nodes[k] + 1.0), w = 0.5 * gl.weights[k];
        const double rho = bump(r * r);
        const double drho = rho * 2.0 * r / ((1.0 - r * r) * (1.0 - r * r));
        const double jac = std::pow(r, static_cast<double>(l) - 1.0);
        num += w * drho * jac;
        den += w * rho * jac;
    }
    return num / den;
}

Driver mollify_driver(const Driver& f, double n) {
    if (!(n >= 1.0)) throw PreconditionError("mollifier scale n must be at least 1");
    f.check();
    if (f.components > 3) throw ConfigError("mollification supports at most three components");
    const auto rule = std::make_shared<MollifierRule>(mollifier_rule(f.components));
    Driver g = f;
    g.name = f.name + "~" + std::to_string(static_cast<long long>(n));
    const auto inner = f.eval;
    const std::size_t l = f.components;
    g.eval = [inner, rule, n, l](double t, std::span<const double> x, std::span<const double> y,
                                 std::span<const double> z, std::span<double> out) {
        double ys[8], v[8], acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
        for (std::size_t q = 0; q < rule->weights.size(); ++q) {
            for (std::size_t c = 0; c < l; ++c) ys[c] = y[c] - rule->points[q * l + c] / n;
            inner(t, x, {ys, l}, z, {v, l});
            for (std::size_t c = 0; c < l; ++c) acc[c] += rule->weights[q] * v[c];
        }
        for (std::size_t c = 0; c < l; ++c) out[c] = acc[c];
    };
    g.growth_r = nullptr;
    g.source_only = f.source_only;
    return g;
}

double cutoff(double r, double norm_y) { return smooth_step(r + 1.0 - norm_y); }

void clamp_gradient(std::span<const double> z, double n, std::span<double> out) {
    double norm = 0.0;
    for (double v : z) norm += v * v;
    norm = std::sqrt(norm);
    const double s = n / std::max(norm, n);
    for (std::size_t k = 0; k < z.size(); ++k) out[k] = z[k] * s;
}

Driver truncate_driver(const Driver& f, double r, double n) {
    if (r < 1.0) throw PreconditionError("truncation radius must be at least 1");
    if (!(n >= 1.0)) throw PreconditionError("truncation level n must be at least 1");
    f.check();
    if (f.components > 8) throw ConfigError("truncation supports at most eight components");
    Driver h = f;
    h.name = f.name + "|" + std::to_string(static_cast<long long>(n));
    const std::size_t l = f.components;
    h.eval = [f, r, n, l](double t, std::span<const double> x, std::span<const double> y, std::span<const double> z,
                          std::span<double> out) {
        double f0[8];
        f.f0(t, x, {f0, l});
        double ny = 0.0;
        for (double v : y) ny += v * v;
        const double theta = cutoff(r, std::sqrt(ny));
        if (theta == 0.0) {
            for (std::size_t c = 0; c < l; ++c) out[c] = f0[c];
            return;
        }
        std::vector<double> qz(z.size());
        clamp_gradient(z, n, qz);
        f.eval(t, x, y, qz, out);
        const double scale = n / std::max(f.growth(t, x, r + 1.0), n);
        for (std::size_t c = 0; c < l; ++c) out[c] = theta * (out[c] - f0[c]) * scale + f0[c];
    };
    h.lipschitz_y = std::numeric_limits<double>::quiet_NaN();
    h.mono_rate = [](double) { return 0.0; };
    h.alpha = [](double) { return 0.0; };
    h.growth_r = nullptr;
    return h;
}

std::pair<SpaceTimeField, SolveReport> solve_monotone(const SemilinearProblem& problem,
                                                      const MonotoneSettings& settings) {
    problem.validate();
    for (double t : problem.times())
        if (problem.driver.mono_rate(t) != 0.0)
            throw PreconditionError("monotone pipeline needs a zero rate; apply gauge_transform first");
    SolveReport rep;
    rep.method = "monotone";
    rep.alpha = problem.semigroup->drift().sector_alpha;
    rep.lipschitz_z = problem.driver.lipschitz_z;
    const TruncatedSpace& sp = problem.space();
    const double T = problem.horizon;
    const double C = problem.driver.lipschitz_z;
    const double phi_sup = detail::sup_abs(problem.terminal_values.values);
    const double f0 = detail::f0_sup(problem);
    rep.k_hat = std::max(1.0, T) * std::exp(C * C * T);
    rep.radius = std::max(1.0, 1.0 + settings.safety * rep.k_hat * (phi_sup + f0));
    const double r = rep.radius;

    std::vector<double> schedule = settings.schedule;
    if (schedule.empty()) {
        double growth = 0.0;
        for (double t : problem.times())
            for (std::size_t i = 0; i < sp.size(); ++i)
                growth = std::max(growth, problem.driver.growth(t, sp.node(i), r + 1.0));
        double n0 = 4.0;
        while (n0 < growth) n0 *= 2.0;
        for (int k = 0; k < 5; ++k) schedule.push_back(n0 * std::pow(2.0, k));
    }

    SpaceTimeField prev;
    const DiffusionOnGrid diff = evaluate_on_grid(sp, problem.semigroup->diffusion());
    PicardSettings ps;
    ps.tol = settings.picard_tol;
    ps.max_iter = settings.max_iter;
    for (double n : schedule) {
        SemilinearProblem level = problem;
        level.driver = mollify_driver(truncate_driver(problem.driver, r, n), n);
        ps.y_radius = r + 2.0;
        auto [u, inner] = picard_lipschitz(level, ps);
        rep.n_sequence.push_back(n);
        rep.level_iterations.push_back(inner.iterations);
        rep.iterations += inner.iterations;
        rep.lipschitz_y = inner.lipschitz_y;
        rep.window_length = inner.window_length;
        rep.windows = std::move(inner.windows);
        if (!prev.values.empty()) {
            SpaceTimeField d = u;
            for (std::size_t q = 0; q < d.values.size(); ++q) d.values[q] -= prev.values[q];
            const double gap = t_norm(sp, diff, d);
            rep.cauchy_gaps.push_back(gap);
            rep.errors.push_back(gap);
            if (rep.cauchy_gaps.size() > 1)
                rep.ratios.push_back(gap / rep.cauchy_gaps[rep.cauchy_gaps.size() - 2]);
            if (gap < settings.tol) {
                rep.converged = true;
                prev = std::move(u);
                break;
            }
        }
        prev = std::move(u);
    }
    if (!rep.converged) throw ConvergenceError("n-schedule exhausted before the Cauchy criterion", rep);
    rep.observed_linf_ratio = detail::interior_sup(sp, prev) / std::max(phi_sup + f0, 1e-300);
    // a priori bound with the Gronwall constant C^2 + 1 + 2 alpha
    const double tn = t_norm(sp, diff, prev);
    rep.energy_lhs = tn * tn;
    rep.energy_bound = std::exp(T * (C * C + 1.0 + 2.0 * rep.alpha)) *
                       (sp.norm_sq(problem.terminal_values) + detail::f0_energy(problem));
    rep.energy_slack = rep.energy_bound - rep.energy_lhs;
    return {std::move(prev), std::move(rep)};
}

}  // namespace bsdelab
