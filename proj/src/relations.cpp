#include <algorithm>
#include <cmath>

#include "bsdelab/errors.hpp"
#include "bsdelab/mild_solver.hpp"
#include "bsdelab/parallel.hpp"
#include "solver_detail.hpp"

namespace bsdelab {

namespace {

using detail::trapezoid_weight;

// trapezoid of a[j] over [t_i, t_N] for every i
std::vector<double> tail_integrals(const std::vector<double>& a, double dt) {
    const std::size_t N = a.size() - 1;
    std::vector<double> out(N + 1, 0.0);
    for (std::size_t i = N; i-- > 0;) out[i] = out[i + 1] + 0.5 * dt * (a[i] + a[i + 1]);
    return out;
}

// s_i = dt * sum_j c_ij P_{j - i} h_j for scalar grid fields h_j
std::vector<std::vector<double>> convolve(const TruncatedSpace& sp, const std::vector<TransitionOperator>& lags,
                                          const std::vector<std::vector<double>>& h, double dt) {
    const std::size_t N = h.size() - 1, n = sp.size();
    std::vector<std::vector<double>> out(N + 1, std::vector<double>(n, 0.0));
    parallel_blocks(N + 1, 1, [&](std::size_t i0, std::size_t i1) {
        for (std::size_t i = i0; i < i1; ++i)
            for (std::size_t j = i; j <= N; ++j) {
                const double w = dt * trapezoid_weight(i, j, N);
                if (w != 0.0) lags[j - i].apply_add(sp, h[j], 1, w, out[i]);
            }
    });
    return out;
}

// P_{k dt} of a pointwise function of phi, k = 0..N
std::vector<std::vector<double>> terminal_power(const SemilinearProblem& problem,
                                                const detail::Discretization& disc,
                                                const std::function<double(std::span<const double>)>& g) {
    const TruncatedSpace& sp = problem.space();
    const std::size_t N = problem.time_steps, l = problem.components();
    std::vector<std::vector<double>> out;
    if (problem.terminal.fn) {
        const auto fn = problem.terminal.fn;
        const PointMap h = [fn, g, l](std::span<const double> x, std::span<double> o) {
            double v[8];
            std::vector<double> big;
            std::span<double> phi{v, l};
            if (l > 8) {
                big.resize(l);
                phi = big;
            }
            fn(x, phi);
            o[0] = g(phi);
        };
        for (auto& f : problem.semigroup->apply_function_lags(disc.dt, N, 1, h)) out.push_back(std::move(f.values));
        return out;
    }
    GridField s(sp.size(), 1);
    for (std::size_t i = 0; i < sp.size(); ++i)
        s.values[i] = g({problem.terminal_values.values.data() + i * l, l});
    for (std::size_t k = 0; k <= N; ++k) out.push_back(disc.lags[k].apply(sp, s).values);
    return out;
}

double weighted_norm(const TruncatedSpace& sp, const std::vector<double>& v) {
    double s = 0.0;
    for (std::size_t x = 0; x < v.size(); ++x) s += sp.weights()[x] * v[x] * v[x];
    return std::sqrt(s);
}

std::vector<double> negative_part(std::vector<double> v) {
    for (auto& x : v) x = std::min(x, 0.0);
    return v;
}

}  // namespace

RelationReport relation_audit(const SemilinearProblem& problem, const SpaceTimeField& u) {
    problem.validate();
    const TruncatedSpace& sp = problem.space();
    const std::size_t n = sp.size(), d = sp.dim(), l = problem.components();
    if (u.nodes != n || u.components != l) throw ShapeError("solution does not match the problem grid");
    RelationReport rep;
    rep.times = u.times;
    if (problem.horizon == 0.0 || u.times.size() < 2) return rep;
    const std::size_t N = u.times.size() - 1;
    if (N != problem.time_steps) throw ShapeError("solution does not match the problem time grid");
    const auto disc = detail::discretize(problem);
    const double dt = disc.dt, T = problem.horizon;
    rep.tolerance = 5.0 * dt;
    const SpaceTimeField f = driver_along(problem, u);
    const DiffusionCoefficient A = problem.semigroup->diffusion();
    const DriftField b = problem.semigroup->drift();
    const double alpha = b.sector_alpha;
    const GridField& phi = problem.terminal_values;

    // per-node scalars
    std::vector<double> norm2(N + 1), energy(N + 1), fu(N + 1), fnorm(N + 1), fu_pos(N + 1), pos2(N + 1);
    std::vector<std::vector<double>> zsq(N + 1, std::vector<double>(n)), uf(N + 1, std::vector<double>(n)),
        hatf(N + 1, std::vector<double>(n));
    for (std::size_t i = 0; i <= N; ++i) {
        const GridField ui = u.at(i), fi = f.at(i);
        norm2[i] = sp.norm_sq(ui);
        energy[i] = energy_form(sp, disc.diffusion, ui, ui);
        fu[i] = sp.inner(fi, ui);
        fnorm[i] = std::sqrt(sp.norm_sq(fi));
        GridField up = ui;
        for (auto& v : up.values) v = std::max(v, 0.0);
        fu_pos[i] = sp.inner(fi, up);
        pos2[i] = sp.norm_sq(up);
        std::vector<double> z;
        detail::sqrt_gradient(sp, disc.diffusion, ui.values, l, z);
        for (std::size_t x = 0; x < n; ++x) {
            double s = 0.0, p = 0.0, m = 0.0;
            for (std::size_t k = 0; k < l * d; ++k) s += z[x * l * d + k] * z[x * l * d + k];
            for (std::size_t c = 0; c < l; ++c) {
                p += ui(x, c) * fi(x, c);
                m += ui(x, c) * ui(x, c);
            }
            zsq[i][x] = s;
            uf[i][x] = p;
            hatf[i][x] = m > 0.0 ? p / std::sqrt(m) : 0.0;
        }
    }

    // energy inequality
    const auto E = tail_integrals(energy, dt), FU = tail_integrals(fu, dt), U2 = tail_integrals(norm2, dt);
    const double phi2 = sp.norm_sq(phi);
    rep.energy_slack.resize(N + 1);
    for (std::size_t i = 0; i <= N; ++i)
        rep.energy_slack[i] = 2.0 * FU[i] + phi2 + 2.0 * alpha * U2[i] - (norm2[i] + 2.0 * E[i]);
    rep.worst_energy_slack = *std::min_element(rep.energy_slack.begin(), rep.energy_slack.end());

    // a priori bound ratio
    {
        double fint = 0.0;
        for (std::size_t i = 0; i < N; ++i) fint += 0.5 * dt * (fnorm[i] + fnorm[i + 1]);
        const double tn = t_norm(sp, disc.diffusion, u);
        const double den = phi2 + fint * fint;
        rep.linear_bound_ratio = den > 0.0 ? tn * tn / den : 0.0;
    }

    // weak form against (1 + t) psi
    {
        const std::vector<std::function<double(std::span<const double>)>> psis = {
            [](std::span<const double>) { return 1.0; },
            [](std::span<const double> x) { return x[0]; },
            [](std::span<const double> x) { return x[0] * x[0]; },
            [](std::span<const double> x) {
                double s = 0.0;
                for (double v : x) s += v * v;
                return std::exp(-s);
            },
        };
        for (const auto& psi : psis) {
            GridField p(n, l);
            for (std::size_t x = 0; x < n; ++x) {
                const double v = psi(sp.node(x));
                for (std::size_t c = 0; c < l; ++c) p(x, c) = v;
            }
            std::vector<double> integrand(N + 1);
            for (std::size_t i = 0; i <= N; ++i) {
                const GridField ui = u.at(i);
                const double t = u.times[i];
                integrand[i] = sp.inner(ui, p) + (1.0 + t) * bilinear_form(sp, A, b, ui, p) -
                               (1.0 + t) * sp.inner(f.at(i), p);
            }
            const double lhs = tail_integrals(integrand, dt)[0];
            const double r = lhs - (1.0 + T) * sp.inner(phi, p) + sp.inner(u.at(0), p);
            rep.weak_residual.push_back(r);
            rep.worst_weak_residual = std::max(rep.worst_weak_residual, std::abs(r));
        }
    }

    // pointwise identities
    {
        const auto phi_sq = terminal_power(problem, disc, [](std::span<const double> v) {
            double s = 0.0;
            for (double x : v) s += x * x;
            return s;
        });
        const auto phi_abs = terminal_power(problem, disc, [](std::span<const double> v) {
            double s = 0.0;
            for (double x : v) s += x * x;
            return std::sqrt(s);
        });
        const auto Z = convolve(sp, disc.lags, zsq, dt);
        const auto UF = convolve(sp, disc.lags, uf, dt);
        const auto HF = convolve(sp, disc.lags, hatf, dt);
        rep.pointwise_residual.resize(N + 1);
        rep.modulus_slack.resize(N + 1);
        std::vector<double> res(n), slack(n);
        for (std::size_t i = 0; i <= N; ++i) {
            for (std::size_t x = 0; x < n; ++x) {
                double m = 0.0;
                for (std::size_t c = 0; c < l; ++c) m += u.values[(i * n + x) * l + c] * u.values[(i * n + x) * l + c];
                res[x] = m + 2.0 * Z[i][x] - phi_sq[N - i][x] - 2.0 * UF[i][x];
                slack[x] = phi_abs[N - i][x] + HF[i][x] - std::sqrt(m);
            }
            rep.pointwise_residual[i] = weighted_norm(sp, res);
            rep.modulus_slack[i] = -weighted_norm(sp, negative_part(slack));
        }
        rep.worst_pointwise_residual = *std::max_element(rep.pointwise_residual.begin(), rep.pointwise_residual.end());
        rep.worst_modulus_slack = *std::min_element(rep.modulus_slack.begin(), rep.modulus_slack.end());
    }

    // product inequality, per component
    {
        rep.product_slack.assign(N + 1, std::numeric_limits<double>::infinity());
        for (std::size_t c = 0; c < l; ++c) {
            const auto pick = [c](std::span<const double> v) { return v[c]; };
            const auto pphi = terminal_power(problem, disc, pick);
            const auto pphi2 = terminal_power(problem, disc, [c](std::span<const double> v) { return v[c] * v[c]; });
            std::vector<std::vector<double>> fc(N + 1, std::vector<double>(n));
            for (std::size_t j = 0; j <= N; ++j)
                for (std::size_t x = 0; x < n; ++x) fc[j][x] = f.values[(j * n + x) * l + c];
            const auto w = convolve(sp, disc.lags, fc, dt);
            std::vector<std::vector<double>> fp(N + 1, std::vector<double>(n)), fw(N + 1, std::vector<double>(n));
            for (std::size_t j = 0; j <= N; ++j)
                for (std::size_t x = 0; x < n; ++x) {
                    fp[j][x] = fc[j][x] * pphi[N - j][x];
                    fw[j][x] = fc[j][x] * w[j][x];
                }
            const auto L = convolve(sp, disc.lags, fp, dt);
            const auto R = convolve(sp, disc.lags, fw, dt);
            std::vector<double> slack(n);
            for (std::size_t i = 0; i <= N; ++i) {
                for (std::size_t x = 0; x < n; ++x) slack[x] = 0.5 * pphi2[N - i][x] + R[i][x] - L[i][x];
                rep.product_slack[i] = std::min(rep.product_slack[i], -weighted_norm(sp, negative_part(slack)));
            }
        }
        rep.worst_product_slack = *std::min_element(rep.product_slack.begin(), rep.product_slack.end());
    }

    // positive part
    {
        GridField pp = phi;
        for (auto& v : pp.values) v = std::max(v, 0.0);
        const double phi_pos = sp.norm_sq(pp);
        const auto FP = tail_integrals(fu_pos, dt);
        rep.positive_part_slack.resize(N + 1);
        for (std::size_t i = 0; i <= N; ++i) rep.positive_part_slack[i] = 2.0 * FP[i] + phi_pos - pos2[i];
        rep.worst_positive_part_slack =
            *std::min_element(rep.positive_part_slack.begin(), rep.positive_part_slack.end());
    }

    // maximum principle
    rep.nonnegative_data = std::all_of(phi.values.begin(), phi.values.end(), [](double v) { return v >= 0.0; }) &&
                           std::all_of(f.values.begin(), f.values.end(), [](double v) { return v >= 0.0; });
    rep.min_value = *std::min_element(u.values.begin(), u.values.end());

    // scale of the data for the violation list
    double scale = 1.0;
    for (double v : u.values) scale = std::max(scale, v * v);
    const double tol = rep.tolerance * scale;
    if (rep.worst_energy_slack < -tol) rep.violations.push_back("energy inequality");
    if (rep.worst_weak_residual > tol) rep.violations.push_back("weak form");
    if (rep.worst_pointwise_residual > tol) rep.violations.push_back("pointwise identity");
    if (rep.worst_modulus_slack < -tol) rep.violations.push_back("modulus inequality");
    if (rep.worst_product_slack < -tol) rep.violations.push_back("product inequality");
    if (rep.worst_positive_part_slack < -tol) rep.violations.push_back("positive part inequality");
    if (rep.nonnegative_data && rep.min_value < -1e-10) rep.violations.push_back("maximum principle");
    return rep;
}

}  // namespace bsdelab
