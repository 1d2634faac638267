#include "bsdelab/mild_solver.hpp"

#include <algorithm>
#include <cmath>

#include "bsdelab/errors.hpp"
#include "bsdelab/parallel.hpp"
#include "bsdelab/rng.hpp"
#include "solver_detail.hpp"

namespace bsdelab {

namespace detail {

Discretization discretize(const SemilinearProblem& problem) {
    Discretization d;
    d.times = problem.times();
    d.dt = problem.dt();
    d.lags = problem.semigroup->lag_operators(d.dt, problem.time_steps);
    d.diffusion = evaluate_on_grid(problem.space(), problem.semigroup->diffusion());
    return d;
}

std::vector<GridField> terminal_lags(const SemilinearProblem& problem, const Discretization& disc) {
    const std::size_t N = problem.time_steps;
    if (problem.terminal.fn)
        return problem.semigroup->apply_function_lags(disc.dt, N, problem.components(), problem.terminal.fn);
    std::vector<GridField> out;
    out.reserve(N + 1);
    for (std::size_t k = 0; k <= N; ++k) out.push_back(disc.lags[k].apply(problem.space(), problem.terminal_values));
    return out;
}

void sqrt_gradient(const TruncatedSpace& space, const DiffusionOnGrid& diff, std::span<const double> u,
                   std::size_t l, std::vector<double>& z) {
    const std::size_t n = space.size(), d = space.dim();
    std::vector<double> g(n * l * d);
    for (std::size_t c = 0; c < l; ++c)
        space.gradient_scalar({u.data() + c, u.size() - c}, l, {g.data() + c * d, g.size() - c * d}, l * d);
    z.assign(n * l * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto root = diff.sqrt_at(i);
        for (std::size_t c = 0; c < l; ++c) {
            const double* gi = g.data() + (i * l + c) * d;
            double* zi = z.data() + (i * l + c) * d;
            for (std::size_t a = 0; a < d; ++a) {
                double s = 0.0;
                for (std::size_t b = 0; b < d; ++b) s += root[a * d + b] * gi[b];
                zi[a] = s;
            }
        }
    }
}

void eval_driver(const SemilinearProblem& problem, const DiffusionOnGrid& diff, double t,
                 std::span<const double> u, double shift, std::span<double> out) {
    const TruncatedSpace& sp = problem.space();
    const std::size_t n = sp.size(), d = sp.dim(), l = problem.components();
    std::vector<double> z;
    if (!problem.driver.source_only) sqrt_gradient(sp, diff, u, l, z);
    else z.assign(n * l * d, 0.0);
    const Driver& f = problem.driver;
    parallel_blocks(n, 64, [&](std::size_t i0, std::size_t i1) {
        for (std::size_t i = i0; i < i1; ++i) {
            const std::span<const double> y{u.data() + i * l, l};
            const std::span<double> o{out.data() + i * l, l};
            f.eval(t, sp.node(i), y, {z.data() + i * l * d, l * d}, o);
            if (shift != 0.0)
                for (std::size_t c = 0; c < l; ++c) o[c] -= shift * y[c];
        }
    });
}

double interior_sup(const TruncatedSpace& sp, const SpaceTimeField& u) {
    const std::size_t n = sp.size(), q = sp.quad_order(), l = u.components;
    double s = 0.0;
    for (std::size_t x = 0; x < n; ++x) {
        bool edge = false;
        for (std::size_t k = 0; k < sp.dim(); ++k) {
            const std::size_t a = (x / sp.stride(k)) % q;
            edge = edge || (q > 2 && (a == 0 || a + 1 == q));
        }
        if (edge) continue;
        for (std::size_t i = 0; i < u.times.size(); ++i)
            for (std::size_t c = 0; c < l; ++c) s = std::max(s, std::abs(u.values[(i * n + x) * l + c]));
    }
    return s;
}

double sup_abs(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s = std::max(s, std::abs(x));
    return s;
}

double f0_sup(const SemilinearProblem& problem) {
    const TruncatedSpace& sp = problem.space();
    const std::size_t l = problem.components();
    std::vector<double> out(l);
    double s = problem.driver.f0_bound;
    for (double t : problem.times())
        for (std::size_t i = 0; i < sp.size(); ++i) {
            problem.driver.f0(t, sp.node(i), out);
            s = std::max(s, sup_abs(out));
        }
    return s;
}

double f0_energy(const SemilinearProblem& problem) {
    const TruncatedSpace& sp = problem.space();
    const std::size_t l = problem.components();
    const auto times = problem.times();
    double total = 0.0, prev = 0.0;
    for (std::size_t k = 0; k < times.size(); ++k) {
        const GridField f0 = sp.sample(l, [&](std::span<const double> x, std::span<double> o) {
            problem.driver.f0(times[k], x, o);
        });
        const double e = sp.norm_sq(f0);
        if (k > 0) total += 0.5 * (times[k] - times[k - 1]) * (e + prev);
        prev = e;
    }
    return total;
}

namespace {

double uniform_of(double g) { return 0.5 * std::erfc(-g / std::sqrt(2.0)); }

}  // namespace

double sampled_lipschitz_y(const Driver& f, double radius, double horizon, bool subtract_rate, std::size_t samples,
                           std::uint64_t seed) {
    const std::size_t l = f.components, d = f.dim;
    std::vector<double> x(d), y(l), y2(l), z(l * d), a(l), b(l);
    std::vector<double> g(1 + d + 3 * l + l * d + 1);
    double best = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        const NormalStream stream(seed, stream_tag::driver_audit, s);
        stream.fill(0, g);
        std::size_t q = 0;
        const double t = horizon * uniform_of(g[q++]);
        for (auto& v : x) v = g[q++];
        // a point in the ball and a partner at a log-uniform separation
        double norm = 0.0;
        for (auto& v : y) {
            v = g[q++];
            norm += v * v;
        }
        norm = std::sqrt(norm);
        const double rad = radius * std::pow(uniform_of(g[q++]), 1.0 / static_cast<double>(l));
        for (auto& v : y) v = norm > 0.0 ? v / norm * rad : 0.0;
        const double sep = radius * std::pow(10.0, -6.0 * uniform_of(g[q++]));
        double dn = 0.0;
        for (std::size_t c = 0; c < l; ++c) {
            y2[c] = g[q++];
            dn += y2[c] * y2[c];
        }
        dn = std::sqrt(dn);
        for (std::size_t c = 0; c < l; ++c) y2[c] = y[c] + (dn > 0.0 ? y2[c] / dn * sep : sep);
        for (auto& v : z) v = g[q++];
        f.eval(t, x, y, z, a);
        f.eval(t, x, y2, z, b);
        const double mu = subtract_rate ? f.mono_rate(t) : 0.0;
        double num = 0.0, den = 0.0;
        for (std::size_t c = 0; c < l; ++c) {
            const double dv = (a[c] - mu * y[c]) - (b[c] - mu * y2[c]);
            num += dv * dv;
            den += (y[c] - y2[c]) * (y[c] - y2[c]);
        }
        if (den > 0.0) best = std::max(best, std::sqrt(num / den));
    }
    return best;
}

}  // namespace detail

using detail::trapezoid_weight;

std::vector<double> SemilinearProblem::times() const {
    if (horizon == 0.0) return {0.0};
    return uniform_times(horizon, time_steps);
}

void SemilinearProblem::validate() const {
    if (!semigroup) throw ConfigError("problem has no semigroup");
    space().check_field(terminal_values);
    if (!(horizon >= 0.0) || !std::isfinite(horizon)) throw ConfigError("horizon must be finite and nonnegative");
    if (horizon > 0.0 && time_steps < 2) throw ConfigError("at least two time steps are required");
    driver.check();
    if (driver.dim != space().dim())
        throw ConfigError("driver dimension " + std::to_string(driver.dim) + " does not match space dimension " +
                          std::to_string(space().dim()));
    if (driver.components != terminal_values.components)
        throw ConfigError("driver has " + std::to_string(driver.components) + " components, terminal has " +
                          std::to_string(terminal_values.components));
    for (double v : terminal_values.values)
        if (!std::isfinite(v)) throw ConfigError("terminal condition is not bounded on the grid");
}

SemilinearProblem make_problem(std::shared_ptr<const Semigroup> sg, Terminal terminal, Driver driver, double horizon,
                               std::size_t time_steps) {
    if (!sg) throw ConfigError("problem has no semigroup");
    if (!terminal.fn) throw ConfigError("terminal '" + terminal.name + "' has no evaluator");
    SemilinearProblem p;
    p.semigroup = std::move(sg);
    p.terminal_values = p.space().sample(terminal.components, terminal.fn);
    p.terminal = std::move(terminal);
    p.driver = std::move(driver);
    p.horizon = horizon;
    p.time_steps = time_steps;
    p.validate();
    return p;
}

namespace {

SpaceTimeField terminal_only(const SemilinearProblem& problem) {
    SpaceTimeField u({0.0}, problem.space().size(), problem.components());
    u.set(0, problem.terminal_values);
    return u;
}

}  // namespace

SpaceTimeField solve_linear(const SemilinearProblem& problem) {
    problem.validate();
    if (!problem.driver.source_only) throw PreconditionError("solve_linear needs a driver that depends on (t, x) only");
    if (problem.horizon == 0.0) return terminal_only(problem);
    const TruncatedSpace& sp = problem.space();
    const std::size_t N = problem.time_steps, n = sp.size(), l = problem.components();
    const auto disc = detail::discretize(problem);
    const auto term = detail::terminal_lags(problem, disc);
    SpaceTimeField u(disc.times, n, l);
    for (std::size_t i = 0; i <= N; ++i) {
        auto s = u.slice(i);
        std::copy(term[N - i].values.begin(), term[N - i].values.end(), s.begin());
    }
    const bool function_route = problem.semigroup->spec().kind == SemigroupKind::ou_analytic;
    for (std::size_t j = 0; j <= N; ++j) {
        const double tj = disc.times[j];
        if (function_route) {
            // P_{k dt} f_{t_j} from f itself, k = 0..j
            const PointMap fj = [&](std::span<const double> x, std::span<double> o) { problem.driver.f0(tj, x, o); };
            const auto lags = problem.semigroup->apply_function_lags(disc.dt, j, l, fj);
            for (std::size_t i = 0; i <= j; ++i) {
                const double w = disc.dt * trapezoid_weight(i, j, N);
                if (w == 0.0) continue;
                auto s = u.slice(i);
                const auto& v = lags[j - i].values;
                for (std::size_t q = 0; q < s.size(); ++q) s[q] += w * v[q];
            }
        } else {
            const GridField fj = sp.sample(l, [&](std::span<const double> x, std::span<double> o) {
                problem.driver.f0(tj, x, o);
            });
            for (std::size_t i = 0; i <= j && i < N; ++i)
                disc.lags[j - i].apply_add(sp, fj.values, l, disc.dt * trapezoid_weight(i, j, N), u.slice(i));
        }
    }
    return u;
}

namespace {

double window_norm(const TruncatedSpace& sp, const DiffusionOnGrid& diff, const std::vector<GridField>& delta,
                   double dt) {
    double sup = 0.0, energy = 0.0, prev = 0.0;
    for (std::size_t k = 0; k < delta.size(); ++k) {
        sup = std::max(sup, sp.norm_sq(delta[k]));
        const double e = energy_form(sp, diff, delta[k], delta[k]);
        if (k > 0) energy += 0.5 * dt * (e + prev);
        prev = e;
    }
    // the difference vanishes at the window's right end
    energy += 0.5 * dt * prev;
    return std::sqrt(sup + energy);
}

struct RateInfo {
    std::vector<double> alpha;  // alpha at each node
    std::vector<double> mu;
    double sup_mu = 0.0;
    bool zero = true;
};

RateInfo rates(const SemilinearProblem& problem, const std::vector<double>& times) {
    RateInfo r;
    for (double t : times) {
        r.alpha.push_back(problem.driver.alpha(t));
        r.mu.push_back(problem.driver.mono_rate(t));
        r.sup_mu = std::max(r.sup_mu, std::abs(r.mu.back()));
        if (r.mu.back() != 0.0 || r.alpha.back() != 0.0) r.zero = false;
    }
    return r;
}

}  // namespace

std::pair<SpaceTimeField, SolveReport> picard_lipschitz(const SemilinearProblem& problem,
                                                        const PicardSettings& settings) {
    problem.validate();
    const Driver& f = problem.driver;
    if (f.monotone_only() && settings.y_radius <= 0.0)
        throw PreconditionError("driver '" + f.name + "' has no y-Lipschitz constant; use the monotone pipeline");
    SolveReport rep;
    rep.method = "picard";
    rep.lipschitz_z = f.lipschitz_z;
    rep.alpha = problem.semigroup->drift().sector_alpha;
    if (problem.horizon == 0.0) {
        rep.converged = true;
        return {terminal_only(problem), rep};
    }
    const TruncatedSpace& sp = problem.space();
    if (f.source_only) {
        // the map is constant: one application is the fixed point
        SpaceTimeField u = solve_linear(problem);
        rep.iterations = 1;
        rep.converged = true;
        const double tn = t_norm(sp, problem.semigroup->diffusion(), u);
        rep.energy_lhs = tn * tn;
        rep.energy_bound = std::exp(problem.horizon * (1.0 + 2.0 * rep.alpha)) *
                           (sp.norm_sq(problem.terminal_values) + detail::f0_energy(problem));
        rep.energy_slack = rep.energy_bound - rep.energy_lhs;
        return {std::move(u), std::move(rep)};
    }
    const std::size_t N = problem.time_steps, n = sp.size(), l = problem.components(), width = n * l;
    const double T = problem.horizon;
    const auto disc = detail::discretize(problem);
    const double dt = disc.dt;
    const RateInfo rate = rates(problem, disc.times);

    const double phi_sup = detail::sup_abs(problem.terminal_values.values);
    const double radius = settings.y_radius > 0.0 ? settings.y_radius
                                                  : 4.0 * (1.0 + phi_sup + T * detail::f0_sup(problem));
    // y-Lipschitz constant of g = f - mu y, which is what the iteration sees
    double cy = detail::sampled_lipschitz_y(f, radius, T, true, 4096, 17);
    if (rate.zero && !f.monotone_only()) cy = std::min(cy, f.lipschitz_y);
    const double cz = f.lipschitz_z;
    rep.lipschitz_y = cy;

    // window length from the contraction constant of the fixed-point map
    double sup_rate = 0.0;
    for (double m : rate.mu) sup_rate = std::max(sup_rate, m);
    const double alpha_eff = rep.alpha + sup_rate;
    const double K = alpha_eff == 0.0 ? 6.0 : 28.0;
    const auto M = [&](double h) { return 2.0 * K * (cy * cy * h + cz * cz); };
    double h = M(T) > 0.0 ? std::min(T, 1.0 / (2.0 * M(T))) : T;
    if (alpha_eff > 0.0) h = std::min(h, 0.25 / alpha_eff);
    const std::size_t steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(h / dt + 1e-9)));
    rep.window_length = static_cast<double>(steps) * dt;

    const auto term = detail::terminal_lags(problem, disc);
    std::vector<std::vector<double>> phi(N + 1);
    for (std::size_t i = 0; i <= N; ++i) {
        phi[i] = term[N - i].values;
        const double e = std::exp(rate.alpha[N] - rate.alpha[i]);
        if (e != 1.0)
            for (auto& v : phi[i]) v *= e;
    }

    SpaceTimeField u(disc.times, n, l);
    std::vector<std::vector<double>> g(N + 1, std::vector<double>(width, 0.0));
    std::copy(phi[N].begin(), phi[N].end(), u.slice(N).begin());
    detail::eval_driver(problem, disc.diffusion, disc.times[N], u.slice(N), rate.mu[N], g[N]);

    // integral term over nodes j in [j0, j1) into out_i
    const auto accumulate = [&](std::size_t i, std::size_t j0, std::size_t j1, std::span<double> out) {
        for (std::size_t j = std::max(i, j0); j < j1; ++j) {
            const double w = dt * trapezoid_weight(i, j, N) * std::exp(rate.alpha[j] - rate.alpha[i]);
            if (w != 0.0) disc.lags[j - i].apply_add(sp, g[j], l, w, out);
        }
    };

    std::size_t ib = N;
    while (ib > 0) {
        const std::size_t ia = ib >= steps ? ib - steps : 0;
        const std::size_t W = ib - ia;
        WindowReport win;
        win.first = ia;
        win.last = ib;
        win.contraction_bound = std::sqrt(M(static_cast<double>(W) * dt) * static_cast<double>(W) * dt);

        std::vector<std::vector<double>> base(W, std::vector<double>(width));
        parallel_blocks(W, 1, [&](std::size_t k0, std::size_t k1) {
            for (std::size_t k = k0; k < k1; ++k) {
                const std::size_t i = ia + k;
                base[k] = phi[i];
                accumulate(i, ib, N + 1, base[k]);
            }
        });
        std::vector<std::vector<double>> cur(W);
        for (std::size_t k = 0; k < W; ++k) {
            if (settings.initial) {
                const auto s = settings.initial->slice(ia + k);
                cur[k].assign(s.begin(), s.end());
            } else {
                cur[k] = base[k];
            }
        }
        bool done = false;
        std::vector<GridField> delta(W + 0, GridField(n, l));
        std::vector<GridField> level(W, GridField(n, l));
        for (std::size_t it = 1; it <= settings.max_iter; ++it) {
            for (std::size_t k = 0; k < W; ++k)
                detail::eval_driver(problem, disc.diffusion, disc.times[ia + k], cur[k], rate.mu[ia + k], g[ia + k]);
            std::vector<std::vector<double>> next(base);
            parallel_blocks(W, 1, [&](std::size_t k0, std::size_t k1) {
                for (std::size_t k = k0; k < k1; ++k) accumulate(ia + k, ia, ib, next[k]);
            });
            for (std::size_t k = 0; k < W; ++k) {
                for (std::size_t q = 0; q < width; ++q) delta[k].values[q] = next[k][q] - cur[k][q];
                level[k].values = next[k];
            }
            const double diff = window_norm(sp, disc.diffusion, delta, dt);
            const double scale = std::max(1.0, window_norm(sp, disc.diffusion, level, dt));
            if (!win.errors.empty() && win.errors.back() > 0.0) win.ratios.push_back(diff / win.errors.back());
            win.errors.push_back(diff);
            win.iterations = it;
            cur = std::move(next);
            if (diff <= settings.tol * scale) {
                done = true;
                break;
            }
        }
        for (std::size_t k = 0; k < W; ++k) {
            std::copy(cur[k].begin(), cur[k].end(), u.slice(ia + k).begin());
            detail::eval_driver(problem, disc.diffusion, disc.times[ia + k], cur[k], rate.mu[ia + k], g[ia + k]);
        }
        rep.iterations += win.iterations;
        rep.errors.insert(rep.errors.end(), win.errors.begin(), win.errors.end());
        rep.ratios.insert(rep.ratios.end(), win.ratios.begin(), win.ratios.end());
        rep.windows.push_back(std::move(win));
        if (!done) {
            rep.converged = false;
            throw ConvergenceError("Picard iteration did not converge on window [" + std::to_string(ia) + ", " +
                                       std::to_string(ib) + ")",
                                   rep);
        }
        ib = ia;
    }
    rep.converged = true;

    // a priori bound with C the larger of the two Lipschitz constants of f itself
    const double cy_f = f.monotone_only()
                            ? detail::sampled_lipschitz_y(f, radius, T, false, 4096, 19)
                            : f.lipschitz_y;
    const double C = std::max(cy_f, cz);
    const double tn = t_norm(sp, disc.diffusion, u);
    rep.energy_lhs = tn * tn;
    rep.energy_bound = std::exp(T * (1.0 + 2.0 * C + C * C + 2.0 * rep.alpha)) *
                       (sp.norm_sq(problem.terminal_values) + detail::f0_energy(problem));
    rep.energy_slack = rep.energy_bound - rep.energy_lhs;
    return {std::move(u), std::move(rep)};
}

GaugedProblem gauge_transform(const SemilinearProblem& problem) {
    problem.validate();
    GaugedProblem g;
    g.alpha = problem.driver.alpha;
    g.mono_rate = problem.driver.mono_rate;
    g.problem = problem;
    const auto alpha = problem.driver.alpha;
    const auto mu = problem.driver.mono_rate;
    const double eT = std::exp(alpha(problem.horizon));
    for (auto& v : g.problem.terminal_values.values) v *= eT;
    if (problem.terminal.fn) {
        const auto fn = problem.terminal.fn;
        g.problem.terminal.fn = [fn, eT](std::span<const double> x, std::span<double> out) {
            fn(x, out);
            for (auto& v : out) v *= eT;
        };
    }
    const Driver f = problem.driver;
    Driver& s = g.problem.driver;
    s.name = f.name + "*";
    s.eval = [f](double t, std::span<const double> x, std::span<const double> y, std::span<const double> z,
                 std::span<double> out) {
        const double a = f.alpha(t), e = std::exp(-a), m = f.mono_rate(t);
        std::vector<double> ys(y.size()), zs(z.size());
        for (std::size_t c = 0; c < y.size(); ++c) ys[c] = e * y[c];
        for (std::size_t c = 0; c < z.size(); ++c) zs[c] = e * z[c];
        f.eval(t, x, ys, zs, out);
        for (std::size_t c = 0; c < out.size(); ++c) out[c] = out[c] / e - m * y[c];
    };
    double sup_mu = 0.0, sup_alpha = 0.0;
    for (double t : problem.times()) {
        sup_mu = std::max(sup_mu, std::abs(mu(t)));
        sup_alpha = std::max(sup_alpha, alpha(t));
    }
    s.lipschitz_y = f.lipschitz_y + sup_mu;
    s.mono_rate = [](double) { return 0.0; };
    s.alpha = [](double) { return 0.0; };
    s.f0_bound = f.f0_bound * std::exp(sup_alpha);
    s.growth_r = [f](double t, std::span<const double> x, double r) {
        const double a = f.alpha(t);
        return std::exp(a) * f.growth(t, x, std::exp(-a) * r) + std::abs(f.mono_rate(t)) * r;
    };
    return g;
}

SpaceTimeField GaugedProblem::invert(const SpaceTimeField& u_star) const {
    SpaceTimeField u = u_star;
    for (std::size_t i = 0; i < u.times.size(); ++i) {
        const double e = std::exp(-alpha(u.times[i]));
        for (auto& v : u.slice(i)) v *= e;
    }
    return u;
}

SemilinearProblem GaugedProblem::restore() const {
    SemilinearProblem p = problem;
    const auto a = alpha;
    const auto m = mono_rate;
    const double eT = std::exp(-a(problem.horizon));
    for (auto& v : p.terminal_values.values) v *= eT;
    if (problem.terminal.fn) {
        const auto fn = problem.terminal.fn;
        p.terminal.fn = [fn, eT](std::span<const double> x, std::span<double> out) {
            fn(x, out);
            for (auto& v : out) v *= eT;
        };
    }
    const Driver s = problem.driver;
    Driver& f = p.driver;
    if (f.name.size() > 1 && f.name.back() == '*') f.name.pop_back();
    f.eval = [s, a, m](double t, std::span<const double> x, std::span<const double> y, std::span<const double> z,
                       std::span<double> out) {
        const double e = std::exp(a(t)), mu = m(t);
        std::vector<double> ys(y.size()), zs(z.size());
        for (std::size_t c = 0; c < y.size(); ++c) ys[c] = e * y[c];
        for (std::size_t c = 0; c < z.size(); ++c) zs[c] = e * z[c];
        s.eval(t, x, ys, zs, out);
        for (std::size_t c = 0; c < out.size(); ++c) out[c] = out[c] / e + mu * y[c];
    };
    f.mono_rate = m;
    f.alpha = a;
    return p;
}

std::pair<SpaceTimeField, SolveReport> solve(const SemilinearProblem& problem, const PicardSettings& picard,
                                             const MonotoneSettings& monotone) {
    problem.validate();
    bool gauged = false;
    for (double t : problem.times())
        if (problem.driver.mono_rate(t) != 0.0 || problem.driver.alpha(t) != 0.0) gauged = true;
    if (problem.driver.source_only) {
        SolveReport rep;
        rep.method = "linear";
        rep.iterations = 1;
        rep.converged = true;
        rep.alpha = problem.semigroup->drift().sector_alpha;
        return {solve_linear(problem), rep};
    }
    if (!problem.driver.monotone_only()) return picard_lipschitz(problem, picard);
    if (!gauged) return solve_monotone(problem, monotone);
    const GaugedProblem g = gauge_transform(problem);
    auto [u_star, rep] = solve_monotone(g.problem, monotone);
    rep.method += "+gauge";
    return {g.invert(u_star), rep};
}

SpaceTimeField driver_along(const SemilinearProblem& problem, const SpaceTimeField& u) {
    const DiffusionOnGrid diff = evaluate_on_grid(problem.space(), problem.semigroup->diffusion());
    SpaceTimeField f(u.times, u.nodes, u.components);
    for (std::size_t i = 0; i < u.times.size(); ++i)
        detail::eval_driver(problem, diff, u.times[i], u.slice(i), 0.0, f.slice(i));
    return f;
}

}  // namespace bsdelab
