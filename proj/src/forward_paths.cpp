#include "bsdelab/forward_paths.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "bsdelab/errors.hpp"
#include "bsdelab/parallel.hpp"
#include "bsdelab/rng.hpp"

namespace bsdelab {

namespace {

constexpr std::size_t path_block = 1024;

}  // namespace

PathEnsemble sample(const Semigroup& sg, const PathSpec& spec) {
    const SemigroupSpec& s = sg.spec();
    const std::size_t d = sg.space().dim();
    if (spec.steps < 1 || spec.paths < 1) throw ConfigError("paths and steps must be at least 1");
    if (spec.paths > max_paths) throw ConfigError("at most " + std::to_string(max_paths) + " paths");
    if (!(spec.horizon > 0.0)) throw ConfigError("path horizon must be positive");
    if (!spec.start.empty() && spec.start.size() != d)
        throw ConfigError("start point has " + std::to_string(spec.start.size()) + " coordinates but dim is " +
                          std::to_string(d));
    PathEnsemble e;
    e.paths = spec.paths;
    e.steps = spec.steps;
    e.dim = d;
    e.horizon = spec.horizon;
    e.dt = spec.horizon / static_cast<double>(spec.steps);
    e.seed = spec.seed;
    e.from_measure = spec.start.empty();
    const std::size_t N = e.steps, M = e.paths;
    e.states.assign(M * (N + 1) * d, 0.0);
    e.increments.assign(M * N * d, 0.0);
    const double h = e.dt;

    // exact OU step per axis: M increment sqrt(C h) g1, innovation b g1 + c g2
    std::vector<double> decay(d), m_sd(d), mix(d), rest(d);
    for (std::size_t k = 0; k < d; ++k) {
        const double lam = s.lambdas[k], C = s.noise[k];
        decay[k] = std::exp(lam * h);
        const double var_m = C * h;
        const double var_x = s.q(k, h);
        const double cov = C * std::expm1(lam * h) / lam;
        m_sd[k] = std::sqrt(var_m);
        mix[k] = cov / m_sd[k];
        rest[k] = std::sqrt(std::max(0.0, var_x - mix[k] * mix[k]));
    }
    const std::size_t sub =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(static_cast<double>(s.steps) * h - 1e-9)));
    const double hs = h / static_cast<double>(sub);
    std::vector<double> ref_sd(d);
    for (std::size_t k = 0; k < d; ++k) ref_sd[k] = std::sqrt(sg.space().axis_variances()[k]);

    parallel_blocks(M, path_block, [&](std::size_t p0, std::size_t p1) {
        std::vector<double> g(2 * d), x(d), z(d);
        for (std::size_t p = p0; p < p1; ++p) {
            const NormalStream stream(spec.seed, stream_tag::forward_paths, p);
            double* X = e.states.data() + p * (N + 1) * d;
            double* dM = e.increments.data() + p * N * d;
            if (e.from_measure) {
                const NormalStream init(spec.seed, stream_tag::initial_state, p);
                for (std::size_t k = 0; k < d; ++k) X[k] = ref_sd[k] * init.at(k);
            } else {
                std::copy(spec.start.begin(), spec.start.end(), X);
            }
            for (std::size_t n = 0; n < N; ++n) {
                const double* xn = X + n * d;
                double* xm = X + (n + 1) * d;
                double* m = dM + n * d;
                if (s.kind == SemigroupKind::ou_analytic) {
                    stream.fill(2 * n * d, g);
                    for (std::size_t k = 0; k < d; ++k) {
                        m[k] = m_sd[k] * g[2 * k];
                        xm[k] = decay[k] * xn[k] + mix[k] * g[2 * k] + rest[k] * g[2 * k + 1];
                    }
                } else {
                    std::copy(xn, xn + d, x.begin());
                    std::fill(m, m + d, 0.0);
                    for (std::size_t q = 0; q < sub; ++q) {
                        stream.fill((n * sub + q) * d, z);
                        sg.euler_step(x, hs, z);
                        for (std::size_t k = 0; k < d; ++k) m[k] += std::sqrt(s.noise[k] * hs) * z[k];
                    }
                    std::copy(x.begin(), x.end(), xm);
                }
            }
        }
    });
    return e;
}

void write_ensemble(const PathEnsemble& e, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path);
    out << e.paths << ' ' << e.steps << ' ' << e.dim << ' ' << e.horizon << ' ' << e.seed << '\n';
    const auto put = [&](const std::vector<double>& v) {
        for (double x : v) {
            auto bits = std::bit_cast<std::uint64_t>(x);
            if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
            out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
        }
    };
    put(e.states);
    put(e.increments);
}

PathEnsemble read_ensemble(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path);
    PathEnsemble e;
    in >> e.paths >> e.steps >> e.dim >> e.horizon >> e.seed;
    in.get();
    if (!in || e.steps == 0) throw ConfigError("bad ensemble header in " + path);
    e.dt = e.horizon / static_cast<double>(e.steps);
    const auto get = [&](std::vector<double>& v, std::size_t count) {
        v.resize(count);
        for (auto& x : v) {
            std::uint64_t bits = 0;
            in.read(reinterpret_cast<char*>(&bits), sizeof bits);
            if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
            x = std::bit_cast<double>(bits);
        }
    };
    get(e.states, e.paths * (e.steps + 1) * e.dim);
    get(e.increments, e.paths * e.steps * e.dim);
    if (!in) throw ConfigError("truncated ensemble file " + path);
    return e;
}

MeanSe mean_se(std::span<const double> v) {
    MeanSe r;
    if (v.empty()) return r;
    const auto sums = block_sum(v.size(), reduction_block, 1, [&](std::size_t a, std::size_t b, double* acc) {
        for (std::size_t q = a; q < b; ++q) acc[0] += v[q];
    });
    r.mean = sums[0] / static_cast<double>(v.size());
    if (v.size() < 2) return r;
    const auto sq = block_sum(v.size(), reduction_block, 1, [&](std::size_t a, std::size_t b, double* acc) {
        for (std::size_t q = a; q < b; ++q) acc[0] += (v[q] - r.mean) * (v[q] - r.mean);
    });
    r.se = std::sqrt(sq[0] / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
    return r;
}

BracketReport bracket_residual(const PathEnsemble& e, const DiffusionCoefficient& A, std::size_t node) {
    const std::size_t d = e.dim, M = e.paths;
    if (A.dim != d) throw ShapeError("diffusion dimension does not match the ensemble");
    if (node == SIZE_MAX) node = e.steps;
    if (node > e.steps) throw ShapeError("bracket node beyond the last step");
    BracketReport rep;
    rep.node = node;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) pairs.emplace_back(i, j);
    const std::size_t P = pairs.size();
    std::vector<double> emp(P * M), expct(P * M);
    parallel_blocks(M, path_block, [&](std::size_t p0, std::size_t p1) {
        std::vector<double> a(d * d), prev(d * d);
        for (std::size_t p = p0; p < p1; ++p) {
            std::vector<double> se(P, 0.0), si(P, 0.0);
            A.eval(e.state(p, 0), prev);
            for (std::size_t k = 0; k < node; ++k) {
                const auto m = e.increment(p, k);
                A.eval(e.state(p, k + 1), a);
                for (std::size_t q = 0; q < P; ++q) {
                    const auto [i, j] = pairs[q];
                    se[q] += m[i] * m[j];
                    si[q] += e.dt * (prev[i * d + j] + a[i * d + j]);  // 2 * trapezoid
                }
                std::swap(a, prev);
            }
            for (std::size_t q = 0; q < P; ++q) {
                emp[q * M + p] = se[q];
                expct[q * M + p] = si[q];
            }
        }
    });
    std::vector<double> diff(M);
    for (std::size_t q = 0; q < P; ++q) {
        BracketEntry b;
        b.i = pairs[q].first;
        b.j = pairs[q].second;
        const std::span<const double> es{emp.data() + q * M, M}, xs{expct.data() + q * M, M};
        b.empirical = mean_se(es);
        b.expected = mean_se(xs);
        for (std::size_t p = 0; p < M; ++p) diff[p] = es[p] - xs[p];
        b.residual = mean_se(diff);
        rep.entries.push_back(b);
    }
    return rep;
}

namespace {

// time interval and weight for linear interpolation
std::pair<std::size_t, double> locate(const std::vector<double>& times, double t) {
    if (times.size() < 2) return {0, 0.0};
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    std::size_t i = it == times.begin() ? 0 : static_cast<std::size_t>(it - times.begin()) - 1;
    i = std::min(i, times.size() - 2);
    const double w = std::clamp((t - times[i]) / (times[i + 1] - times[i]), 0.0, 1.0);
    return {i, w};
}

}  // namespace

void evaluate_field(const TruncatedSpace& sp, const SpaceTimeField& u, double t, std::span<const double> x,
                    std::span<double> out) {
    const std::size_t n = sp.size(), l = u.components;
    thread_local std::vector<double> w;
    w.resize(n);
    sp.point_weights(x, w);
    const auto [i, s] = locate(u.times, t);
    std::fill(out.begin(), out.end(), 0.0);
    const auto a = u.slice(i);
    for (std::size_t q = 0; q < n; ++q)
        for (std::size_t c = 0; c < l; ++c) out[c] += w[q] * a[q * l + c];
    if (s > 0.0) {
        const auto b = u.slice(i + 1);
        for (std::size_t q = 0; q < n; ++q)
            for (std::size_t c = 0; c < l; ++c) out[c] += s * w[q] * (b[q * l + c] - a[q * l + c]);
    }
}

std::vector<GradientField> gradients(const TruncatedSpace& sp, const SpaceTimeField& u) {
    std::vector<GradientField> g;
    g.reserve(u.times.size());
    for (std::size_t i = 0; i < u.times.size(); ++i) g.push_back(sp.gradient(u.at(i)));
    return g;
}

void evaluate_gradient(const TruncatedSpace& sp, const std::vector<GradientField>& grads,
                       const std::vector<double>& times, double t, std::span<const double> x, std::span<double> out) {
    const std::size_t n = sp.size();
    const std::size_t width = grads.front().components * grads.front().dim;
    thread_local std::vector<double> w;
    w.resize(n);
    sp.point_weights(x, w);
    const auto [i, s] = locate(times, t);
    std::fill(out.begin(), out.end(), 0.0);
    const auto& a = grads[i].values;
    for (std::size_t q = 0; q < n; ++q)
        for (std::size_t k = 0; k < width; ++k) out[k] += w[q] * a[q * width + k];
    if (s > 0.0) {
        const auto& b = grads[i + 1].values;
        for (std::size_t q = 0; q < n; ++q)
            for (std::size_t k = 0; k < width; ++k) out[k] += s * w[q] * (b[q * width + k] - a[q * width + k]);
    }
}

ItoReport ito_residual(const PathEnsemble& e, const TruncatedSpace& sp, const DiffusionCoefficient& A,
                       const SpaceTimeField& u, const Driver& f) {
    const std::size_t d = e.dim, l = u.components, M = e.paths, N = e.steps;
    if (sp.dim() != d || A.dim != d) throw ShapeError("ensemble, space and diffusion dimensions differ");
    if (u.nodes != sp.size()) throw ShapeError("field does not live on the space's grid");
    if (f.components != l || f.dim != d) throw ShapeError("driver shape does not match the field");
    if (u.times.empty() || std::abs(u.times.back() - e.horizon) > 1e-12 * std::max(1.0, e.horizon))
        throw ShapeError("field and ensemble horizons differ");
    const auto grads = gradients(sp, u);
    ItoReport rep;
    rep.residual.assign(M * l, 0.0);
    std::vector<double> sq(M);
    parallel_blocks(M, path_block, [&](std::size_t p0, std::size_t p1) {
        std::vector<double> v0(l), v1(l), grad(l * d), a(d * d), root(d * d), z(l * d), fv(l);
        for (std::size_t p = p0; p < p1; ++p) {
            double* R = rep.residual.data() + p * l;
            evaluate_field(sp, u, e.horizon, e.state(p, N), v1);
            evaluate_field(sp, u, 0.0, e.state(p, 0), v0);
            for (std::size_t c = 0; c < l; ++c) R[c] = v1[c] - v0[c];
            for (std::size_t k = 0; k < N; ++k) {
                const double t = e.time(k);
                const auto x = e.state(p, k);
                const auto m = e.increment(p, k);
                evaluate_gradient(sp, grads, u.times, t, x, grad);
                for (std::size_t c = 0; c < l; ++c)
                    for (std::size_t i = 0; i < d; ++i) R[c] -= grad[c * d + i] * m[i];
                if (f.eval) {
                    evaluate_field(sp, u, t, x, v0);
                    A.eval(x, a);
                    double lo = 0.0, hi = 0.0;
                    symmetric_sqrt(a, d, root, lo, hi);
                    for (std::size_t c = 0; c < l; ++c)
                        for (std::size_t i = 0; i < d; ++i) {
                            double s = 0.0;
                            for (std::size_t j = 0; j < d; ++j) s += root[i * d + j] * grad[c * d + j];
                            z[c * d + i] = s;
                        }
                    f.eval(t, x, v0, z, fv);
                    for (std::size_t c = 0; c < l; ++c) R[c] += fv[c] * e.dt;
                }
            }
            double s = 0.0;
            for (std::size_t c = 0; c < l; ++c) s += R[c] * R[c];
            sq[p] = s;
        }
    });
    std::vector<double> first(M);
    for (std::size_t p = 0; p < M; ++p) first[p] = rep.residual[p * l];
    rep.mean = mean_se(first);
    rep.mean_square = mean_se(sq);
    return rep;
}

}  // namespace bsdelab
