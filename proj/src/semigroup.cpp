#include "bsdelab/semigroup.hpp"

#include <algorithm>
#include <cmath>

#include "bsdelab/errors.hpp"
#include "bsdelab/parallel.hpp"
#include "bsdelab/rng.hpp"

namespace bsdelab {

DriftPerturbation DriftPerturbation::named(const std::string& name, std::size_t dim) {
    DriftPerturbation p;
    p.name = name;
    if (name == "none") {
        p.eval = [](std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); };
        return p;
    }
    if (name == "dissipative_cubic") {
        // F_k(x) = -x_k^3 / (1 + x_k^2): Lipschitz with constant 9/8, F' in [-9/8, 0]
        p.eval = [](std::span<const double> x, std::span<double> out) {
            for (std::size_t k = 0; k < x.size(); ++k) out[k] = -x[k] * x[k] * x[k] / (1.0 + x[k] * x[k]);
        };
        p.lipschitz = 1.125;
        p.divergence_floor = -1.125 * static_cast<double>(dim);
        return p;
    }
    throw ConfigError("unknown drift perturbation '" + name + "'");
}

SemigroupKind parse_semigroup_kind(const std::string& s) {
    if (s == "ou_analytic") return SemigroupKind::ou_analytic;
    if (s == "mc_euler") return SemigroupKind::mc_euler;
    throw ConfigError("unknown semigroup kind '" + s + "'");
}

std::string to_string(SemigroupKind k) { return k == SemigroupKind::ou_analytic ? "ou_analytic" : "mc_euler"; }

void SemigroupSpec::validate(std::size_t dim) const {
    if (lambdas.size() != dim) throw ConfigError("semigroup needs one lambda per axis");
    if (noise.size() != dim) throw ConfigError("semigroup needs one noise entry per axis");
    for (double l : lambdas)
        if (!(l < 0.0) || !std::isfinite(l)) throw ConfigError("OU drift eigenvalues must be negative");
    for (double c : noise)
        if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("noise diagonal must be positive");
    if (kind == SemigroupKind::ou_analytic) {
        if (perturbation.name != "none") throw ConfigError("ou_analytic does not take a drift perturbation");
        return;
    }
    if (steps < 1 || paths < 1) throw ConfigError("mc_euler needs steps >= 1 and paths >= 1");
    if (!perturbation.eval) throw ConfigError("mc_euler perturbation has no evaluator");
    // dissipativity on sampled pairs
    NormalStream s(0x5eed, stream_tag::sampler_audit, 0);
    std::vector<double> x(dim), y(dim), fx(dim), fy(dim);
    for (std::uint64_t q = 0; q < 2000; ++q) {
        for (std::size_t k = 0; k < dim; ++k) {
            x[k] = 3.0 * s.at(q * 2 * dim + k);
            y[k] = 3.0 * s.at(q * 2 * dim + dim + k);
        }
        perturbation.eval(x, fx);
        perturbation.eval(y, fy);
        double dot = 0.0;
        for (std::size_t k = 0; k < dim; ++k) dot += (fx[k] - fy[k]) * (x[k] - y[k]);
        if (dot > 1e-10) throw ConfigError("drift perturbation is not dissipative on sampled pairs");
    }
}

double SemigroupSpec::q(std::size_t k, double t) const {
    return -noise[k] * (1.0 - std::exp(2.0 * lambdas[k] * t)) / (2.0 * lambdas[k]);
}

std::vector<double> SemigroupSpec::invariant_variances() const {
    std::vector<double> v(lambdas.size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = -noise[k] / (2.0 * lambdas[k]);
    return v;
}

TransitionOperator TransitionOperator::tensor(std::vector<std::vector<double>> axes) {
    TransitionOperator op;
    op.axes_ = std::move(axes);
    return op;
}

TransitionOperator TransitionOperator::dense(std::vector<double> matrix, std::size_t nodes) {
    TransitionOperator op;
    op.dense_ = true;
    op.matrix_ = std::move(matrix);
    op.nodes_ = nodes;
    return op;
}

void TransitionOperator::apply_scalar(const TruncatedSpace& space, std::span<const double> in,
                                      std::span<double> out) const {
    const std::size_t n = space.size();
    if (in.size() != n || out.size() != n) throw ShapeError("operator input does not match grid");
    if (dense_) {
        if (nodes_ != n) throw ShapeError("operator built for a different grid");
        for (std::size_t i = 0; i < n; ++i) {
            const double* row = matrix_.data() + i * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += row[j] * in[j];
            out[i] = acc;
        }
        return;
    }
    if (axes_.size() != space.dim()) throw ShapeError("operator built for a different grid");
    std::vector<double> a(in.begin(), in.end()), b(n);
    for (std::size_t k = 0; k < axes_.size(); ++k) {
        space.apply_axis(axes_[k], k, a, b);
        a.swap(b);
    }
    std::copy(a.begin(), a.end(), out.begin());
}

void TransitionOperator::apply_add(const TruncatedSpace& space, std::span<const double> f, std::size_t components,
                                   double scale, std::span<double> out) const {
    const std::size_t n = space.size();
    std::vector<double> in(n), res(n);
    for (std::size_t c = 0; c < components; ++c) {
        for (std::size_t i = 0; i < n; ++i) in[i] = f[i * components + c];
        apply_scalar(space, in, res);
        for (std::size_t i = 0; i < n; ++i) out[i * components + c] += scale * res[i];
    }
}

GridField TransitionOperator::apply(const TruncatedSpace& space, const GridField& f) const {
    space.check_field(f);
    GridField out(f.nodes, f.components);
    apply_add(space, f.values, f.components, 1.0, out.values);
    return out;
}

Semigroup::Semigroup(SemigroupSpec spec, std::shared_ptr<const TruncatedSpace> space)
    : spec_(std::move(spec)), space_(std::move(space)) {
    if (!space_) throw ConfigError("semigroup needs a space");
    spec_.validate(space_->dim());
    if (spec_.kind == SemigroupKind::mc_euler && space_->size() > 2048)
        throw ConfigError("mc_euler operators are dense; grid too large");
    normal_rule_ = gauss_hermite_normal(space_->quad_order());
}

std::vector<double> Semigroup::ou_axis_matrix(std::size_t k, double t) const {
    const auto& ax = space_->axis(k);
    const std::size_t n = ax.size();
    std::vector<double> m(n * n, 0.0);
    if (t == 0.0) {
        for (std::size_t i = 0; i < n; ++i) m[i * n + i] = 1.0;
        return m;
    }
    // E[f(e^{lt} x + sqrt(Q_t) eta)]: the n-point rule integrates the
    // degree n-1 interpolant exactly.
    const double decay = std::exp(spec_.lambdas[k] * t);
    const double s = std::sqrt(spec_.q(k, t));
    std::vector<double> b(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double mean = decay * ax.nodes()[i];
        for (std::size_t q = 0; q < normal_rule_.nodes.size(); ++q) {
            ax.basis(mean + s * normal_rule_.nodes[q], b);
            const double w = normal_rule_.weights[q];
            for (std::size_t j = 0; j < n; ++j) m[i * n + j] += w * b[j];
        }
    }
    return m;
}

void Semigroup::euler_step(std::span<double> x, double h, std::span<const double> normals) const {
    const std::size_t d = x.size();
    double f[3] = {0, 0, 0};
    spec_.perturbation.eval(x, {f, d});
    for (std::size_t k = 0; k < d; ++k)
        x[k] += (spec_.lambdas[k] * x[k] + f[k]) * h + std::sqrt(spec_.noise[k] * h) * normals[k];
}

std::vector<TransitionOperator> Semigroup::mc_operators(double dt, std::size_t count, std::size_t substeps) const {
    const TruncatedSpace& sp = *space_;
    const std::size_t n = sp.size();
    const std::size_t d = sp.dim();
    const std::size_t M = spec_.paths;
    const double h = dt / static_cast<double>(substeps);
    std::vector<std::vector<double>> mats(count + 1, std::vector<double>(n * n, 0.0));
    for (std::size_t i = 0; i < n; ++i) mats[0][i * n + i] = 1.0;
    parallel_blocks(n, 1, [&](std::size_t i0, std::size_t i1) {
        std::vector<double> x(d), z(substeps * d), w(n);
        std::vector<double> acc((count + 1) * n);
        for (std::size_t i = i0; i < i1; ++i) {
            std::fill(acc.begin(), acc.end(), 0.0);
            for (std::size_t p = 0; p < M; ++p) {
                // common random numbers: the stream depends on the path only
                const NormalStream stream(spec_.seed, stream_tag::semigroup_mc, p);
                std::copy(sp.node(i).begin(), sp.node(i).end(), x.begin());
                for (std::size_t k = 1; k <= count; ++k) {
                    stream.fill((k - 1) * substeps * d, z);
                    for (std::size_t s = 0; s < substeps; ++s) euler_step(x, h, {z.data() + s * d, d});
                    sp.point_weights(x, w);
                    double* a = acc.data() + k * n;
                    for (std::size_t j = 0; j < n; ++j) a[j] += w[j];
                }
            }
            for (std::size_t k = 1; k <= count; ++k)
                for (std::size_t j = 0; j < n; ++j) mats[k][i * n + j] = acc[k * n + j] / static_cast<double>(M);
        }
    });
    std::vector<TransitionOperator> ops;
    ops.reserve(count + 1);
    for (auto& m : mats) ops.push_back(TransitionOperator::dense(std::move(m), n));
    return ops;
}

TransitionOperator Semigroup::operator_at(double t) const {
    if (!(t >= 0.0)) throw DomainError("semigroup time must be nonnegative");
    if (spec_.kind == SemigroupKind::ou_analytic) {
        std::vector<std::vector<double>> axes;
        for (std::size_t k = 0; k < space_->dim(); ++k) axes.push_back(ou_axis_matrix(k, t));
        return TransitionOperator::tensor(std::move(axes));
    }
    if (t == 0.0) return mc_operators(0.0, 0, 1)[0];
    const auto steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(t * spec_.steps - 1e-9)));
    return mc_operators(t, 1, steps)[1];
}

std::vector<TransitionOperator> Semigroup::lag_operators(double dt, std::size_t count) const {
    if (!(dt >= 0.0)) throw DomainError("lag must be nonnegative");
    if (spec_.kind == SemigroupKind::ou_analytic) {
        std::vector<TransitionOperator> ops(count + 1);
        parallel_blocks(count + 1, 1, [&](std::size_t k0, std::size_t k1) {
            for (std::size_t k = k0; k < k1; ++k) ops[k] = operator_at(dt * static_cast<double>(k));
        });
        return ops;
    }
    const auto sub = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(dt * spec_.steps - 1e-9)));
    return mc_operators(dt, count, sub);
}

GridField Semigroup::apply(double t, const GridField& f) const {
    space_->check_field(f);
    if (!(t >= 0.0)) throw DomainError("semigroup time must be nonnegative");
    if (t == 0.0) return f;
    return operator_at(t).apply(*space_, f);
}

McEstimate Semigroup::apply_with_se(double t, const GridField& f) const {
    space_->check_field(f);
    if (!(t >= 0.0)) throw DomainError("semigroup time must be nonnegative");
    if (spec_.kind == SemigroupKind::ou_analytic || t == 0.0)
        return {apply(t, f), GridField(f.nodes, f.components, 0.0)};
    const TruncatedSpace& sp = *space_;
    const std::size_t n = sp.size(), d = sp.dim(), l = f.components, M = spec_.paths;
    const auto steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(t * spec_.steps - 1e-9)));
    const double h = t / static_cast<double>(steps);
    McEstimate est{GridField(n, l), GridField(n, l)};
    parallel_blocks(n, 1, [&](std::size_t i0, std::size_t i1) {
        std::vector<double> x(d), z(steps * d), w(n), s1(l), s2(l);
        for (std::size_t i = i0; i < i1; ++i) {
            std::fill(s1.begin(), s1.end(), 0.0);
            std::fill(s2.begin(), s2.end(), 0.0);
            for (std::size_t p = 0; p < M; ++p) {
                const NormalStream stream(spec_.seed, stream_tag::semigroup_mc, p);
                stream.fill(0, z);
                std::copy(sp.node(i).begin(), sp.node(i).end(), x.begin());
                for (std::size_t s = 0; s < steps; ++s) euler_step(x, h, {z.data() + s * d, d});
                sp.point_weights(x, w);
                for (std::size_t c = 0; c < l; ++c) {
                    double v = 0.0;
                    for (std::size_t j = 0; j < n; ++j) v += w[j] * f(j, c);
                    s1[c] += v;
                    s2[c] += v * v;
                }
            }
            for (std::size_t c = 0; c < l; ++c) {
                const double mean = s1[c] / double(M);
                const double var = std::max(0.0, s2[c] / double(M) - mean * mean);
                est.mean(i, c) = mean;
                est.se(i, c) = std::sqrt(var / double(M));
            }
        }
    });
    return est;
}

McEstimate Semigroup::apply_function(double t, std::size_t components, const PointMap& fn) const {
    if (!(t >= 0.0)) throw DomainError("semigroup time must be nonnegative");
    const TruncatedSpace& sp = *space_;
    const std::size_t n = sp.size(), d = sp.dim(), l = components;
    if (spec_.kind == SemigroupKind::mc_euler && t > 0.0) {
        const auto sub = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(t * spec_.steps - 1e-9)));
        return std::move(mc_function(t, 1, sub, l, fn)[1]);
    }
    McEstimate est{GridField(n, l), GridField(n, l)};
    const std::size_t nq = normal_rule_.nodes.size();
    std::size_t combos = 1;
    for (std::size_t k = 0; k < d; ++k) combos *= (t == 0.0 ? 1 : nq);
    std::vector<double> decay(d), spread(d);
    for (std::size_t k = 0; k < d; ++k) {
        decay[k] = std::exp(spec_.lambdas[k] * t);
        spread[k] = t == 0.0 ? 0.0 : std::sqrt(spec_.q(k, t));
    }
    std::vector<double> sup_block(n, 0.0);
    parallel_blocks(n, 16, [&](std::size_t i0, std::size_t i1) {
        std::vector<double> y(d), v(l);
        for (std::size_t i = i0; i < i1; ++i) {
            const auto x = sp.node(i);
            double sup = 0.0;
            for (std::size_t q = 0; q < combos; ++q) {
                double w = 1.0;
                std::size_t rem = q;
                for (std::size_t k = d; k-- > 0;) {
                    const std::size_t qk = t == 0.0 ? 0 : rem % nq;
                    if (t != 0.0) rem /= nq;
                    y[k] = decay[k] * x[k] + spread[k] * (t == 0.0 ? 0.0 : normal_rule_.nodes[qk]);
                    w *= t == 0.0 ? 1.0 : normal_rule_.weights[qk];
                }
                fn(y, v);
                for (std::size_t c = 0; c < l; ++c) {
                    est.mean(i, c) += w * v[c];
                    sup = std::max(sup, std::abs(v[c]));
                }
            }
            sup_block[i] = sup;
        }
    });
    est.sup_input = *std::max_element(sup_block.begin(), sup_block.end());
    return est;
}

std::vector<McEstimate> Semigroup::mc_function(double dt, std::size_t count, std::size_t substeps,
                                               std::size_t components, const PointMap& fn) const {
    const TruncatedSpace& sp = *space_;
    const std::size_t n = sp.size(), d = sp.dim(), l = components, M = spec_.paths;
    const double h = dt / static_cast<double>(substeps);
    std::vector<McEstimate> out(count + 1, McEstimate{GridField(n, l), GridField(n, l)});
    std::vector<double> sup_node(n, 0.0);
    parallel_blocks(n, 1, [&](std::size_t i0, std::size_t i1) {
        std::vector<double> x(d), z(substeps * d), v(l);
        std::vector<double> s1((count + 1) * l), s2((count + 1) * l);
        for (std::size_t i = i0; i < i1; ++i) {
            std::fill(s1.begin(), s1.end(), 0.0);
            std::fill(s2.begin(), s2.end(), 0.0);
            double sup = 0.0;
            for (std::size_t p = 0; p < M; ++p) {
                const NormalStream stream(spec_.seed, stream_tag::semigroup_mc, p);
                std::copy(sp.node(i).begin(), sp.node(i).end(), x.begin());
                for (std::size_t k = 0; k <= count; ++k) {
                    if (k > 0) {
                        stream.fill((k - 1) * substeps * d, z);
                        for (std::size_t s = 0; s < substeps; ++s) euler_step(x, h, {z.data() + s * d, d});
                    }
                    fn(x, v);
                    for (std::size_t c = 0; c < l; ++c) {
                        s1[k * l + c] += v[c];
                        s2[k * l + c] += v[c] * v[c];
                        sup = std::max(sup, std::abs(v[c]));
                    }
                }
            }
            for (std::size_t k = 0; k <= count; ++k)
                for (std::size_t c = 0; c < l; ++c) {
                    const double mean = s1[k * l + c] / double(M);
                    const double var = std::max(0.0, s2[k * l + c] / double(M) - mean * mean);
                    out[k].mean(i, c) = mean;
                    out[k].se(i, c) = std::sqrt(var / double(M));
                }
            sup_node[i] = sup;
        }
    });
    const double sup = *std::max_element(sup_node.begin(), sup_node.end());
    for (auto& e : out) e.sup_input = sup;
    return out;
}

std::vector<GridField> Semigroup::apply_function_lags(double dt, std::size_t count, std::size_t components,
                                                      const PointMap& fn) const {
    if (!(dt >= 0.0)) throw DomainError("lag must be nonnegative");
    std::vector<GridField> out;
    out.reserve(count + 1);
    if (spec_.kind == SemigroupKind::ou_analytic) {
        for (std::size_t k = 0; k <= count; ++k)
            out.push_back(apply_function(dt * static_cast<double>(k), components, fn).mean);
        return out;
    }
    const auto sub = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(dt * spec_.steps - 1e-9)));
    for (auto& e : mc_function(dt, count, sub, components, fn)) out.push_back(std::move(e.mean));
    return out;
}

DiffusionCoefficient Semigroup::diffusion() const {
    std::vector<double> a(spec_.noise.size());
    for (std::size_t k = 0; k < a.size(); ++k) a[k] = 0.5 * spec_.noise[k];
    return DiffusionCoefficient::constant_diagonal(a);
}

DriftField Semigroup::drift() const {
    // -(Lu, v) = int A u' v' + int <A b, grad u> v with
    // A b = -(A / sigma^2 + lambda) x - F(x) relative to N(0, sigma^2).
    const std::size_t d = space_->dim();
    std::vector<double> beta(d);
    double alpha = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        const double a = 0.5 * spec_.noise[k];
        const double s2 = space_->axis_variances()[k];
        double bk = 1.0 / s2 + spec_.lambdas[k] / a;
        if (std::abs(bk) <= 1e-12 / s2) bk = 0.0;
        if (bk > 0.0)
            throw ConfigError("reference variance below the invariant variance: drift is not sector bounded");
        beta[k] = bk;
        alpha += -a * bk;
    }
    alpha += std::max(0.0, -spec_.perturbation.divergence_floor);
    DriftField b;
    b.dim = d;
    b.sector_alpha = alpha;
    const auto noise = spec_.noise;
    const auto pert = spec_.perturbation.eval;
    const bool perturbed = spec_.kind == SemigroupKind::mc_euler && spec_.perturbation.name != "none";
    b.eval = [beta, noise, pert, perturbed](std::span<const double> x, std::span<double> out) {
        double f[3] = {0, 0, 0};
        if (perturbed) pert(x, {f, x.size()});
        for (std::size_t k = 0; k < x.size(); ++k) out[k] = -beta[k] * x[k] - f[k] / (0.5 * noise[k]);
    };
    return b;
}

GridField apply(const SemigroupSpec& spec, const TruncatedSpace& space, double t, const GridField& f) {
    return Semigroup(spec, std::make_shared<TruncatedSpace>(space)).apply(t, f);
}

SemigroupAudit audit_semigroup(const Semigroup& sg, const std::vector<double>& times, const std::vector<TestFunction>& tests) {
    if (times.empty() || tests.empty()) throw PreconditionError("audit needs times and test functions");
    const TruncatedSpace& sp = sg.space();
    SemigroupAudit rep;
    rep.worst_min = std::numeric_limits<double>::infinity();
    for (double t : times) {
        for (std::size_t fi = 0; fi < tests.size(); ++fi) {
            const auto& fn = tests[fi];
            const PointMap map = [&fn](std::span<const double> x, std::span<double> out) { out[0] = fn(x); };
            const McEstimate pf = sg.apply_function(t, 1, map);
            const GridField f = sp.sample(fn);
            SemigroupAuditEntry e;
            e.t = t;
            e.field = fi;
            e.nonnegative_input = std::all_of(f.values.begin(), f.values.end(), [](double v) { return v >= 0.0; });
            e.min_value = *std::min_element(pf.mean.values.begin(), pf.mean.values.end());
            double fmax = pf.sup_input, pmax = 0.0;
            for (double v : f.values) fmax = std::max(fmax, std::abs(v));
            for (double v : pf.mean.values) pmax = std::max(pmax, std::abs(v));
            e.contraction = fmax > 0.0 ? pmax / fmax : 0.0;
            e.invariance_gap = std::abs(sp.integrate(pf.mean.values) - sp.integrate(f.values));
            if (e.nonnegative_input) rep.worst_min = std::min(rep.worst_min, e.min_value);
            rep.worst_contraction = std::max(rep.worst_contraction, e.contraction);
            rep.worst_invariance_gap = std::max(rep.worst_invariance_gap, e.invariance_gap);
            rep.entries.push_back(e);
        }
    }
    if (!std::isfinite(rep.worst_min)) rep.worst_min = 0.0;
    return rep;
}

CompositionResidual semigroup_composition_residual(const Semigroup& sg, double s, double t, const GridField& f) {
    if (!(s >= 0.0) || !(t >= 0.0)) throw DomainError("composition times must be nonnegative");
    const TruncatedSpace& sp = sg.space();
    CompositionResidual out;
    if (s == 0.0) return out;
    const McEstimate inner = sg.apply_with_se(t, f);
    const McEstimate outer = sg.apply_with_se(s, inner.mean);
    const McEstimate direct = sg.apply_with_se(s + t, f);
    GridField diff(f.nodes, f.components), se2(f.nodes, f.components);
    const GridField carried = sg.apply(s, inner.se);
    for (std::size_t q = 0; q < diff.values.size(); ++q) {
        diff.values[q] = outer.mean.values[q] - direct.mean.values[q];
        se2.values[q] = std::sqrt(outer.se.values[q] * outer.se.values[q] + direct.se.values[q] * direct.se.values[q] +
                                  carried.values[q] * carried.values[q]);
    }
    out.residual = std::sqrt(sp.norm_sq(diff));
    out.se = std::sqrt(sp.norm_sq(se2));
    return out;
}

}  // namespace bsdelab
