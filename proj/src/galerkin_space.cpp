#include "bsdelab/galerkin_space.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <limits>
#include <cmath>
#include <string>

#include "bsdelab/errors.hpp"

namespace bsdelab {

GridField SpaceTimeField::at(std::size_t i) const {
    GridField f(nodes, components);
    const auto s = slice(i);
    std::copy(s.begin(), s.end(), f.values.begin());
    return f;
}

void SpaceTimeField::set(std::size_t i, const GridField& f) {
    if (f.nodes != nodes || f.components != components) throw ShapeError("field does not match space-time slice");
    std::copy(f.values.begin(), f.values.end(), slice(i).begin());
}

std::vector<double> uniform_times(double horizon, std::size_t steps) {
    std::vector<double> t(steps + 1);
    for (std::size_t i = 0; i <= steps; ++i)
        t[i] = steps == 0 ? 0.0 : horizon * static_cast<double>(i) / static_cast<double>(steps);
    if (steps > 0) t[steps] = horizon;
    return t;
}

TruncatedSpace::TruncatedSpace(std::size_t dim, std::vector<double> axis_variances, std::size_t quad_order)
    : dim_(dim), order_(quad_order), variances_(std::move(axis_variances)) {
    if (dim_ < 1 || dim_ > 3) throw ConfigError("space dim must be in 1..3, got " + std::to_string(dim_));
    if (variances_.size() != dim_)
        throw ConfigError("space needs " + std::to_string(dim_) + " variances, got " + std::to_string(variances_.size()));
    for (double v : variances_)
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("axis variances must be positive and finite");
    if (order_ < 2 || order_ > 64) throw ConfigError("quad_order must be in 2..64");

    const QuadratureRule rule = gauss_hermite_normal(order_);
    for (std::size_t k = 0; k < dim_; ++k) {
        const double s = std::sqrt(variances_[k]);
        std::vector<double> x(order_);
        for (std::size_t j = 0; j < order_; ++j) x[j] = s * rule.nodes[j];
        axes_.emplace_back(std::move(x));
        axis_weights_.insert(axis_weights_.end(), rule.weights.begin(), rule.weights.end());
    }
    strides_.assign(dim_, 1);
    for (std::size_t k = dim_ - 1; k > 0; --k) strides_[k - 1] = strides_[k] * order_;
    const std::size_t count = strides_[0] * order_;
    nodes_.resize(count * dim_);
    weights_.resize(count);
    for (std::size_t idx = 0; idx < count; ++idx) {
        double w = 1.0;
        for (std::size_t k = 0; k < dim_; ++k) {
            const std::size_t ik = (idx / strides_[k]) % order_;
            nodes_[idx * dim_ + k] = axes_[k].nodes()[ik];
            w *= axis_weights_[k * order_ + ik];
        }
        weights_[idx] = w;
    }
}

TruncatedSpace build_space(std::size_t dim, const std::vector<double>& axis_variances, std::size_t quad_order) {
    return TruncatedSpace(dim, axis_variances, quad_order);
}

void TruncatedSpace::check_field(const GridField& f) const {
    if (f.nodes != size() || f.values.size() != f.nodes * f.components)
        throw ShapeError("field has " + std::to_string(f.nodes) + " nodes, space has " + std::to_string(size()));
}

GridField TruncatedSpace::sample(std::size_t components,
                                 const std::function<void(std::span<const double>, std::span<double>)>& fn) const {
    GridField f(size(), components);
    for (std::size_t i = 0; i < size(); ++i) fn(node(i), {f.values.data() + i * components, components});
    return f;
}

GridField TruncatedSpace::sample(const std::function<double(std::span<const double>)>& fn) const {
    GridField f(size(), 1);
    for (std::size_t i = 0; i < size(); ++i) f.values[i] = fn(node(i));
    return f;
}

double TruncatedSpace::integrate(std::span<const double> scalar) const {
    if (scalar.size() != size()) throw ShapeError("integrand does not match grid");
    double s = 0.0;
    for (std::size_t i = 0; i < size(); ++i) s += weights_[i] * scalar[i];
    return s;
}

double TruncatedSpace::inner(const GridField& u, const GridField& v) const {
    check_field(u);
    check_field(v);
    if (u.components != v.components) throw ShapeError("component count mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
        double p = 0.0;
        for (std::size_t c = 0; c < u.components; ++c) p += u(i, c) * v(i, c);
        s += weights_[i] * p;
    }
    return s;
}

void TruncatedSpace::apply_axis(std::span<const double> matrix, std::size_t k, std::span<const double> in,
                                std::span<double> out) const {
    const std::size_t n = order_;
    const std::size_t inner_len = strides_[k];
    const std::size_t outer = size() / (n * inner_len);
    for (std::size_t o = 0; o < outer; ++o) {
        const std::size_t base = o * n * inner_len;
        for (std::size_t i = 0; i < n; ++i) {
            const double* row = matrix.data() + i * n;
            for (std::size_t s = 0; s < inner_len; ++s) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += row[j] * in[base + j * inner_len + s];
                out[base + i * inner_len + s] = acc;
            }
        }
    }
}

void TruncatedSpace::gradient_scalar(std::span<const double> u, std::size_t stride, std::span<double> out,
                                     std::size_t out_stride) const {
    const std::size_t count = size();
    std::vector<double> in(count), d(count);
    for (std::size_t i = 0; i < count; ++i) in[i] = u[i * stride];
    for (std::size_t k = 0; k < dim_; ++k) {
        apply_axis(axes_[k].derivative_matrix(), k, in, d);
        for (std::size_t i = 0; i < count; ++i) out[i * out_stride + k] = d[i];
    }
}

GradientField TruncatedSpace::gradient(const GridField& u) const {
    check_field(u);
    GradientField g;
    g.nodes = size();
    g.components = u.components;
    g.dim = dim_;
    g.values.assign(g.nodes * g.components * g.dim, 0.0);
    for (std::size_t c = 0; c < u.components; ++c)
        gradient_scalar({u.values.data() + c, u.values.size() - c}, u.components,
                        {g.values.data() + c * dim_, g.values.size() - c * dim_}, u.components * dim_);
    return g;
}

void TruncatedSpace::point_weights(std::span<const double> x, std::span<double> out) const {
    if (x.size() != dim_) throw ShapeError("point dimension mismatch");
    if (out.size() != size()) throw ShapeError("weight buffer does not match grid");
    double buf[3][64];
    for (std::size_t k = 0; k < dim_; ++k) axes_[k].basis(x[k], {buf[k], order_});
    for (std::size_t idx = 0; idx < size(); ++idx) {
        double w = 1.0;
        for (std::size_t k = 0; k < dim_; ++k) w *= buf[k][(idx / strides_[k]) % order_];
        out[idx] = w;
    }
}

DiffusionCoefficient DiffusionCoefficient::constant_diagonal(const std::vector<double>& diag) {
    DiffusionCoefficient A;
    A.dim = diag.size();
    A.c = *std::min_element(diag.begin(), diag.end());
    A.C1 = *std::max_element(diag.begin(), diag.end());
    A.eval = [diag](std::span<const double>, std::span<double> out) {
        const std::size_t d = diag.size();
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t k = 0; k < d; ++k) out[k * d + k] = diag[k];
    };
    return A;
}

void symmetric_sqrt(std::span<const double> a, std::size_t d, std::span<double> root, double& lo, double& hi) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) m(Eigen::Index(i), Eigen::Index(j)) = a[i * d + j];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
    lo = eig.eigenvalues().minCoeff();
    hi = eig.eigenvalues().maxCoeff();
    const Eigen::VectorXd s = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd r = eig.eigenvectors() * s.asDiagonal() * eig.eigenvectors().transpose();
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            // symmetrize so downstream forms stay exactly symmetric
            root[i * d + j] = 0.5 * (r(Eigen::Index(i), Eigen::Index(j)) + r(Eigen::Index(j), Eigen::Index(i)));
        }
}

DiffusionOnGrid evaluate_on_grid(const TruncatedSpace& space, const DiffusionCoefficient& A) {
    const std::size_t d = space.dim();
    if (A.dim != d) throw ShapeError("diffusion coefficient dimension does not match space");
    if (!(A.c > 0.0)) throw ConfigError("diffusion coefficient must be uniformly elliptic (c > 0)");
    if (A.C1 < A.c) throw ConfigError("diffusion bounds need c <= C1");
    DiffusionOnGrid g;
    g.dim = d;
    g.a.resize(space.size() * d * d);
    g.root.resize(space.size() * d * d);
    for (std::size_t i = 0; i < space.size(); ++i) {
        std::span<double> ai{g.a.data() + i * d * d, d * d};
        A.eval(space.node(i), ai);
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t s = 0; s < d; ++s)
                if (ai[r * d + s] != ai[s * d + r]) throw ConfigError("diffusion coefficient is not symmetric");
        double lo = 0.0, hi = 0.0;
        symmetric_sqrt(ai, d, {g.root.data() + i * d * d, d * d}, lo, hi);
        const double slack = 1e-12 * std::max(1.0, A.C1);
        if (lo < A.c - slack || hi > A.C1 + slack)
            throw ConfigError("diffusion coefficient violates c I <= A <= C1 I at a grid node");
    }
    return g;
}

DriftField DriftField::zero(std::size_t dim) {
    DriftField b;
    b.dim = dim;
    b.eval = [](std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); };
    return b;
}

namespace {

// <A gu, gv> summed over symmetric pairs so swapping gu and gv is exact.
double sym_form(std::span<const double> a, std::size_t d, const double* gu, const double* gv) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        s += a[k * d + k] * (gu[k] * gv[k]);
        for (std::size_t m = k + 1; m < d; ++m) s += a[k * d + m] * (gu[k] * gv[m] + gu[m] * gv[k]);
    }
    return s;
}

}  // namespace

double energy_form(const TruncatedSpace& space, const DiffusionOnGrid& A, const GridField& u, const GridField& v) {
    space.check_field(u);
    space.check_field(v);
    if (u.components != v.components) throw ShapeError("component count mismatch");
    const std::size_t d = space.dim();
    const GradientField gu = space.gradient(u);
    const GradientField gv = &u == &v ? gu : space.gradient(v);
    double total = 0.0;
    for (std::size_t i = 0; i < space.size(); ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < u.components; ++c) {
            const std::size_t off = (i * u.components + c) * d;
            s += sym_form(A.at(i), d, gu.values.data() + off, gv.values.data() + off);
        }
        total += space.weights()[i] * s;
    }
    return total;
}

double energy_form(const TruncatedSpace& space, const DiffusionCoefficient& A, const GridField& u, const GridField& v) {
    return energy_form(space, evaluate_on_grid(space, A), u, v);
}

double bilinear_form(const TruncatedSpace& space, const DiffusionCoefficient& A, const DriftField& b,
                     const GridField& u, const GridField& v) {
    const DiffusionOnGrid ag = evaluate_on_grid(space, A);
    double total = energy_form(space, ag, u, v);
    const std::size_t d = space.dim();
    if (b.dim != d) throw ShapeError("drift dimension does not match space");
    const GradientField gu = space.gradient(u);
    std::vector<double> bx(d), ab(d);
    double drift = 0.0;
    for (std::size_t i = 0; i < space.size(); ++i) {
        b.eval(space.node(i), bx);
        const auto a = ag.at(i);
        for (std::size_t k = 0; k < d; ++k) {
            ab[k] = 0.0;
            for (std::size_t m = 0; m < d; ++m) ab[k] += a[k * d + m] * bx[m];
        }
        double s = 0.0;
        for (std::size_t c = 0; c < u.components; ++c) {
            double dot = 0.0;
            for (std::size_t k = 0; k < d; ++k) dot += ab[k] * gu.values[(i * u.components + c) * d + k];
            s += dot * v(i, c);
        }
        drift += space.weights()[i] * s;
    }
    return total + drift;
}

DriftSectorReport check_drift_sector(const TruncatedSpace& space, const DiffusionCoefficient& A, const DriftField& b,
                                     double alpha, const std::vector<GridField>& test_fields) {
    if (alpha < 0.0) throw ConfigError("sector constant alpha must be nonnegative");
    const DiffusionOnGrid ag = evaluate_on_grid(space, A);
    const std::size_t d = space.dim();
    DriftSectorReport rep;
    rep.alpha = alpha;
    std::vector<double> bx(d), ab(d);
    std::vector<double> abx(space.size() * d);
    for (std::size_t i = 0; i < space.size(); ++i) {
        b.eval(space.node(i), bx);
        const auto a = ag.at(i);
        double e = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            ab[k] = 0.0;
            for (std::size_t m = 0; m < d; ++m) ab[k] += a[k * d + m] * bx[m];
            e += ab[k] * bx[k];
            abx[i * d + k] = ab[k];
        }
        rep.drift_energy += space.weights()[i] * e;
    }
    if (!std::isfinite(rep.drift_energy)) throw ConfigError("drift field has infinite energy on the grid");
    rep.worst_margin = std::numeric_limits<double>::infinity();
    for (const auto& u : test_fields) {
        space.check_field(u);
        for (double x : u.values)
            if (x < 0.0) throw PreconditionError("drift sector test fields must be nonnegative");
        double margin = 0.0;
        for (std::size_t c = 0; c < u.components; ++c) {
            std::vector<double> sq(space.size()), g(space.size() * d);
            for (std::size_t i = 0; i < space.size(); ++i) sq[i] = u(i, c) * u(i, c);
            space.gradient_scalar(sq, 1, g, d);
            double lhs = 0.0;
            for (std::size_t i = 0; i < space.size(); ++i) {
                double dot = 0.0;
                for (std::size_t k = 0; k < d; ++k) dot += abx[i * d + k] * g[i * d + k];
                lhs += space.weights()[i] * dot;
            }
            margin += lhs + alpha * space.integrate(sq);
        }
        rep.margins.push_back(margin);
        rep.worst_margin = std::min(rep.worst_margin, margin);
        if (margin < -1e-10) rep.violated = true;
    }
    if (test_fields.empty()) rep.worst_margin = 0.0;
    return rep;
}

double t_norm(const TruncatedSpace& space, const DiffusionOnGrid& A, const SpaceTimeField& u) {
    if (u.nodes != space.size()) throw ShapeError("space-time field does not match grid");
    double sup = 0.0;
    double energy = 0.0;
    double prev_e = 0.0;
    for (std::size_t i = 0; i < u.times.size(); ++i) {
        const GridField ui = u.at(i);
        sup = std::max(sup, space.norm_sq(ui));
        const double e = energy_form(space, A, ui, ui);
        if (i > 0) energy += 0.5 * (u.times[i] - u.times[i - 1]) * (e + prev_e);
        prev_e = e;
    }
    return std::sqrt(sup + energy);
}

double t_norm(const TruncatedSpace& space, const DiffusionCoefficient& A, const SpaceTimeField& u) {
    return t_norm(space, evaluate_on_grid(space, A), u);
}

}  // namespace bsdelab
