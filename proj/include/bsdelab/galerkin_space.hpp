#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "bsdelab/quadrature.hpp"

namespace bsdelab {

// R^l-valued samples on the grid, node-major: values[node * l + c].
struct GridField {
    std::size_t nodes = 0;
    std::size_t components = 1;
    std::vector<double> values;

    GridField() = default;
    GridField(std::size_t n, std::size_t l, double fill = 0.0) : nodes(n), components(l), values(n * l, fill) {}

    double& operator()(std::size_t node, std::size_t c) { return values[node * components + c]; }
    double operator()(std::size_t node, std::size_t c) const { return values[node * components + c]; }
};

// Time-indexed grid samples: values[(i * nodes + node) * l + c].
struct SpaceTimeField {
    std::vector<double> times;
    std::size_t nodes = 0;
    std::size_t components = 1;
    std::vector<double> values;

    SpaceTimeField() = default;
    SpaceTimeField(std::vector<double> t, std::size_t n, std::size_t l)
        : times(std::move(t)), nodes(n), components(l), values(times.size() * n * l, 0.0) {}

    std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }
    std::span<double> slice(std::size_t i) { return {values.data() + i * nodes * components, nodes * components}; }
    std::span<const double> slice(std::size_t i) const {
        return {values.data() + i * nodes * components, nodes * components};
    }
    GridField at(std::size_t i) const;
    void set(std::size_t i, const GridField& f);
};

// Partial derivatives on the grid: values[(node * l + c) * d + k] = d_k u^c.
struct GradientField {
    std::size_t nodes = 0;
    std::size_t components = 1;
    std::size_t dim = 1;
    std::vector<double> values;
};

std::vector<double> uniform_times(double horizon, std::size_t steps);

class TruncatedSpace {
public:
    TruncatedSpace(std::size_t dim, std::vector<double> axis_variances, std::size_t quad_order);

    std::size_t dim() const { return dim_; }
    std::size_t quad_order() const { return order_; }
    std::size_t size() const { return weights_.size(); }
    const std::vector<double>& axis_variances() const { return variances_; }
    const std::vector<double>& weights() const { return weights_; }
    std::span<const double> node(std::size_t i) const { return {nodes_.data() + i * dim_, dim_}; }
    const std::vector<double>& node_coordinates() const { return nodes_; }
    const BarycentricInterpolant& axis(std::size_t k) const { return axes_[k]; }
    std::size_t stride(std::size_t k) const { return strides_[k]; }

    // Field from a pointwise map x -> R^l.
    GridField sample(std::size_t components,
                     const std::function<void(std::span<const double>, std::span<double>)>& fn) const;
    GridField sample(const std::function<double(std::span<const double>)>& fn) const;

    double integrate(std::span<const double> scalar) const;
    // sum_c integral of u^c v^c
    double inner(const GridField& u, const GridField& v) const;
    double norm_sq(const GridField& u) const { return inner(u, u); }

    GradientField gradient(const GridField& u) const;
    // Gradient of a scalar field stored with an arbitrary stride.
    void gradient_scalar(std::span<const double> u, std::size_t stride, std::span<double> out,
                         std::size_t out_stride) const;

    // out = (I x .. x M x .. x I) in, M (n x n row-major) acting along axis k.
    void apply_axis(std::span<const double> matrix, std::size_t k, std::span<const double> in,
                    std::span<double> out) const;

    // Tensor interpolation weights of an off-grid point, length size().
    void point_weights(std::span<const double> x, std::span<double> out) const;

    void check_field(const GridField& f) const;

private:
    std::size_t dim_;
    std::size_t order_;
    std::vector<double> variances_;
    std::vector<BarycentricInterpolant> axes_;
    std::vector<double> axis_weights_;  // order_ per axis
    std::vector<std::size_t> strides_;
    std::vector<double> nodes_;
    std::vector<double> weights_;
};

TruncatedSpace build_space(std::size_t dim, const std::vector<double>& axis_variances, std::size_t quad_order);

using PointMap = std::function<void(std::span<const double>, std::span<double>)>;

// x -> A(x), a symmetric d x d matrix (row-major) with c I <= A <= C1 I.
struct DiffusionCoefficient {
    std::size_t dim = 1;
    PointMap eval;
    double c = 0.0;
    double C1 = 0.0;

    static DiffusionCoefficient constant_diagonal(const std::vector<double>& diag);
};

// A(x) and A(x)^{1/2} at every grid node, checked against the declared bounds.
struct DiffusionOnGrid {
    std::size_t dim = 1;
    std::vector<double> a;     // nodes * d * d
    std::vector<double> root;  // nodes * d * d
    std::span<const double> at(std::size_t node) const { return {a.data() + node * dim * dim, dim * dim}; }
    std::span<const double> sqrt_at(std::size_t node) const {
        return {root.data() + node * dim * dim, dim * dim};
    }
};

DiffusionOnGrid evaluate_on_grid(const TruncatedSpace& space, const DiffusionCoefficient& A);

// Symmetric square root and the eigenvalue range of a d x d matrix.
void symmetric_sqrt(std::span<const double> a, std::size_t d, std::span<double> root, double& lo, double& hi);

struct DriftField {
    std::size_t dim = 1;
    PointMap eval;
    double sector_alpha = 0.0;

    static DriftField zero(std::size_t dim);
};

double energy_form(const TruncatedSpace& space, const DiffusionCoefficient& A, const GridField& u, const GridField& v);
double energy_form(const TruncatedSpace& space, const DiffusionOnGrid& A, const GridField& u, const GridField& v);
double bilinear_form(const TruncatedSpace& space, const DiffusionCoefficient& A, const DriftField& b,
                     const GridField& u, const GridField& v);

struct DriftSectorReport {
    double alpha = 0.0;
    std::vector<double> margins;  // one per test field
    double worst_margin = 0.0;
    bool violated = false;
    double drift_energy = 0.0;  // integral of |A^{1/2} b|^2
};

DriftSectorReport check_drift_sector(const TruncatedSpace& space, const DiffusionCoefficient& A, const DriftField& b,
                                     double alpha, const std::vector<GridField>& test_fields);

// (sup_i ||u_i||^2 + trapezoid of E^A(u_t))^{1/2} over the field's time nodes.
double t_norm(const TruncatedSpace& space, const DiffusionCoefficient& A, const SpaceTimeField& u);
double t_norm(const TruncatedSpace& space, const DiffusionOnGrid& A, const SpaceTimeField& u);

}  // namespace bsdelab
