#include "bsdelab/bsde.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "bsdelab/errors.hpp"
#include "bsdelab/parallel.hpp"

namespace bsdelab {

namespace {

constexpr std::size_t path_block = 1024;

void sqrt_matrix(const DiffusionCoefficient& A, std::span<const double> x, std::span<double> a,
                 std::span<double> root) {
    A.eval(x, a);
    double lo = 0.0, hi = 0.0;
    symmetric_sqrt(a, A.dim, root, lo, hi);
}

// out_c = root * v_c for each of the l rows of v (l x d)
void rows_times(std::span<const double> root, std::span<const double> v, std::size_t l, std::size_t d,
                std::span<double> out) {
    for (std::size_t c = 0; c < l; ++c)
        for (std::size_t i = 0; i < d; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += root[i * d + j] * v[c * d + j];
            out[c * d + i] = s;
        }
}

}  // namespace

void BSDEProblem::validate() const {
    if (!ensemble) throw ConfigError("BSDE problem without a path ensemble");
    const std::size_t M = ensemble->paths;
    if (components == 0) throw ConfigError("BSDE needs at least one component");
    if (xi.size() != M * components) throw ShapeError("terminal values do not match the ensemble");
    for (double v : xi)
        if (!std::isfinite(v)) throw DomainError("terminal values must be finite");
    if (driver.components != components || driver.dim != ensemble->dim)
        throw ShapeError("driver shape does not match the BSDE problem");
    if (diffusion.dim != ensemble->dim) throw ShapeError("diffusion dimension does not match the ensemble");
}

BSDEProblem make_bsde(std::shared_ptr<const PathEnsemble> ensemble, const Terminal& phi, Driver driver,
                      DiffusionCoefficient A, double start_time) {
    if (!ensemble) throw ConfigError("BSDE problem without a path ensemble");
    BSDEProblem p;
    p.components = phi.components;
    p.xi.resize(ensemble->paths * phi.components);
    for (std::size_t q = 0; q < ensemble->paths; ++q)
        phi.fn(ensemble->state(q, ensemble->steps), {p.xi.data() + q * phi.components, phi.components});
    p.ensemble = std::move(ensemble);
    p.driver = std::move(driver);
    p.diffusion = std::move(A);
    p.start_time = start_time;
    p.validate();
    return p;
}

RegressionBasis RegressionBasis::polynomial(std::size_t dim, std::size_t degree) {
    if (dim < 1) throw ConfigError("basis dimension must be at least 1");
    RegressionBasis b;
    b.dim = dim;
    b.degree = degree;
    std::vector<unsigned> pw(dim, 0);
    // graded order: constant, then by total degree
    for (std::size_t total = 0; total <= degree; ++total) {
        std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t axis, std::size_t left) {
            if (axis + 1 == dim) {
                pw[axis] = static_cast<unsigned>(left);
                b.powers.push_back(pw);
                return;
            }
            for (std::size_t k = left + 1; k-- > 0;) {
                pw[axis] = static_cast<unsigned>(k);
                rec(axis + 1, left - k);
            }
        };
        rec(0, total);
    }
    return b;
}

void RegressionBasis::features(std::span<const double> x, std::span<double> out) const {
    for (std::size_t q = 0; q < powers.size(); ++q) {
        double v = 1.0;
        for (std::size_t k = 0; k < dim; ++k)
            for (unsigned e = 0; e < powers[q][k]; ++e) v *= x[k];
        out[q] = v;
    }
}

Projector::Projector(const RegressionBasis& basis, const PathEnsemble& e, std::size_t node)
    : basis_(basis), ensemble_(&e), node_(node) {
    if (basis.dim != e.dim) throw ShapeError("basis dimension does not match the ensemble");
    diag_.node = node;
    const std::size_t M = e.paths, K = basis.size(), d = e.dim;
    const auto x0 = e.state(0, node);
    bool same = true;
    for (std::size_t p = 1; p < M && same; ++p) {
        const auto x = e.state(p, node);
        for (std::size_t k = 0; k < d; ++k) same = same && x[k] == x0[k];
    }
    if (same) {
        diag_.plain_average = true;
        return;
    }
    const auto gram = block_sum(M, reduction_block, K * K, [&](std::size_t a, std::size_t b, double* acc) {
        std::vector<double> f(K);
        for (std::size_t p = a; p < b; ++p) {
            basis.features(e.state(p, node), f);
            for (std::size_t i = 0; i < K; ++i)
                for (std::size_t j = 0; j <= i; ++j) acc[i * K + j] += f[i] * f[j];
        }
    });
    Eigen::MatrixXd G(K, K);
    for (std::size_t i = 0; i < K; ++i)
        for (std::size_t j = 0; j <= i; ++j) G(i, j) = G(j, i) = gram[i * K + j] / static_cast<double>(M);
    if (!G.allFinite()) throw NumericalError("non-finite regression design at node " + std::to_string(node));
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G, Eigen::EigenvaluesOnly);
    const double hi = eig.eigenvalues().maxCoeff(), lo = eig.eigenvalues().minCoeff();
    diag_.condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    if (diag_.condition > condition_limit) {
        diag_.ridge = ridge_floor * hi;
        G.diagonal().array() += diag_.ridge;
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(G);
    if (llt.info() != Eigen::Success)
        throw NumericalError("singular regression at node " + std::to_string(node) +
                             " (condition " + std::to_string(diag_.condition) + ")");
    const Eigen::MatrixXd L = llt.matrixL();
    chol_.assign(L.data(), L.data() + K * K);
}

void Projector::project(std::span<const double> targets, std::size_t width, std::span<double> out) const {
    const PathEnsemble& e = *ensemble_;
    const std::size_t M = e.paths, K = basis_.size();
    if (targets.size() != M * width || out.size() != M * width) throw ShapeError("projection targets have the wrong size");
    if (diag_.plain_average) {
        const auto sums = block_sum(M, reduction_block, width, [&](std::size_t a, std::size_t b, double* acc) {
            for (std::size_t p = a; p < b; ++p)
                for (std::size_t c = 0; c < width; ++c) acc[c] += targets[p * width + c];
        });
        coef_.assign(K * width, 0.0);
        for (std::size_t c = 0; c < width; ++c) {
            coef_[c] = sums[c] / static_cast<double>(M);
            for (std::size_t p = 0; p < M; ++p) out[p * width + c] = coef_[c];
        }
        return;
    }
    const auto rhs = block_sum(M, reduction_block, K * width, [&](std::size_t a, std::size_t b, double* acc) {
        std::vector<double> f(K);
        for (std::size_t p = a; p < b; ++p) {
            basis_.features(e.state(p, node_), f);
            for (std::size_t i = 0; i < K; ++i)
                for (std::size_t c = 0; c < width; ++c) acc[i * width + c] += f[i] * targets[p * width + c];
        }
    });
    const Eigen::Map<const Eigen::MatrixXd> L(chol_.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(K));
    Eigen::MatrixXd B(K, width);
    for (std::size_t i = 0; i < K; ++i)
        for (std::size_t c = 0; c < width; ++c) B(i, c) = rhs[i * width + c] / static_cast<double>(M);
    L.triangularView<Eigen::Lower>().solveInPlace(B);
    L.transpose().triangularView<Eigen::Upper>().solveInPlace(B);
    coef_.resize(K * width);
    for (std::size_t i = 0; i < K; ++i)
        for (std::size_t c = 0; c < width; ++c) coef_[i * width + c] = B(i, c);
    parallel_blocks(M, path_block, [&](std::size_t a, std::size_t b) {
        std::vector<double> f(K);
        for (std::size_t p = a; p < b; ++p) {
            basis_.features(e.state(p, node_), f);
            for (std::size_t c = 0; c < width; ++c) {
                double s = 0.0;
                for (std::size_t i = 0; i < K; ++i) s += f[i] * coef_[i * width + c];
                out[p * width + c] = s;
            }
        }
    });
}

BSDESolution lsmc_solve(const BSDEProblem& problem, const RegressionBasis& basis, std::size_t picard_iters) {
    problem.validate();
    if (picard_iters < 1) throw PreconditionError("at least one Picard sweep is required");
    const PathEnsemble& e = *problem.ensemble;
    const std::size_t M = e.paths, N = e.steps, d = e.dim, l = problem.components, ld = l * d;
    const double dt = e.dt;
    BSDESolution sol;
    sol.paths = M;
    sol.steps = N;
    sol.components = l;
    sol.dim = d;
    sol.picard_iterations = picard_iters;
    sol.Y.assign(M * (N + 1) * l, 0.0);
    sol.Z.assign(M * N * ld, 0.0);
    for (std::size_t p = 0; p < M; ++p)
        std::copy_n(problem.xi.data() + p * l, l, sol.Y.data() + (p * (N + 1) + N) * l);

    std::vector<double> ym(M * l), zt(M * ld), zf(M * ld), base(M * l), g(M * l), fit(M * l), pathwise(problem.xi);
    for (std::size_t k = N; k-- > 0;) {
        const Projector P(basis, e, k);
        const double t = problem.start_time + static_cast<double>(k) * dt;
        for (std::size_t p = 0; p < M; ++p) {
            const auto y = sol.y(p, k + 1);
            std::copy(y.begin(), y.end(), ym.begin() + p * l);
        }
        P.project(ym, l, base);
        // E[dM | X_k] = 0, so centring Y_{k+1} by its projection leaves the
        // regression target's conditional mean unchanged and removes most of its variance
        for (std::size_t p = 0; p < M; ++p) {
            const auto m = e.increment(p, k);
            for (std::size_t c = 0; c < l; ++c)
                for (std::size_t i = 0; i < d; ++i)
                    zt[(p * l + c) * d + i] = (ym[p * l + c] - base[p * l + c]) * m[i];
        }
        P.project(zt, ld, zf);
        // Z^c = (2 A dt)^{-1} E[Y^c dM | X]
        parallel_blocks(M, path_block, [&](std::size_t a, std::size_t b) {
            std::vector<double> am(d * d);
            for (std::size_t p = a; p < b; ++p) {
                problem.diffusion.eval(e.state(p, k), am);
                Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> Am(
                    am.data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
                const Eigen::LLT<Eigen::MatrixXd> llt(2.0 * dt * Am);
                for (std::size_t c = 0; c < l; ++c) {
                    Eigen::Map<Eigen::VectorXd> v(zf.data() + (p * l + c) * d, static_cast<Eigen::Index>(d));
                    const Eigen::VectorXd s = llt.solve(v);
                    for (std::size_t i = 0; i < d; ++i) sol.Z[((p * N + k) * l + c) * d + i] = s(i);
                }
            }
        });
        fit = base;
        for (std::size_t it = 0; it < picard_iters; ++it) {
            parallel_blocks(M, path_block, [&](std::size_t a, std::size_t b) {
                std::vector<double> am(d * d), root(d * d), z(ld);
                for (std::size_t p = a; p < b; ++p) {
                    const auto x = e.state(p, k);
                    sqrt_matrix(problem.diffusion, x, am, root);
                    rows_times(root, sol.z(p, k), l, d, z);
                    problem.driver.eval(t, x, {fit.data() + p * l, l}, z, {g.data() + p * l, l});
                }
            });
            if (it + 1 == picard_iters)
                for (std::size_t q = 0; q < M * l; ++q) pathwise[q] += dt * g[q];
            P.project(g, l, g);
            for (std::size_t q = 0; q < M * l; ++q) fit[q] = base[q] + dt * g[q];
        }
        for (std::size_t p = 0; p < M; ++p)
            std::copy_n(fit.data() + p * l, l, sol.Y.data() + (p * (N + 1) + k) * l);
        sol.diagnostics.push_back(P.diagnostics());
        if (k == 0) {
            // the regression value, with the spread of xi + sum dt f along each path
            std::vector<double> v(M), w(M);
            for (std::size_t p = 0; p < M; ++p) {
                v[p] = pathwise[p * l];
                w[p] = fit[p * l];
            }
            sol.y0.se = mean_se(v).se;
            sol.y0.mean = mean_se(w).mean;
            sol.y0_pathwise = std::move(v);
        }
    }
    std::reverse(sol.diagnostics.begin(), sol.diagnostics.end());
    return sol;
}

Representation represent(const std::vector<double>& xi, std::shared_ptr<const PathEnsemble> ensemble,
                         const DiffusionCoefficient& A, const RegressionBasis& basis) {
    BSDEProblem prob;
    prob.ensemble = ensemble;
    prob.xi = xi;
    prob.components = 1;
    prob.driver = linear_driver(ensemble->dim, 0.0);
    prob.diffusion = A;
    Representation rep;
    rep.solution = lsmc_solve(prob, basis, 1);
    const PathEnsemble& e = *ensemble;
    const std::size_t M = e.paths, N = e.steps, d = e.dim;
    rep.residual.resize(M);
    std::vector<double> energy(M), half(M), gap(M);
    parallel_blocks(M, path_block, [&](std::size_t a, std::size_t b) {
        std::vector<double> am(d * d);
        for (std::size_t p = a; p < b; ++p) {
            double r = xi[p] - rep.solution.y(p, 0)[0], en = 0.0;
            for (std::size_t k = 0; k < N; ++k) {
                const auto z = rep.solution.z(p, k);
                const auto m = e.increment(p, k);
                A.eval(e.state(p, k), am);
                for (std::size_t i = 0; i < d; ++i) {
                    r -= z[i] * m[i];
                    for (std::size_t j = 0; j < d; ++j) en += am[i * d + j] * z[i] * z[j] * e.dt;
                }
            }
            rep.residual[p] = r;
            energy[p] = en;
            half[p] = 0.5 * xi[p] * xi[p];
            gap[p] = en - half[p];
        }
    });
    rep.residual_mean = mean_se(rep.residual);
    rep.residual_se = std::hypot(rep.residual_mean.se, rep.solution.y0.se);
    std::vector<double> sq(M);
    for (std::size_t p = 0; p < M; ++p) sq[p] = rep.residual[p] * rep.residual[p];
    rep.residual_rms = std::sqrt(mean_se(sq).mean);
    rep.energy = mean_se(energy);
    rep.half_second_moment = mean_se(half);
    rep.gap = mean_se(gap);
    return rep;
}

FeynmanKacReport feynman_kac_residual(const TruncatedSpace& sp, const SpaceTimeField& u, const BSDESolution& sol,
                                      const BSDEProblem& problem) {
    problem.validate();
    const PathEnsemble& e = *problem.ensemble;
    const std::size_t M = e.paths, N = e.steps, d = e.dim, l = problem.components, ld = l * d;
    if (sol.paths != M || sol.steps != N || sol.components != l) throw ShapeError("solution does not match the problem");
    if (u.components != l || u.nodes != sp.size() || sp.dim() != d) throw ShapeError("field does not match the problem");
    const double T = problem.start_time + e.horizon;
    if (u.times.empty() || std::abs(u.times.back() - T) > 1e-12 * std::max(1.0, T))
        throw ShapeError("field horizon differs from the BSDE interval");
    const auto grads = gradients(sp, u);
    FeynmanKacReport rep;
    std::vector<double> u0(M), rhs(M), ysq(M * (N + 1)), zsq(M * std::max<std::size_t>(N, 1));
    parallel_blocks(M, path_block, [&](std::size_t a, std::size_t b) {
        std::vector<double> v(l), grad(ld), am(d * d), root(d * d), z(ld), dz(ld), fv(l);
        for (std::size_t p = a; p < b; ++p) {
            double integral = 0.0;
            for (std::size_t k = 0; k <= N; ++k) {
                const double t = problem.start_time + static_cast<double>(k) * e.dt;
                const auto x = e.state(p, k);
                evaluate_field(sp, u, t, x, v);
                if (k == 0) u0[p] = v[0];
                const auto y = sol.y(p, k);
                double s = 0.0;
                for (std::size_t c = 0; c < l; ++c) s += (y[c] - v[c]) * (y[c] - v[c]);
                ysq[k * M + p] = s;
                evaluate_gradient(sp, grads, u.times, t, x, grad);
                sqrt_matrix(problem.diffusion, x, am, root);
                rows_times(root, grad, l, d, z);
                problem.driver.eval(t, x, v, z, fv);
                const double w = (k == 0 || k == N) ? 0.5 : 1.0;
                integral += w * e.dt * fv[0];
                if (k < N) {
                    const auto zk = sol.z(p, k);
                    for (std::size_t q = 0; q < ld; ++q) dz[q] = zk[q] - grad[q];
                    rows_times(root, dz, l, d, z);
                    double t2 = 0.0;
                    for (double q : z) t2 += q * q;
                    zsq[k * M + p] = t2;
                }
            }
            rhs[p] = problem.xi[p * l] + integral;
        }
    });
    rep.u0 = mean_se(u0).mean;
    rep.y0 = sol.y0;
    rep.y0_gap = std::abs(sol.y0.mean - rep.u0);
    for (std::size_t k = 0; k <= N; ++k) rep.y_gap.push_back(std::sqrt(mean_se({ysq.data() + k * M, M}).mean));
    for (std::size_t k = 0; k < N; ++k) rep.z_gap.push_back(std::sqrt(mean_se({zsq.data() + k * M, M}).mean));
    rep.rhs = mean_se(rhs);
    rep.rhs_gap = std::abs(rep.rhs.mean - rep.u0);
    return rep;
}

MomentReport moment_report(const BSDESolution& sol, const BSDEProblem& problem, double p) {
    if (!(p > 1.0)) throw PreconditionError("moment exponent must exceed 1");
    problem.validate();
    const PathEnsemble& e = *problem.ensemble;
    const std::size_t M = e.paths, N = e.steps, d = e.dim, l = problem.components, ld = l * d;
    MomentReport rep;
    rep.p = p;
    std::vector<double> lhs(M), rhs(M), supy(M), supxi(M), supf0(M);
    parallel_blocks(M, path_block, [&](std::size_t a, std::size_t b) {
        std::vector<double> am(d * d), root(d * d), z(ld), f0(l);
        for (std::size_t q = a; q < b; ++q) {
            double sy = 0.0, zint = 0.0, fint = 0.0, sf = 0.0;
            for (std::size_t k = 0; k <= N; ++k) {
                double n2 = 0.0;
                for (double v : sol.y(q, k)) n2 += v * v;
                sy = std::max(sy, std::sqrt(n2));
                if (k == N) break;
                const auto x = e.state(q, k);
                sqrt_matrix(problem.diffusion, x, am, root);
                rows_times(root, sol.z(q, k), l, d, z);
                for (double v : z) zint += v * v * e.dt;
                problem.driver.f0(problem.start_time + static_cast<double>(k) * e.dt, x, f0);
                double fn = 0.0;
                for (double v : f0) fn += v * v;
                fn = std::sqrt(fn);
                fint += fn * e.dt;
                sf = std::max(sf, fn);
            }
            double xn = 0.0;
            for (std::size_t c = 0; c < l; ++c) xn += problem.xi[q * l + c] * problem.xi[q * l + c];
            xn = std::sqrt(xn);
            lhs[q] = std::pow(sy, p) + std::pow(zint, 0.5 * p);
            rhs[q] = std::pow(xn, p) + std::pow(fint, p);
            supy[q] = sy;
            supxi[q] = xn;
            supf0[q] = sf;
        }
    });
    rep.lhs = mean_se(lhs);
    rep.rhs = mean_se(rhs);
    rep.ratio = rep.rhs.mean > 0.0 ? rep.lhs.mean / rep.rhs.mean : 0.0;
    rep.sup_y = *std::max_element(supy.begin(), supy.end());
    rep.data_bound = *std::max_element(supxi.begin(), supxi.end()) +
                     *std::max_element(supf0.begin(), supf0.end()) * e.horizon;
    rep.observed_k = rep.data_bound > 0.0 ? rep.sup_y / rep.data_bound : 0.0;
    return rep;
}

}  // namespace bsdelab
