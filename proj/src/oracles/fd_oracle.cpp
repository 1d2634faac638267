#include "fd_oracle.hpp"

#include <algorithm>
#include <cmath>

namespace oracle {

double FdSolution::at(std::size_t k, double xq) const {
    const auto& v = u[k];
    if (xq <= x.front()) return v.front();
    if (xq >= x.back()) return v.back();
    const double h = x[1] - x[0];
    const auto i = std::min<std::size_t>(static_cast<std::size_t>((xq - x.front()) / h), x.size() - 2);
    const double s = (xq - x[i]) / h;
    return (1.0 - s) * v[i] + s * v[i + 1];
}

FdSolution solve_ou_1d(double a, double lambda, const std::function<double(double)>& f,
                       const std::function<double(double)>& fprime, const std::function<double(double)>& phi,
                       double horizon, std::size_t outputs, const FdSettings& st) {
    const std::size_t M = st.points;
    const double L = st.half_width, h = 2.0 * L / static_cast<double>(M - 1);
    FdSolution sol;
    sol.x.resize(M);
    for (std::size_t i = 0; i < M; ++i) sol.x[i] = -L + h * static_cast<double>(i);
    sol.times.resize(outputs + 1);
    sol.u.resize(outputs + 1);
    std::vector<double> u(M);
    for (std::size_t i = 0; i < M; ++i) u[i] = phi(sol.x[i]);
    sol.times[outputs] = horizon;
    sol.u[outputs] = u;
    const double tau = horizon / static_cast<double>(outputs * st.substeps);

    // L u_i = lo_i u_{i-1} + di_i u_i + up_i u_{i+1}, mirrored at the ends
    std::vector<double> lo(M), di(M), up(M);
    for (std::size_t i = 0; i < M; ++i) {
        const double b = lambda * sol.x[i];
        lo[i] = a / (h * h) - b / (2.0 * h);
        up[i] = a / (h * h) + b / (2.0 * h);
        di[i] = -2.0 * a / (h * h);
    }
    up[0] += lo[0];
    lo[0] = 0.0;
    lo[M - 1] += up[M - 1];
    up[M - 1] = 0.0;

    std::vector<double> prev(M), r(M), jl(M), jd(M), ju(M), c(M), d(M), delta(M);
    for (std::size_t k = outputs; k-- > 0;) {
        for (std::size_t s = 0; s < st.substeps; ++s) {
            prev = u;
            for (int it = 0; it < 30; ++it) {
                // residual of u - tau (L u + f(u)) - prev
                double norm = 0.0;
                for (std::size_t i = 0; i < M; ++i) {
                    double Lu = di[i] * u[i];
                    if (i > 0) Lu += lo[i] * u[i - 1];
                    if (i + 1 < M) Lu += up[i] * u[i + 1];
                    r[i] = u[i] - tau * (Lu + f(u[i])) - prev[i];
                    norm = std::max(norm, std::abs(r[i]));
                    jl[i] = -tau * lo[i];
                    ju[i] = -tau * up[i];
                    jd[i] = 1.0 - tau * (di[i] + fprime(u[i]));
                }
                if (norm < 1e-14) break;
                // Thomas algorithm for J delta = r
                c[0] = ju[0] / jd[0];
                d[0] = r[0] / jd[0];
                for (std::size_t i = 1; i < M; ++i) {
                    const double m = jd[i] - jl[i] * c[i - 1];
                    c[i] = ju[i] / m;
                    d[i] = (r[i] - jl[i] * d[i - 1]) / m;
                }
                delta[M - 1] = d[M - 1];
                for (std::size_t i = M - 1; i-- > 0;) delta[i] = d[i] - c[i] * delta[i + 1];
                for (std::size_t i = 0; i < M; ++i) u[i] -= delta[i];
            }
        }
        sol.times[k] = horizon * static_cast<double>(k) / static_cast<double>(outputs);
        sol.u[k] = u;
    }
    return sol;
}

}  // namespace oracle
