#include <algorithm>
#include <cmath>
#include <limits>

#include "bsdelab/mild_solver.hpp"
#include "bsdelab/rng.hpp"
#include "solver_detail.hpp"

namespace bsdelab {

namespace {

double uniform_of(double g) { return 0.5 * std::erfc(-g / std::sqrt(2.0)); }

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

}  // namespace

double estimate_lipschitz_y(const Driver& f, double radius, std::size_t samples, std::uint64_t seed) {
    return detail::sampled_lipschitz_y(f, radius, 1.0, false, samples, seed);
}

DriverReport validate_driver(const Driver& f, std::size_t sample_budget, std::uint64_t seed, double horizon) {
    f.check();
    DriverReport rep;
    rep.samples = sample_budget;
    rep.lipschitz_z_declared = f.lipschitz_z;
    const std::size_t l = f.components, d = f.dim, ld = l * d;
    const double radius = 4.0;
    rep.worst_monotonicity_margin = -std::numeric_limits<double>::infinity();
    rep.worst_dissipativity_margin = -std::numeric_limits<double>::infinity();
    std::vector<double> g(2 + d + 2 * l + 2 * ld + 2), x(d), y(l), y2(l), z(ld), z2(ld), zero(ld, 0.0);
    std::vector<double> a(l), b(l), c0(l), f0(l);
    for (std::size_t s = 0; s < sample_budget; ++s) {
        const NormalStream stream(seed, stream_tag::driver_audit, s);
        stream.fill(0, g);
        std::size_t q = 0;
        const double t = horizon * uniform_of(g[q++]);
        for (auto& v : x) v = 1.5 * g[q++];
        for (auto& v : y) v = radius * (2.0 * uniform_of(g[q++]) - 1.0);
        for (auto& v : y2) v = radius * (2.0 * uniform_of(g[q++]) - 1.0);
        for (auto& v : z) v = 2.0 * g[q++];
        // z partner at a log-uniform separation, to probe the slope near zero
        const double sep = std::pow(10.0, 1.0 - 7.0 * uniform_of(g[q++]));
        double dn = 0.0;
        for (std::size_t k = 0; k < ld; ++k) {
            z2[k] = g[q++];
            dn += z2[k] * z2[k];
        }
        dn = std::sqrt(dn);
        // every other sample starts at z = 0, where smooth drivers are steepest
        if (s % 2 == 1) std::fill(z.begin(), z.end(), 0.0);
        for (std::size_t k = 0; k < ld; ++k) z2[k] = z[k] + (dn > 0.0 ? z2[k] / dn : 1.0) * sep;

        // Lipschitz in z
        f.eval(t, x, y, z, a);
        f.eval(t, x, y, z2, b);
        double num = 0.0, den = 0.0;
        for (std::size_t c = 0; c < l; ++c) num += (a[c] - b[c]) * (a[c] - b[c]);
        for (std::size_t k = 0; k < ld; ++k) den += (z[k] - z2[k]) * (z[k] - z2[k]);
        if (den > 0.0) rep.lipschitz_z_estimate = std::max(rep.lipschitz_z_estimate, std::sqrt(num / den));

        // monotone in y
        f.eval(t, x, y2, z, b);
        double dy2 = 0.0, inner = 0.0;
        for (std::size_t c = 0; c < l; ++c) {
            dy2 += (y[c] - y2[c]) * (y[c] - y2[c]);
            inner += (y[c] - y2[c]) * (a[c] - b[c]);
        }
        rep.worst_monotonicity_margin = std::max(rep.worst_monotonicity_margin, inner - f.mono_rate(t) * dy2);

        // <y, f'(y)> <= 0 with f'(y) = f(y, 0) - f(0, 0)
        f.f0(t, x, f0);
        f.eval(t, x, y, zero, c0);
        for (std::size_t c = 0; c < l; ++c) c0[c] -= f0[c];
        rep.worst_dissipativity_margin = std::max(rep.worst_dissipativity_margin, dot(y, c0));

        // bounded f0
        double m = 0.0;
        for (double v : f0) m = std::max(m, std::abs(v));
        rep.f0_sup = std::max(rep.f0_sup, m);
    }
    rep.lipschitz_violation = rep.lipschitz_z_estimate > f.lipschitz_z * (1.0 + 1e-6) + 1e-12;
    rep.monotonicity_violation = rep.worst_monotonicity_margin > 1e-8;
    rep.dissipativity_violation = rep.worst_dissipativity_margin > 1e-8;
    rep.f0_violation = rep.f0_sup > f.f0_bound * (1.0 + 1e-6) + 1e-12;
    // growth f^{',r} at a few radii, sup over sampled (t, x)
    for (double r : {1.0, 2.0, 4.0}) {
        double sup = 0.0;
        const std::size_t points = std::min<std::size_t>(64, std::max<std::size_t>(1, sample_budget));
        for (std::size_t s = 0; s < points; ++s) {
            const NormalStream stream(seed + 1, stream_tag::driver_audit, s);
            stream.fill(0, g);
            const double t = horizon * uniform_of(g[0]);
            for (std::size_t k = 0; k < d; ++k) x[k] = 1.5 * g[1 + k];
            sup = std::max(sup, f.growth(t, x, r));
        }
        rep.growth.push_back({r, sup});
    }
    return rep;
}

}  // namespace bsdelab
