#include "bsdelab/driver.hpp"

#include <algorithm>
#include <cmath>

#include "bsdelab/errors.hpp"

namespace bsdelab {

void Driver::check() const {
    if (!eval) throw ConfigError("driver '" + name + "' has no evaluator");
    if (components < 1) throw ConfigError("driver needs at least one component");
    if (dim < 1 || dim > 3) throw ConfigError("driver dimension must be in 1..3");
    if (!(lipschitz_z >= 0.0)) throw ConfigError("driver Lipschitz constant must be nonnegative");
    if (!(f0_bound >= 0.0)) throw ConfigError("driver f0 bound must be nonnegative");
}

void Driver::f0(double t, std::span<const double> x, std::span<double> out) const {
    std::vector<double> y(components, 0.0), z(components * dim, 0.0);
    eval(t, x, y, z, out);
}

double Driver::growth(double t, std::span<const double> x, double r) const {
    if (growth_r) return growth_r(t, x, r);
    // sampled sup over a grid of the ball |y| <= r
    const std::size_t l = components;
    std::vector<double> y(l, 0.0), z(l * dim, 0.0), base(l), v(l);
    eval(t, x, y, z, base);
    const int per_axis = l == 1 ? 257 : (l == 2 ? 41 : 13);
    std::size_t total = 1;
    for (std::size_t c = 0; c < l; ++c) total *= static_cast<std::size_t>(per_axis);
    double sup = 0.0;
    for (std::size_t q = 0; q < total; ++q) {
        std::size_t rem = q;
        double norm2 = 0.0;
        for (std::size_t c = 0; c < l; ++c) {
            const auto k = static_cast<int>(rem % static_cast<std::size_t>(per_axis));
            rem /= static_cast<std::size_t>(per_axis);
            y[c] = -r + 2.0 * r * k / (per_axis - 1);
            norm2 += y[c] * y[c];
        }
        if (norm2 > r * r * (1 + 1e-12)) continue;
        eval(t, x, y, z, v);
        double d2 = 0.0;
        for (std::size_t c = 0; c < l; ++c) d2 += (v[c] - base[c]) * (v[c] - base[c]);
        sup = std::max(sup, std::sqrt(d2));
    }
    return sup;
}

Driver linear_driver(std::size_t dim, double decay, double constant) {
    Driver f;
    f.name = "linear";
    f.dim = dim;
    f.eval = [decay, constant](double, std::span<const double>, std::span<const double> y, std::span<const double>,
                               std::span<double> out) { out[0] = -decay * y[0] + constant; };
    f.lipschitz_y = std::abs(decay);
    f.mono_rate = [decay](double) { return -decay; };
    f.alpha = [decay](double t) { return -decay * t; };
    f.f0_bound = std::abs(constant);
    f.growth_r = [decay](double, std::span<const double>, double r) { return std::abs(decay) * r; };
    f.source_only = decay == 0.0;
    return f;
}

Driver sin_z_driver(std::size_t dim, double decay, double amplitude, std::size_t axis) {
    if (axis >= dim) throw ConfigError("sin_z axis outside the space dimension");
    Driver f;
    f.name = "sin_z";
    f.dim = dim;
    f.eval = [decay, amplitude, axis](double, std::span<const double>, std::span<const double> y,
                                      std::span<const double> z, std::span<double> out) {
        out[0] = -decay * y[0] + amplitude * std::sin(z[axis]);
    };
    f.lipschitz_z = std::abs(amplitude);
    f.lipschitz_y = std::abs(decay);
    f.mono_rate = [decay](double) { return -decay; };
    f.alpha = [decay](double t) { return -decay * t; };
    f.growth_r = [decay](double, std::span<const double>, double r) { return std::abs(decay) * r; };
    return f;
}

Driver cubic_monotone_driver(std::size_t dim, double rate) {
    Driver f;
    f.name = "cubic_monotone";
    f.dim = dim;
    f.eval = [rate](double, std::span<const double>, std::span<const double> y, std::span<const double>,
                    std::span<double> out) { out[0] = rate * y[0] - y[0] * y[0] * y[0]; };
    f.mono_rate = [rate](double) { return rate; };
    f.alpha = [rate](double t) { return rate * t; };
    f.growth_r = [rate](double, std::span<const double>, double r) {
        // |m y - y^3| on [0, r]: endpoint or the interior extremum
        double s = std::abs(rate * r - r * r * r);
        if (rate > 0.0) {
            const double yc = std::sqrt(rate / 3.0);
            if (yc <= r) s = std::max(s, std::abs(rate * yc - yc * yc * yc));
        }
        return s;
    };
    return f;
}

Driver table_driver(std::size_t dim, const std::vector<double>& y_poly, const std::vector<double>& z_coeffs,
                    double constant) {
    if (z_coeffs.size() != dim)
        throw ConfigError("driver table has " + std::to_string(z_coeffs.size()) + " z coefficients but dim is " +
                          std::to_string(dim));
    std::vector<double> p = y_poly;
    while (!p.empty() && p.back() == 0.0) p.pop_back();
    Driver f;
    f.name = "table";
    f.dim = dim;
    f.eval = [p, z_coeffs, constant](double, std::span<const double>, std::span<const double> y,
                                     std::span<const double> z, std::span<double> out) {
        double acc = 0.0;
        for (std::size_t k = p.size(); k-- > 0;) acc = (acc + p[k]) * y[0];
        for (std::size_t j = 0; j < z_coeffs.size(); ++j) acc += z_coeffs[j] * z[j];
        out[0] = acc + constant;
    };
    double zn = 0.0;
    for (double c : z_coeffs) zn += c * c;
    f.lipschitz_z = std::sqrt(zn);
    f.f0_bound = std::abs(constant);
    // derivative p'(y) = sum (k+1) p_k y^k must be bounded above
    double mono = 0.0;
    if (p.size() <= 1) {
        mono = p.empty() ? 0.0 : p[0];
        f.lipschitz_y = std::abs(mono);
    } else {
        const std::size_t lead = p.size() - 1;  // degree of p'
        const double lead_coef = static_cast<double>(lead + 1) * p[lead];
        if (lead % 2 == 1 || lead_coef > 0.0) throw ConfigError("driver table is not monotone in y");
        mono = -std::numeric_limits<double>::infinity();
        for (int k = -4000; k <= 4000; ++k) {
            const double y = k * 0.0025;
            double d = 0.0;
            for (std::size_t j = p.size(); j-- > 0;) d = d * y + static_cast<double>(j + 1) * p[j];
            mono = std::max(mono, d);
        }
    }
    f.mono_rate = [mono](double) { return mono; };
    f.alpha = [mono](double t) { return mono * t; };
    f.growth_r = [p](double, std::span<const double>, double r) {
        double s = 0.0;
        for (int k = -200; k <= 200; ++k) {
            const double y = r * k / 200.0;
            double acc = 0.0;
            for (std::size_t j = p.size(); j-- > 0;) acc = (acc + p[j]) * y;
            s = std::max(s, std::abs(acc));
        }
        return s;
    };
    f.source_only = p.empty() && zn == 0.0;
    return f;
}

Terminal terminal_preset(const std::string& name, std::size_t dim, double value) {
    Terminal g;
    g.name = name;
    if (name == "identity") {
        g.fn = [](std::span<const double> x, std::span<double> out) { out[0] = x[0]; };
    } else if (name == "tanh") {
        g.fn = [](std::span<const double> x, std::span<double> out) { out[0] = std::tanh(x[0]); };
    } else if (name == "tanh_sum") {
        g.fn = [](std::span<const double> x, std::span<double> out) {
            double s = 0.0;
            for (double v : x) s += v;
            out[0] = std::tanh(s);
        };
    } else if (name == "gaussian") {
        g.fn = [](std::span<const double> x, std::span<double> out) {
            double s = 0.0;
            for (double v : x) s += v * v;
            out[0] = std::exp(-s);
        };
    } else if (name == "cos") {
        g.fn = [](std::span<const double> x, std::span<double> out) { out[0] = std::cos(x[0]); };
    } else if (name == "constant") {
        g.fn = [value](std::span<const double>, std::span<double> out) { out[0] = value; };
    } else {
        throw ConfigError("unknown terminal preset '" + name + "'");
    }
    (void)dim;
    return g;
}

Terminal polynomial_terminal(const std::vector<PolynomialTerm>& terms, std::size_t dim) {
    for (const auto& t : terms)
        if (t.powers.size() != dim)
            throw ConfigError("terminal polynomial term has " + std::to_string(t.powers.size()) +
                              " powers but dim is " + std::to_string(dim));
    Terminal g;
    g.name = "polynomial";
    g.fn = [terms](std::span<const double> x, std::span<double> out) {
        double s = 0.0;
        for (const auto& t : terms) {
            double m = t.coef;
            for (std::size_t k = 0; k < t.powers.size(); ++k) m *= std::pow(x[k], static_cast<double>(t.powers[k]));
            s += m;
        }
        out[0] = s;
    };
    return g;
}

}  // namespace bsdelab
