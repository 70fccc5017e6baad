#include "tvhc/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "tvhc/errors.hpp"

namespace tvhc::quad {

namespace {

Rule build_laguerre(int n) {
    // Newton iteration on L_n with the classical asymptotic starting guesses.
    Rule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    long double z = 0.0L;
    for (int i = 0; i < n; ++i) {
        if (i == 0) {
            z = 3.0L / (1.0L + 2.4L * n);
        } else if (i == 1) {
            z += 15.0L / (1.0L + 2.5L * n);
        } else {
            long double ai = i - 1;
            z += ((1.0L + 2.55L * ai) / (1.9L * ai)) * (z - rule.nodes[i - 2]);
        }
        long double pp = 0.0L;
        for (int it = 0; it < 200; ++it) {
            long double p1 = 1.0L, p2 = 0.0L;
            for (int j = 0; j < n; ++j) {
                long double p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1 - z) * p2 - j * p3) / (j + 1);
            }
            pp = n * (p1 - p2) / z;
            long double z1 = z;
            z = z1 - p1 / pp;
            if (std::fabs(z - z1) <= 1e-17L * std::fabs(z)) break;
        }
        // recompute p2 = L_{n-1}(z) at the converged root
        long double p1 = 1.0L, p2 = 0.0L;
        for (int j = 0; j < n; ++j) {
            long double p3 = p2;
            p2 = p1;
            p1 = ((2 * j + 1 - z) * p2 - j * p3) / (j + 1);
        }
        pp = n * (p1 - p2) / z;
        rule.nodes[i] = static_cast<double>(z);
        rule.weights[i] = static_cast<double>(-1.0L / (pp * n * p2));
    }
    return rule;
}

} // namespace

const Rule& gauss_laguerre(int order) {
    static std::mutex mu;
    static std::map<int, Rule> cache;
    std::lock_guard lock(mu);
    auto it = cache.find(order);
    if (it == cache.end()) it = cache.emplace(order, build_laguerre(order)).first;
    return it->second;
}

Result integrate(const std::function<double(double)>& f, double a, double b,
                 std::span<const double> breakpoints, double rel_tol) {
    if (!(b > a)) return {};
    std::vector<double> cuts{a};
    for (double x : breakpoints)
        if (x > a && x < b) cuts.push_back(x);
    cuts.push_back(b);
    std::sort(cuts.begin(), cuts.end());
    Result total;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        if (!(cuts[k + 1] > cuts[k])) continue;
        // Boost compares an unscaled error estimate with a scaled tolerance,
        // which never converges on short intervals; integrate on [-1, 1] instead.
        const double mid = 0.5 * (cuts[k] + cuts[k + 1]);
        const double half = 0.5 * (cuts[k + 1] - cuts[k]);
        auto g = [&](double x) { return f(mid + half * x); };
        double err = 0.0, l1 = 0.0;
        double v = half * boost::math::quadrature::gauss_kronrod<double, 31>::integrate(g, -1.0, 1.0, 20, rel_tol,
                                                                                         &err, &l1);
        if (!std::isfinite(v)) throw NumericError("non-finite quadrature value", err);
        total.value += v;
        total.error += half * err;
    }
    return total;
}

double laguerre_expectation(const std::function<double(double)>& f, double rate, int order) {
    const Rule& rule = gauss_laguerre(order);
    double sum = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        if (rule.weights[i] == 0.0) continue;
        sum += rule.weights[i] * f(rule.nodes[i] / rate);
    }
    return sum;
}

Result truncated_expectation(const std::function<double(double)>& f, double rate,
                             std::span<const double> breakpoints, double eps_trunc,
                             double rel_tol) {
    const double x_max = -std::log(eps_trunc) / rate;
    auto g = [&](double x) { return f(x) * rate * std::exp(-rate * x); };
    Result r = integrate(g, 0.0, x_max, breakpoints, rel_tol);
    r.value += f(x_max) * eps_trunc;
    return r;
}

} // namespace tvhc::quad
