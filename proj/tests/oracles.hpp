// Independent numerical helpers for tests. Nothing here calls the library's
// quadrature, so agreement with it means something.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "tvhc/cost_model.hpp"

namespace oracle {

using Fn = std::function<double(double)>;

namespace detail {
inline long double simpson_rec(const Fn& f, long double a, long double b, long double fa, long double fm,
                               long double fb, long double whole, long double tol, int depth) {
    long double m = 0.5L * (a + b);
    long double lm = 0.5L * (a + m), rm = 0.5L * (m + b);
    long double flm = f(static_cast<double>(lm)), frm = f(static_cast<double>(rm));
    long double left = (m - a) / 6 * (fa + 4 * flm + fm);
    long double right = (b - m) / 6 * (fm + 4 * frm + fb);
    long double diff = left + right - whole;
    // the floor stops refinement once the difference is pure rounding noise
    long double floor = 1e-15L * (std::fabs(static_cast<double>(left)) + std::fabs(static_cast<double>(right)));
    if (depth <= 0 || std::fabs(static_cast<double>(diff)) <= 15 * std::max(tol, floor))
        return left + right + diff / 15;
    return simpson_rec(f, a, m, fa, flm, fm, left, tol / 2, depth - 1) +
           simpson_rec(f, m, b, fm, frm, fb, right, tol / 2, depth - 1);
}
} // namespace detail

/// Adaptive Simpson on [a, b], absolute tolerance tol.
inline double simpson(const Fn& f, double a, double b, double tol = 1e-12) {
    if (!(b > a)) return 0.0;
    long double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    long double whole = (static_cast<long double>(b) - a) / 6 * (fa + 4 * fm + fb);
    return static_cast<double>(detail::simpson_rec(f, a, b, fa, fm, fb, whole, tol, 24));
}

/// Simpson over [a, b] split at the given points and into pieces of at most `piece`.
inline double integrate(const Fn& f, double a, double b, std::vector<double> cuts = {}, double tol = 1e-12,
                        double piece = 0.5) {
    cuts.push_back(a);
    cuts.push_back(b);
    std::sort(cuts.begin(), cuts.end());
    std::vector<double> pts;
    for (double c : cuts)
        if (c >= a && c <= b && (pts.empty() || c > pts.back())) pts.push_back(c);
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
        double lo = pts[k], hi = pts[k + 1];
        int n = std::max(1, static_cast<int>(std::ceil((hi - lo) / piece)));
        for (int j = 0; j < n; ++j) {
            double x0 = lo + (hi - lo) * j / n, x1 = lo + (hi - lo) * (j + 1) / n;
            total += simpson(f, x0, x1, tol / n);
        }
    }
    return total;
}

/// E[f(t + X)], X ~ Exp(rate), truncated where the weight is negligible.
/// `growth` is an upper bound on the exponential growth rate of f.
inline double shifted_mean(const Fn& f, double t, double rate, std::vector<double> cuts = {}, double growth = 0.0) {
    double decay = rate - growth;
    double upper = 45.0 / decay + 10.0 / rate;
    std::vector<double> shifted;
    for (double c : cuts)
        if (c > t) shifted.push_back(c - t);
    return integrate([&](double x) { return rate * std::exp(-rate * x) * f(t + x); }, 0.0, upper, shifted, 1e-13,
                     std::min(0.5, 2.0 / rate));
}

inline double cost_growth(const tvhc::CostFunction& c) {
    double g = 0.0;
    if (const auto* e = std::get_if<tvhc::family::Exponential>(&c.repr())) g = e->rate;
    if (const auto* s = std::get_if<tvhc::family::Sum>(&c.repr()))
        for (const auto& p : s->parts) g = std::max(g, cost_growth(p));
    return g;
}

inline double uniform(std::mt19937_64& g, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(g);
}

/// Random admissible cost of a given family (0 constant, 1 polynomial, 2 smoothed
/// step, 3 piecewise linear, 4 exponential, 5 sum). Exponential rates stay
/// below max_rate.
inline tvhc::CostFunction random_cost(std::mt19937_64& g, int family, double max_rate = 0.3) {
    using tvhc::CostFunction;
    switch (family) {
    case 0: return CostFunction::constant(uniform(g, 0.1, 5.0));
    case 1: {
        int deg = std::uniform_int_distribution<int>(1, 3)(g);
        std::vector<double> a(deg + 1);
        for (auto& x : a) x = uniform(g, 0.0, 2.0);
        return CostFunction::polynomial(a);
    }
    case 2: return CostFunction::smoothed_step(uniform(g, 0.5, 10.0), uniform(g, 0.5, 5.0), uniform(g, 0.05, 1.0));
    case 3: {
        int n = std::uniform_int_distribution<int>(2, 4)(g);
        std::vector<tvhc::family::Knot> k;
        double t = 0.0, v = uniform(g, 0.0, 1.0);
        k.push_back({0.0, v});
        for (int i = 1; i < n; ++i) {
            t += uniform(g, 0.3, 2.0);
            v += uniform(g, 0.0, 2.0);
            k.push_back({t, v});
        }
        return CostFunction::piecewise_linear(k);
    }
    case 4: return CostFunction::exponential(uniform(g, 0.1, 2.0), uniform(g, 0.0, max_rate));
    default: {
        int a = std::uniform_int_distribution<int>(0, 4)(g);
        int b = std::uniform_int_distribution<int>(0, 4)(g);
        return CostFunction::sum({random_cost(g, a, max_rate), random_cost(g, b, max_rate)});
    }
    }
}

inline bool close_rel(double a, double b, double rel, double abs_floor = 1e-300) {
    return std::fabs(a - b) <= rel * std::max({std::fabs(a), std::fabs(b), abs_floor});
}

} // namespace oracle
