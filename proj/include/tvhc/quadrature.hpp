#ifndef TVHC_QUADRATURE_HPP
#define TVHC_QUADRATURE_HPP

#include <functional>
#include <span>
#include <vector>

namespace tvhc::quad {

struct Rule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Gauss–Laguerre rule for \int_0^\inf f(x) e^{-x} dx. Cached per order.
const Rule& gauss_laguerre(int order);

struct Result {
    double value = 0.0;
    double error = 0.0;
};

/// Adaptive Gauss–Kronrod (31 point) on [a, b], split at every breakpoint
/// that falls strictly inside the interval.
Result integrate(const std::function<double(double)>& f, double a, double b,
                 std::span<const double> breakpoints = {}, double rel_tol = 1e-12);

/// E[f(X)] for X ~ Exp(rate) by Gauss–Laguerre of the given order.
double laguerre_expectation(const std::function<double(double)>& f, double rate, int order = 64);

/// E[f(X)] for X ~ Exp(rate) by adaptive quadrature on [0, x_max] with
/// x_max = -ln(eps_trunc)/rate. The tail beyond x_max is approximated by
/// f(x_max) * eps_trunc, exact for f bounded and flat beyond x_max.
Result truncated_expectation(const std::function<double(double)>& f, double rate,
                             std::span<const double> breakpoints = {}, double eps_trunc = 1e-12,
                             double rel_tol = 1e-12);

} // namespace tvhc::quad

#endif
