#ifndef TVHC_COST_MODEL_HPP
#define TVHC_COST_MODEL_HPP

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "tvhc/stats.hpp"

namespace tvhc {

class CostFunction;

namespace family {

struct Constant {
    double h = 0.0;
};

/// c(t) = sum_j a_j t^j.
struct Polynomial {
    std::vector<double> coeffs;
};

/// Logistic approximation of a hard deadline: h / (1 + exp(-(t - d) / w)).
struct SmoothedStep {
    double h = 0.0;
    double d = 0.0;
    double w = 0.0;
};

struct Knot {
    double t = 0.0;
    double value = 0.0;
};

/// Linear interpolation between knots (first knot at t = 0); beyond the last
/// knot the final segment's slope is continued.
struct PiecewiseLinear {
    std::vector<Knot> knots;
};

/// c(t) = a * exp(b t). Only admissible when b < mu - lambda for the class
/// that carries it; see growth_check.
struct Exponential {
    double scale = 0.0;
    double rate = 0.0;
};

struct Sum {
    std::vector<CostFunction> parts;
};

} // namespace family

enum class Family { constant, polynomial, smoothed_step, piecewise_linear, exponential, sum };

/// Nondecreasing, nonnegative holding-cost curve c(t) of job age t.
/// Immutable; parameters are validated by the named constructors.
class CostFunction {
public:
    using Repr = std::variant<family::Constant, family::Polynomial, family::SmoothedStep,
                              family::PiecewiseLinear, family::Exponential, family::Sum>;

    static CostFunction constant(double h);
    static CostFunction polynomial(std::vector<double> coeffs);
    /// Width defaults to 1% of the deadline when not given (w <= 0).
    static CostFunction smoothed_step(double h, double d, double w = 0.0);
    static CostFunction piecewise_linear(std::vector<family::Knot> knots);
    static CostFunction exponential(double scale, double rate);
    static CostFunction sum(std::vector<CostFunction> parts);

    Family kind() const;
    const Repr& repr() const { return repr_; }

    /// True when E[c(t+X)] has no closed form and needs numerical quadrature.
    bool needs_quadrature() const;
    /// Ages where c is non-smooth or changes sharply; quadrature splits there.
    std::vector<double> breakpoints() const;
    /// Returns a copy with every cost level multiplied by factor > 0.
    CostFunction scaled(double factor) const;
    std::string describe() const;

private:
    explicit CostFunction(Repr r) : repr_(std::move(r)) {}
    Repr repr_;
};

enum class ShiftMethod { automatic, closed_form, quadrature };

/// Parameters of E[c(t + X)], X ~ Exp(rate).
struct ShiftedExpectation {
    ShiftMethod method = ShiftMethod::automatic;
    double rate = 1.0;
    double eps_trunc = 1e-12;

    void validate() const;
};

double eval(const CostFunction& c, double t);
/// Right derivative at knots of piecewise-linear curves.
double deriv(const CostFunction& c, double t);
/// C(t) = \int_0^t c(x) dx.
double antideriv(const CostFunction& c, double t);
/// \int_0^t C(x) dx.
double antideriv2(const CostFunction& c, double t);

double exp_shift(const CostFunction& c, double t, const ShiftedExpectation& shift);
inline double exp_shift(const CostFunction& c, double t, double rate) {
    return exp_shift(c, t, ShiftedExpectation{ShiftMethod::automatic, rate, 1e-12});
}

/// Expected total holding cost of a class whose oldest job has age t:
/// r(t) = c(t) + lambda * C(t) for t >= 0 and 0 for t < 0.
double reward_r(const CostFunction& c, double lambda, double t);
/// \int_a^b r(s) ds, honoring r = 0 on negative states.
double reward_r_integral(const CostFunction& c, double lambda, double a, double b);

/// Monte Carlo of c(t) + E[sum c(Y_j)] over Poisson(lambda) epochs on (0, t).
Estimate r_mc_oracle(const CostFunction& c, double lambda, double t, std::size_t n_reps,
                     std::uint64_t seed);

struct GrowthVerdict {
    bool pass = true;
    std::string note;
};

/// Whether \int_0^t c grows slower than exp((mu - lambda) t).
GrowthVerdict growth_check(const CostFunction& c, double lambda, double mu);

} // namespace tvhc

#endif
