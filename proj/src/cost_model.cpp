#include "tvhc/cost_model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "tvhc/errors.hpp"
#include "tvhc/quadrature.hpp"

namespace tvhc {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

void require_finite(double x, const char* what) {
    if (!std::isfinite(x)) throw ConfigError(std::string(what) + " must be finite");
}

void require_age(double t) {
    if (!(t >= 0.0)) throw DomainError("age must be nonnegative, got " + std::to_string(t));
}

double sigmoid(double u) {
    if (u >= 0) return 1.0 / (1.0 + std::exp(-u));
    double e = std::exp(u);
    return e / (1.0 + e);
}

double softplus(double u) {
    if (u > 0) return u + std::log1p(std::exp(-u));
    return std::log1p(std::exp(u));
}

// Antiderivative of softplus, -Li2(-e^u). For u <= 0 the identity
// Li2(z) = -Li2(z / (z - 1)) - ln^2(1 - z) / 2 moves the argument into
// [0, 1/2], where the power series converges geometrically.
double softplus_integral(double u) {
    constexpr double kPi2Over6 = 1.6449340668482264;
    if (u > 0) return 0.5 * u * u + kPi2Over6 - softplus_integral(-u);
    const double x = sigmoid(u);
    double li2 = 0.0, p = x;
    for (int k = 1; k <= 200 && p > 1e-18 * li2; ++k, p *= x) li2 += p / (static_cast<double>(k) * k);
    const double sp = softplus(u);
    return li2 + 0.5 * sp * sp;
}

// ---- polynomial helpers ----

double horner(const std::vector<double>& a, double t) {
    double v = 0.0;
    for (auto it = a.rbegin(); it != a.rend(); ++it) v = v * t + *it;
    return v;
}

std::vector<double> differentiate(const std::vector<double>& a) {
    std::vector<double> d;
    for (std::size_t j = 1; j < a.size(); ++j) d.push_back(a[j] * static_cast<double>(j));
    return d;
}

// E[p(t+X)] = sum_k p^{(k)}(t) / rate^k
double poly_shift(const std::vector<double>& a, double t, double rate) {
    double total = 0.0, scale = 1.0;
    std::vector<double> d = a;
    while (!d.empty()) {
        total += horner(d, t) * scale;
        d = differentiate(d);
        scale /= rate;
    }
    return total;
}

// ---- piecewise-linear helpers ----

double pl_tail_slope(const family::PiecewiseLinear& p) {
    const auto& k = p.knots;
    if (k.size() < 2) return 0.0;
    const auto& a = k[k.size() - 2];
    const auto& b = k.back();
    return (b.value - a.value) / (b.t - a.t);
}

// Segment index s with knots[s].t <= t < knots[s+1].t; last index for the tail.
std::size_t pl_segment(const family::PiecewiseLinear& p, double t) {
    const auto& k = p.knots;
    auto it = std::upper_bound(k.begin(), k.end(), t,
                               [](double x, const family::Knot& kn) { return x < kn.t; });
    return static_cast<std::size_t>(std::distance(k.begin(), it)) - 1;
}

double pl_slope(const family::PiecewiseLinear& p, std::size_t s) {
    const auto& k = p.knots;
    if (s + 1 < k.size()) return (k[s + 1].value - k[s].value) / (k[s + 1].t - k[s].t);
    return pl_tail_slope(p);
}

double pl_eval(const family::PiecewiseLinear& p, double t) {
    std::size_t s = pl_segment(p, t);
    return p.knots[s].value + pl_slope(p, s) * (t - p.knots[s].t);
}

double pl_antideriv(const family::PiecewiseLinear& p, double t) {
    const auto& k = p.knots;
    double acc = 0.0;
    for (std::size_t s = 0; s < k.size(); ++s) {
        double a = k[s].t;
        if (t <= a) break;
        double b = (s + 1 < k.size()) ? std::min(t, k[s + 1].t) : t;
        double m = pl_slope(p, s);
        double len = b - a;
        acc += k[s].value * len + 0.5 * m * len * len;
    }
    return acc;
}

double pl_antideriv2(const family::PiecewiseLinear& p, double t) {
    const auto& k = p.knots;
    double acc = 0.0, cum = 0.0;
    for (std::size_t s = 0; s < k.size(); ++s) {
        double a = k[s].t;
        if (t <= a) break;
        double b = (s + 1 < k.size()) ? std::min(t, k[s + 1].t) : t;
        double m = pl_slope(p, s);
        double len = b - a;
        acc += cum * len + 0.5 * k[s].value * len * len + m * len * len * len / 6.0;
        cum += k[s].value * len + 0.5 * m * len * len;
    }
    return acc;
}

double pl_shift(const family::PiecewiseLinear& p, double t, double rate) {
    // \int_L^U (q + m s) rate e^{-rate (s - t)} ds, F(s) = -e^{-rate(s-t)} (q + m s + m/rate)
    const auto& k = p.knots;
    double total = 0.0;
    for (std::size_t s = 0; s < k.size(); ++s) {
        double lo = k[s].t;
        double hi = (s + 1 < k.size()) ? k[s + 1].t : std::numeric_limits<double>::infinity();
        if (hi <= t) continue;
        lo = std::max(lo, t);
        double m = pl_slope(p, s);
        double q = k[s].value - m * k[s].t;
        auto F = [&](double x) {
            if (std::isinf(x)) return 0.0;
            return -std::exp(-rate * (x - t)) * (q + m * x + m / rate);
        };
        total += F(hi) - F(lo);
    }
    return total;
}

bool has_closed_shift(const CostFunction& c) {
    return std::visit(overloaded{
                          [](const family::SmoothedStep&) { return false; },
                          [](const family::Sum& s) {
                              return std::all_of(s.parts.begin(), s.parts.end(),
                                                 [](const CostFunction& p) { return has_closed_shift(p); });
                          },
                          [](const auto&) { return true; },
                      },
                      c.repr());
}

double closed_shift(const CostFunction& c, double t, double rate) {
    return std::visit(
        overloaded{
            [](const family::Constant& f) { return f.h; },
            [&](const family::Polynomial& f) { return poly_shift(f.coeffs, t, rate); },
            [&](const family::PiecewiseLinear& f) { return pl_shift(f, t, rate); },
            [&](const family::Exponential& f) {
                if (f.rate == 0.0) return f.scale;
                if (!(rate > f.rate))
                    throw DomainError("E[c(t+X)] diverges: exponential cost rate " +
                                      std::to_string(f.rate) + " >= shift rate " + std::to_string(rate));
                return f.scale * std::exp(f.rate * t) * rate / (rate - f.rate);
            },
            [&](const family::Sum& f) {
                double v = 0.0;
                for (const auto& p : f.parts) v += closed_shift(p, t, rate);
                return v;
            },
            [](const family::SmoothedStep&) -> double {
                throw ConfigError("smoothed_step has no closed-form shifted expectation");
            },
        },
        c.repr());
}

double quadrature_shift(const CostFunction& c, double t, const ShiftedExpectation& sh) {
    const double rate = sh.rate;
    const double x_max = -std::log(sh.eps_trunc) / rate;
    std::vector<double> cuts;
    for (double b : c.breakpoints()) {
        cuts.push_back(b - t);
        if (const auto* st = std::get_if<family::SmoothedStep>(&c.repr())) {
            for (double k : {-40.0, -10.0, -3.0, 3.0, 10.0, 40.0}) cuts.push_back(st->d + k * st->w - t);
        }
    }
    auto g = [&](double x) { return eval(c, t + x) * rate * std::exp(-rate * x); };
    quad::Result r = quad::integrate(g, 0.0, x_max, cuts, 1e-12);
    double tail = has_closed_shift(c) ? sh.eps_trunc * closed_shift(c, t + x_max, rate)
                                      : sh.eps_trunc * eval(c, t + x_max);
    double value = r.value + tail;
    if (r.error > 1e-8 * std::fabs(value) + 1e-14)
        throw NumericError("shifted-expectation quadrature did not converge", r.error);
    return value;
}

double step_shift(const family::SmoothedStep& f, const CostFunction& c, double t,
                  const ShiftedExpectation& sh) {
    if (sh.rate * f.w >= 1.0) {
        return quad::laguerre_expectation(
            [&](double x) { return f.h * sigmoid((t + x - f.d) / f.w); }, sh.rate, 64);
    }
    return quadrature_shift(c, t, sh);
}

double auto_shift(const CostFunction& c, double t, const ShiftedExpectation& sh) {
    return std::visit(overloaded{
                          [&](const family::SmoothedStep& f) { return step_shift(f, c, t, sh); },
                          [&](const family::Sum& f) {
                              double v = 0.0;
                              for (const auto& p : f.parts) v += auto_shift(p, t, sh);
                              return v;
                          },
                          [&](const auto&) { return closed_shift(c, t, sh.rate); },
                      },
                      c.repr());
}

} // namespace

// ---------------------------------------------------------------- construction

CostFunction CostFunction::constant(double h) {
    require_finite(h, "constant cost");
    if (h < 0) throw ConfigError("constant cost must be nonnegative");
    return CostFunction(family::Constant{h});
}

CostFunction CostFunction::polynomial(std::vector<double> coeffs) {
    if (coeffs.empty()) throw ConfigError("polynomial needs at least one coefficient");
    for (std::size_t j = 0; j < coeffs.size(); ++j) {
        require_finite(coeffs[j], "polynomial coefficient");
        if (coeffs[j] < 0)
            throw ConfigError("polynomial coefficient a_" + std::to_string(j) +
                              " is negative; cost would not be nonnegative and nondecreasing");
    }
    return CostFunction(family::Polynomial{std::move(coeffs)});
}

CostFunction CostFunction::smoothed_step(double h, double d, double w) {
    require_finite(h, "step height");
    require_finite(d, "deadline");
    require_finite(w, "step width");
    if (h < 0) throw ConfigError("smoothed_step height must be nonnegative");
    if (d < 0) throw ConfigError("smoothed_step deadline must be nonnegative");
    if (w <= 0) w = 0.01 * d;
    if (!(w > 0)) throw ConfigError("smoothed_step width must be positive");
    return CostFunction(family::SmoothedStep{h, d, w});
}

CostFunction CostFunction::piecewise_linear(std::vector<family::Knot> knots) {
    if (knots.empty()) throw ConfigError("piecewise_linear needs at least one knot");
    if (knots.front().t != 0.0) throw ConfigError("piecewise_linear first knot must be at t = 0");
    for (std::size_t i = 0; i < knots.size(); ++i) {
        require_finite(knots[i].t, "knot time");
        require_finite(knots[i].value, "knot value");
        if (knots[i].value < 0) throw ConfigError("piecewise_linear values must be nonnegative");
        if (i > 0) {
            if (!(knots[i].t > knots[i - 1].t))
                throw ConfigError("piecewise_linear knot times must be strictly increasing");
            if (knots[i].value < knots[i - 1].value)
                throw ConfigError("piecewise_linear knot values must be nondecreasing");
        }
    }
    return CostFunction(family::PiecewiseLinear{std::move(knots)});
}

CostFunction CostFunction::exponential(double scale, double rate) {
    require_finite(scale, "exponential scale");
    require_finite(rate, "exponential rate");
    if (scale < 0 || rate < 0) throw ConfigError("exponential cost needs scale >= 0 and rate >= 0");
    return CostFunction(family::Exponential{scale, rate});
}

CostFunction CostFunction::sum(std::vector<CostFunction> parts) {
    if (parts.empty()) throw ConfigError("sum needs at least one part");
    return CostFunction(family::Sum{std::move(parts)});
}

Family CostFunction::kind() const {
    return static_cast<Family>(repr_.index());
}

bool CostFunction::needs_quadrature() const {
    return !has_closed_shift(*this);
}

std::vector<double> CostFunction::breakpoints() const {
    return std::visit(overloaded{
                          [](const family::SmoothedStep& f) { return std::vector<double>{f.d}; },
                          [](const family::PiecewiseLinear& f) {
                              std::vector<double> v;
                              for (const auto& k : f.knots) v.push_back(k.t);
                              return v;
                          },
                          [](const family::Sum& f) {
                              std::vector<double> v;
                              for (const auto& p : f.parts) {
                                  auto b = p.breakpoints();
                                  v.insert(v.end(), b.begin(), b.end());
                              }
                              return v;
                          },
                          [](const auto&) { return std::vector<double>{}; },
                      },
                      repr_);
}

CostFunction CostFunction::scaled(double factor) const {
    if (!(factor > 0)) throw ConfigError("scale factor must be positive");
    return std::visit(overloaded{
                          [&](const family::Constant& f) { return constant(f.h * factor); },
                          [&](const family::Polynomial& f) {
                              auto a = f.coeffs;
                              for (double& x : a) x *= factor;
                              return polynomial(std::move(a));
                          },
                          [&](const family::SmoothedStep& f) { return smoothed_step(f.h * factor, f.d, f.w); },
                          [&](const family::PiecewiseLinear& f) {
                              auto k = f.knots;
                              for (auto& x : k) x.value *= factor;
                              return piecewise_linear(std::move(k));
                          },
                          [&](const family::Exponential& f) { return exponential(f.scale * factor, f.rate); },
                          [&](const family::Sum& f) {
                              std::vector<CostFunction> p;
                              for (const auto& x : f.parts) p.push_back(x.scaled(factor));
                              return sum(std::move(p));
                          },
                      },
                      repr_);
}

std::string CostFunction::describe() const {
    std::ostringstream os;
    std::visit(overloaded{
                   [&](const family::Constant& f) { os << "constant(" << f.h << ")"; },
                   [&](const family::Polynomial& f) {
                       os << "polynomial(";
                       for (std::size_t i = 0; i < f.coeffs.size(); ++i) os << (i ? "," : "") << f.coeffs[i];
                       os << ")";
                   },
                   [&](const family::SmoothedStep& f) {
                       os << "smoothed_step(h=" << f.h << ",d=" << f.d << ",w=" << f.w << ")";
                   },
                   [&](const family::PiecewiseLinear& f) {
                       os << "piecewise_linear(";
                       for (std::size_t i = 0; i < f.knots.size(); ++i)
                           os << (i ? ";" : "") << f.knots[i].t << ":" << f.knots[i].value;
                       os << ")";
                   },
                   [&](const family::Exponential& f) { os << "exponential(" << f.scale << "," << f.rate << ")"; },
                   [&](const family::Sum& f) {
                       os << "sum(";
                       for (std::size_t i = 0; i < f.parts.size(); ++i) os << (i ? "+" : "") << f.parts[i].describe();
                       os << ")";
                   },
               },
               repr_);
    return os.str();
}

void ShiftedExpectation::validate() const {
    if (!(rate > 0))
        throw DomainError("shift rate must be positive (unstable class?), got " + std::to_string(rate));
    if (!(eps_trunc > 0 && eps_trunc <= 1e-6)) throw DomainError("eps_trunc must lie in (0, 1e-6]");
}

// ---------------------------------------------------------------- evaluation

double eval(const CostFunction& c, double t) {
    require_age(t);
    return std::visit(overloaded{
                          [](const family::Constant& f) { return f.h; },
                          [&](const family::Polynomial& f) { return horner(f.coeffs, t); },
                          [&](const family::SmoothedStep& f) { return f.h * sigmoid((t - f.d) / f.w); },
                          [&](const family::PiecewiseLinear& f) { return pl_eval(f, t); },
                          [&](const family::Exponential& f) { return f.scale * std::exp(f.rate * t); },
                          [&](const family::Sum& f) {
                              double v = 0.0;
                              for (const auto& p : f.parts) v += eval(p, t);
                              return v;
                          },
                      },
                      c.repr());
}

double deriv(const CostFunction& c, double t) {
    require_age(t);
    return std::visit(overloaded{
                          [](const family::Constant&) { return 0.0; },
                          [&](const family::Polynomial& f) { return horner(differentiate(f.coeffs), t); },
                          [&](const family::SmoothedStep& f) {
                              double s = sigmoid((t - f.d) / f.w);
                              return f.h / f.w * s * (1.0 - s);
                          },
                          [&](const family::PiecewiseLinear& f) { return pl_slope(f, pl_segment(f, t)); },
                          [&](const family::Exponential& f) { return f.scale * f.rate * std::exp(f.rate * t); },
                          [&](const family::Sum& f) {
                              double v = 0.0;
                              for (const auto& p : f.parts) v += deriv(p, t);
                              return v;
                          },
                      },
                      c.repr());
}

double antideriv(const CostFunction& c, double t) {
    require_age(t);
    return std::visit(
        overloaded{
            [&](const family::Constant& f) { return f.h * t; },
            [&](const family::Polynomial& f) {
                double v = 0.0, tp = t;
                for (std::size_t j = 0; j < f.coeffs.size(); ++j, tp *= t)
                    v += f.coeffs[j] * tp / static_cast<double>(j + 1);
                return v;
            },
            [&](const family::SmoothedStep& f) {
                return f.h * f.w * (softplus((t - f.d) / f.w) - softplus(-f.d / f.w));
            },
            [&](const family::PiecewiseLinear& f) { return pl_antideriv(f, t); },
            [&](const family::Exponential& f) {
                if (f.rate == 0.0) return f.scale * t;
                return f.scale * std::expm1(f.rate * t) / f.rate;
            },
            [&](const family::Sum& f) {
                double v = 0.0;
                for (const auto& p : f.parts) v += antideriv(p, t);
                return v;
            },
        },
        c.repr());
}

double antideriv2(const CostFunction& c, double t) {
    require_age(t);
    return std::visit(
        overloaded{
            [&](const family::Constant& f) { return 0.5 * f.h * t * t; },
            [&](const family::Polynomial& f) {
                double v = 0.0, tp = t * t;
                for (std::size_t j = 0; j < f.coeffs.size(); ++j, tp *= t)
                    v += f.coeffs[j] * tp / static_cast<double>((j + 1) * (j + 2));
                return v;
            },
            [&](const family::SmoothedStep& f) {
                const double y0 = -f.d / f.w;
                const double y1 = (t - f.d) / f.w;
                return f.h * f.w * (f.w * (softplus_integral(y1) - softplus_integral(y0)) - t * softplus(y0));
            },
            [&](const family::PiecewiseLinear& f) { return pl_antideriv2(f, t); },
            [&](const family::Exponential& f) {
                if (f.rate == 0.0) return 0.5 * f.scale * t * t;
                return f.scale * (std::expm1(f.rate * t) / f.rate - t) / f.rate;
            },
            [&](const family::Sum& f) {
                double v = 0.0;
                for (const auto& p : f.parts) v += antideriv2(p, t);
                return v;
            },
        },
        c.repr());
}

double exp_shift(const CostFunction& c, double t, const ShiftedExpectation& shift) {
    require_age(t);
    shift.validate();
    switch (shift.method) {
    case ShiftMethod::closed_form:
        return closed_shift(c, t, shift.rate);
    case ShiftMethod::quadrature:
        return quadrature_shift(c, t, shift);
    case ShiftMethod::automatic:
        break;
    }
    return auto_shift(c, t, shift);
}

double reward_r(const CostFunction& c, double lambda, double t) {
    if (t < 0) return 0.0;
    if (lambda < 0) throw DomainError("arrival rate must be nonnegative");
    if (lambda == 0) return eval(c, t);
    return eval(c, t) + lambda * antideriv(c, t);
}

double reward_r_integral(const CostFunction& c, double lambda, double a, double b) {
    if (lambda < 0) throw DomainError("arrival rate must be nonnegative");
    a = std::max(a, 0.0);
    b = std::max(b, 0.0);
    if (b <= a) return 0.0;
    auto R = [&](double x) { return antideriv(c, x) + (lambda > 0 ? lambda * antideriv2(c, x) : 0.0); };
    return R(b) - R(a);
}

Estimate r_mc_oracle(const CostFunction& c, double lambda, double t, std::size_t n_reps,
                     std::uint64_t seed) {
    require_age(t);
    if (n_reps < 1) throw DomainError("n_reps must be at least 1");
    const double base = eval(c, t);
    if (lambda == 0) return {base, 0.0};
    std::mt19937_64 eng(seed);
    std::poisson_distribution<long> count(lambda * t);
    std::uniform_real_distribution<double> u(0.0, t);
    RunningStats s;
    for (std::size_t i = 0; i < n_reps; ++i) {
        long n = count(eng);
        double v = base;
        for (long j = 0; j < n; ++j) v += eval(c, u(eng));
        s.add(v);
    }
    return to_estimate(s);
}

GrowthVerdict growth_check(const CostFunction& c, double lambda, double mu) {
    if (!(mu > lambda))
        throw InstabilityError("class is unstable: lambda=" + std::to_string(lambda) +
                               " >= mu=" + std::to_string(mu));
    const double margin = mu - lambda;
    return std::visit(overloaded{
                          [&](const family::Exponential& f) -> GrowthVerdict {
                              if (f.scale == 0.0 || f.rate < margin)
                                  return {true, "exponential growth below mu - lambda"};
                              return {false, c.describe() + " grows at rate " + std::to_string(f.rate) +
                                                 " >= mu - lambda = " + std::to_string(margin)};
                          },
                          [&](const family::Sum& f) -> GrowthVerdict {
                              for (const auto& p : f.parts) {
                                  auto v = growth_check(p, lambda, mu);
                                  if (!v.pass) return v;
                              }
                              return {true, "all parts subexponential"};
                          },
                          [&](const auto&) -> GrowthVerdict { return {true, "subexponential family"}; },
                      },
                      c.repr());
}

} // namespace tvhc
