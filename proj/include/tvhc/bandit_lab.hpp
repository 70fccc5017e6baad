#ifndef TVHC_BANDIT_LAB_HPP
#define TVHC_BANDIT_LAB_HPP

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "tvhc/cost_model.hpp"
#include "tvhc/stats.hpp"

namespace tvhc {

/// gamma1 = E[exp(-alpha T1)] for an M/M/1 busy period T1: the root in (0, 1)
/// of lambda g^2 - (lambda + mu + alpha) g + mu = 0.
double solve_gamma1(double lambda, double mu, double alpha);
/// 1 - gamma1 computed without cancellation.
double solve_one_minus_gamma1(double lambda, double mu, double alpha);
/// mu (1 - g) - (alpha + lambda - lambda g) g.
double gamma1_residual(double lambda, double mu, double alpha, double g);

/// Discounted single-arm bandit of one job class. Immutable.
class BanditEnv {
public:
    BanditEnv(double lambda, double mu, double alpha, CostFunction cost);

    double lambda() const { return lambda_; }
    double mu() const { return mu_; }
    double alpha() const { return alpha_; }
    const CostFunction& cost() const { return cost_; }
    double gamma1() const { return gamma1_; }
    double one_minus_gamma1() const { return delta_; }
    double gamma2() const { return gamma2_; }
    /// Rate of X in the shifted expectations: alpha / (1 - gamma1).
    double theta() const { return theta_; }

    double r(double t) const { return reward_r(cost_, lambda_, t); }

private:
    double lambda_, mu_, alpha_;
    CostFunction cost_;
    double gamma1_, delta_, gamma2_, theta_;
};

/// Discounted cost of one busy period started at state t.
double cost_bar(const BanditEnv& env, double t);
/// d/dt of cost_bar.
double cost_bar_deriv(const BanditEnv& env, double t);
Estimate cost_bar_mc(const BanditEnv& env, double t, std::size_t n_reps, std::uint64_t seed);

/// Discounted cost of the passive climb back after an Exp(lambda) drop below t.
double gamma_fn(const BanditEnv& env, double t);
Estimate gamma_fn_mc(const BanditEnv& env, double t, std::size_t n_reps, std::uint64_t seed);

double whittle_discounted(const BanditEnv& env, double t0);
/// Index value with the boundary convention W(0) = 0.
double whittle_discounted_boundary(const BanditEnv& env, double t0);

struct ThresholdCostOptions {
    /// Paths stop once exp(-alpha t) falls below this.
    double horizon_eps = 1e-10;
    std::size_t n_reps = 10000;
    std::uint64_t seed = 1;
};

/// Discounted cost from state s0 of the policy that is passive iff state < x.
/// x may be +inf (always passive).
Estimate threshold_cost_mc(const BanditEnv& env, double x, double s0, double ell,
                           const ThresholdCostOptions& opt = {});

/// Always-passive cost from s0, in closed form via quadrature.
double passive_cost(const BanditEnv& env, double s0, double ell);

/// Cost of Threshold(t0) started at t0.
double stationary_threshold_cost(const BanditEnv& env, double t0, double ell);
/// The same quantity when ell equals the index at t0, in its simplified form.
double value_at_threshold(const BanditEnv& env, double t0, double ell);

struct FdCheck {
    double residual = 0.0;
    double std_error = 0.0;
    double ell = 0.0;
    /// Plain forward difference at delta (before extrapolation).
    double raw = 0.0;
    bool pass = false;
};

/// Finite-difference derivative of the stationary threshold cost in the
/// threshold location, estimated with common random numbers. The residual is
/// Richardson-extrapolated from steps delta and 2 delta. With ell unset the
/// compensation is the discounted index at t0.
FdCheck whittle_fd_check(const BanditEnv& env, double t0, double delta_fd = 1e-2, std::size_t n_reps = 20000,
                         std::uint64_t seed = 1, double ell = std::numeric_limits<double>::quiet_NaN());

/// Value of Threshold(t0) with ell = index(t0), at any state t.
double threshold_value(const BanditEnv& env, double t, double t0);

/// mu (V(t) - E V(t - T2)) - ell for Threshold(t0) with ell = index(t0).
double hjb_margin(const BanditEnv& env, double t, double t0);

struct HjbPoint {
    double t = 0.0;
    double margin = 0.0;
    bool sign_ok = true;
};

struct HjbReport {
    double t0 = 0.0;
    double ell = 0.0;
    double tol = 0.0;
    std::vector<HjbPoint> points;
    bool pass = true;
};

/// Evaluates the margin on an increasing grid and checks its sign pattern
/// (<= tol below t0, >= -tol above) with tol = 1e-6 max(1, ell).
HjbReport hjb_scan(const BanditEnv& env, double t0, std::span<const double> grid);

struct ValueIterationOptions {
    double step = 1e-2;
    /// Upper state bound; non-positive means t0 + 20 / (mu - lambda).
    double upper = 0.0;
    /// Relative improvement needed to switch an action.
    double tol = 1e-12;
    /// Cap on policy-improvement rounds.
    std::size_t max_iter = 500;
};

struct ValueIterationResult {
    double step = 0.0;
    std::vector<double> states;
    std::vector<double> value;
    /// (Q_passive - Q_active) / step; negative where passive is optimal.
    std::vector<double> margin;
    /// Policy-improvement rounds used.
    std::size_t iterations = 0;
    double ell = 0.0;

    /// Linear interpolation of the margin at state t.
    double margin_at(double t) const;
};

/// Discrete-time dynamic-programming solution of the single-arm problem for a
/// fixed compensation, independent of the closed-form value functions. Solved
/// by policy iteration, so the result is the exact fixed point of the
/// discretised Bellman equation.
ValueIterationResult value_iteration(const BanditEnv& env, double ell, const ValueIterationOptions& opt = {});

struct ActionAgreement {
    std::size_t points = 0;
    std::size_t agree = 0;
    double fraction = 0.0;
};

/// Fraction of grid points where the value-iteration action matches the
/// threshold structure at t0 (points inside the indifference band agree).
ActionAgreement compare_actions(const ValueIterationResult& vi, double t0, std::span<const double> grid, double band);

struct IndexabilityReport {
    bool pass = true;
    std::string detail;
};

IndexabilityReport indexability_scan(const BanditEnv& env, std::span<const double> grid);

/// Always-active discounted cost started from state 0 (ell = 0).
double always_active_cost(const BanditEnv& env);

struct DiscountTrend {
    std::vector<double> alphas;
    std::vector<double> discounted;
    std::vector<double> gaps;
    double queue_mean = 0.0;
    bool pass = false;
};

/// Discounted always-active cost against a long-run average for a decreasing
/// discount sequence; passes when the relative gap shrinks.
DiscountTrend discount_limit_check(double lambda, double mu, const CostFunction& cost,
                                   std::span<const double> alphas, double queue_mean);

/// Monte Carlo estimate of E[exp(-alpha T1)] over simulated busy periods.
Estimate busy_period_lst_mc(double lambda, double mu, double alpha, std::size_t n_reps, std::uint64_t seed);

} // namespace tvhc

#endif
