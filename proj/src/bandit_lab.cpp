#include "tvhc/bandit_lab.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <lapacke.h>

#include "tvhc/errors.hpp"
#include "tvhc/quadrature.hpp"
#include "tvhc/rng.hpp"

namespace tvhc {

namespace {

void require_state(double t) {
    if (!(t >= 0)) throw DomainError("state must be nonnegative");
}

// \int_0^len alpha r(s + u) e^{-alpha u} du, honoring r = 0 below zero
double discounted_r(const BanditEnv& env, double s, double len, double rel_tol = 1e-11) {
    double lo = std::max(0.0, -s);
    if (len <= lo) return 0.0;
    const double a = env.alpha();
    std::vector<double> cuts;
    for (double b : env.cost().breakpoints()) cuts.push_back(b - s);
    auto f = [&](double u) { return a * env.r(s + u) * std::exp(-a * u); };
    return quad::integrate(f, lo, len, cuts, rel_tol).value;
}

// Cost of Threshold(x) along one path; service timers and drop sizes come
// from the given streams so several thresholds can share them.
double threshold_path(const BanditEnv& env, double x, double s0, double ell, double t_max, ExpStream& service,
                      ExpStream& drop) {
    const double a = env.alpha();
    const double gate = std::max(x, 0.0);
    double s = s0, tau = 0.0, total = 0.0;
    while (tau < t_max) {
        double disc = std::exp(-a * tau);
        if (s < gate) {
            double len = std::min(gate - s, t_max - tau);
            total += disc * (discounted_r(env, s, len) + ell * std::expm1(-a * len) / a);
            tau += len;
            s = len == gate - s ? gate : s + len;
            continue;
        }
        double S = service.next();
        double len = std::min(S, t_max - tau);
        total += disc * discounted_r(env, s, len);
        s += len;
        tau += len;
        if (len < S) break;
        s -= drop.next();
    }
    return total;
}

// \int_{t0}^{t} e^{-k (t - s)} f(s) ds
double exp_kernel_integral(const BanditEnv& env, const std::function<double(double)>& f, double t0, double t,
                           double k) {
    if (t <= t0) return 0.0;
    std::vector<double> cuts = env.cost().breakpoints();
    auto g = [&](double s) { return std::exp(-k * (t - s)) * f(s); };
    auto res = quad::integrate(g, t0, t, cuts, 1e-12);
    if (!std::isfinite(res.value)) throw NumericError("kernel integral is not finite", res.error);
    return res.value;
}

} // namespace

double solve_one_minus_gamma1(double lambda, double mu, double alpha) {
    if (!(mu > 0) || !(alpha > 0) || !(lambda >= 0))
        throw DomainError("need mu > 0, alpha > 0, lambda >= 0");
    const double b = mu + alpha - lambda;
    const double disc = b * b + 4.0 * lambda * alpha;
    if (!(disc >= 0)) throw NumericError("negative discriminant in busy-period transform", disc);
    // root of lambda d^2 + (mu + alpha - lambda) d - alpha = 0 in rationalized form
    return 2.0 * alpha / (b + std::sqrt(disc));
}

double solve_gamma1(double lambda, double mu, double alpha) {
    if (lambda == 0.0) {
        if (!(mu > 0) || !(alpha > 0)) throw DomainError("need mu > 0, alpha > 0");
        return mu / (mu + alpha);
    }
    return 1.0 - solve_one_minus_gamma1(lambda, mu, alpha);
}

double gamma1_residual(double lambda, double mu, double alpha, double g) {
    return mu * (1.0 - g) - (alpha + lambda - lambda * g) * g;
}

BanditEnv::BanditEnv(double lambda, double mu, double alpha, CostFunction cost)
    : lambda_(lambda), mu_(mu), alpha_(alpha), cost_(std::move(cost)) {
    if (!(alpha > 0)) throw DomainError("discount rate must be positive");
    if (!(mu > 0) || !(lambda >= 0)) throw DomainError("need mu > 0 and lambda >= 0");
    if (!(lambda < mu)) throw InstabilityError("bandit arm needs lambda < mu");
    delta_ = solve_one_minus_gamma1(lambda, mu, alpha);
    gamma1_ = solve_gamma1(lambda, mu, alpha);
    gamma2_ = lambda / (lambda + alpha);
    const double b = mu + alpha - lambda;
    theta_ = 0.5 * (b + std::sqrt(b * b + 4.0 * lambda * alpha));
}

double cost_bar(const BanditEnv& env, double t) {
    require_state(t);
    const double shift = exp_shift(env.cost(), t, env.theta());
    const double gap = env.lambda() * antideriv(env.cost(), t);
    return env.one_minus_gamma1() * (gap + env.mu() / (env.gamma1() * env.theta()) * shift);
}

double cost_bar_deriv(const BanditEnv& env, double t) {
    require_state(t);
    const double c = eval(env.cost(), t);
    const double shift = exp_shift(env.cost(), t, env.theta());
    return env.one_minus_gamma1() * (env.lambda() * c + env.mu() / env.gamma1() * (shift - c));
}

Estimate cost_bar_mc(const BanditEnv& env, double t, std::size_t n_reps, std::uint64_t seed) {
    require_state(t);
    if (n_reps < 2) throw DomainError("need at least two replications");
    const double a = env.alpha();
    const double t_max = -std::log(1e-10) / a;
    RunningStats st;
    for (std::size_t rep = 0; rep < n_reps; ++rep) {
        ExpStream service(env.mu(), substream_seed(seed, rep, 0, StreamKind::service));
        ExpStream drop(env.lambda(), substream_seed(seed, rep, 0, StreamKind::interarrival));
        double age = 0.0, tau = 0.0, total = 0.0;
        while (tau < t_max) {
            double S = service.next();
            double len = std::min(S, t_max - tau);
            total += std::exp(-a * tau) * discounted_r(env, t + age, len, 1e-9);
            age += len;
            tau += len;
            if (len < S) break;
            age -= drop.next();
            if (age < 0) break;
        }
        st.add(total);
    }
    return to_estimate(st);
}

double gamma_fn(const BanditEnv& env, double t) {
    if (t <= 0) return 0.0;
    const double l = env.lambda();
    if (l == 0.0) return 0.0;
    return env.alpha() / (env.alpha() + l) * l * antideriv(env.cost(), t);
}

Estimate gamma_fn_mc(const BanditEnv& env, double t, std::size_t n_reps, std::uint64_t seed) {
    require_state(t);
    if (n_reps < 2) throw DomainError("need at least two replications");
    if (env.lambda() == 0.0) return {0.0, 0.0};
    ExpStream drop(env.lambda(), substream_seed(seed, 0, 0, StreamKind::auxiliary));
    RunningStats st;
    for (std::size_t rep = 0; rep < n_reps; ++rep) {
        double T2 = drop.next();
        st.add(discounted_r(env, t - T2, T2, 1e-9));
    }
    return to_estimate(st);
}

double whittle_discounted(const BanditEnv& env, double t0) {
    require_state(t0);
    return env.mu() * exp_shift(env.cost(), t0, env.theta());
}

double whittle_discounted_boundary(const BanditEnv& env, double t0) {
    return t0 == 0.0 ? 0.0 : whittle_discounted(env, t0);
}

Estimate threshold_cost_mc(const BanditEnv& env, double x, double s0, double ell, const ThresholdCostOptions& opt) {
    if (!(opt.horizon_eps > 0 && opt.horizon_eps < 1)) throw DomainError("horizon_eps must lie in (0, 1)");
    if (opt.n_reps < 2) throw DomainError("need at least two replications");
    const double t_max = -std::log(opt.horizon_eps) / env.alpha();
    RunningStats st;
    for (std::size_t rep = 0; rep < opt.n_reps; ++rep) {
        ExpStream service(env.mu(), substream_seed(opt.seed, rep, 0, StreamKind::service));
        ExpStream drop(env.lambda(), substream_seed(opt.seed, rep, 0, StreamKind::interarrival));
        st.add(threshold_path(env, x, s0, ell, t_max, service, drop));
    }
    return to_estimate(st);
}

double passive_cost(const BanditEnv& env, double s0, double ell) {
    const double a = env.alpha();
    const double lo = std::max(0.0, -s0);
    std::vector<double> cuts;
    for (double b : env.cost().breakpoints()) cuts.push_back(b - s0);
    auto f = [&](double u) { return a * env.r(s0 + u) * std::exp(-a * u); };
    double hi = lo + 60.0 / a;
    auto res = quad::integrate(f, lo, hi, cuts, 1e-12);
    return res.value - ell / a;
}

double stationary_threshold_cost(const BanditEnv& env, double t0, double ell) {
    require_state(t0);
    const double g1 = env.gamma1(), g2 = env.gamma2();
    const double num = cost_bar(env, t0) + g1 * (gamma_fn(env, t0) - ell * (1.0 - g2) / env.alpha());
    return num / (1.0 - g1 * g2);
}

double value_at_threshold(const BanditEnv& env, double t0, double ell) {
    require_state(t0);
    const double a = env.alpha();
    const double gap = env.lambda() * antideriv(env.cost(), t0);
    return gap - ell / a + (env.lambda() + a) / env.mu() * ell / a;
}

FdCheck whittle_fd_check(const BanditEnv& env, double t0, double delta_fd, std::size_t n_reps, std::uint64_t seed,
                         double ell) {
    require_state(t0);
    if (!(delta_fd > 0)) throw DomainError("finite-difference step must be positive");
    if (n_reps < 2) throw DomainError("need at least two replications");
    FdCheck out;
    out.ell = std::isnan(ell) ? whittle_discounted(env, t0) : ell;
    const double t_max = -std::log(1e-10) / env.alpha();
    RunningStats extrap, raw;
    for (std::size_t rep = 0; rep < n_reps; ++rep) {
        double cost[3];
        for (int k = 0; k < 3; ++k) {
            ExpStream service(env.mu(), substream_seed(seed, rep, 0, StreamKind::service));
            ExpStream drop(env.lambda(), substream_seed(seed, rep, 0, StreamKind::interarrival));
            cost[k] = threshold_path(env, t0 + k * delta_fd, t0, out.ell, t_max, service, drop);
        }
        double d1 = (cost[0] - cost[1]) / delta_fd;
        double d2 = (cost[0] - cost[2]) / (2.0 * delta_fd);
        raw.add(d1);
        extrap.add(2.0 * d1 - d2);
    }
    out.residual = extrap.mean();
    out.std_error = extrap.std_error();
    out.raw = raw.mean();
    out.pass = std::fabs(out.residual) <= 3.0 * out.std_error;
    return out;
}

double threshold_value(const BanditEnv& env, double t, double t0) {
    require_state(t0);
    const double ell = whittle_discounted(env, t0);
    const double a = env.alpha(), l = env.lambda(), g1 = env.gamma1(), d = env.one_minus_gamma1();
    if (t <= t0) {
        double span = t0 - t;
        double decay = std::exp(-a * span);
        return discounted_r(env, t, span, 1e-12) + decay * value_at_threshold(env, t0, ell) + std::expm1(-a * span) * ell / a;
    }
    const double k = l * d;
    auto cbd = [&](double s) { return cost_bar_deriv(env, s); };
    return cost_bar(env, t) / d + g1 * std::exp(-k * (t - t0)) * (l / env.mu() - 1.0 / g1) * ell / a -
           g1 / d * exp_kernel_integral(env, cbd, t0, t, k);
}

namespace {

double margin_passive_side(const BanditEnv& env, double t, double ell, double V) {
    const double g2 = env.gamma2();
    const double EV = gamma_fn(env, t) - ell * (1.0 - g2) / env.alpha() + g2 * V;
    return env.mu() * (V - EV) - ell;
}

// V(t) - Cost(t) = gamma1 E V(t - T2) on the active side; substituting the
// kernel form of V cancels the Cost(t)/(1 - gamma1) term exactly.
double margin_active_side(const BanditEnv& env, double t, double t0, double ell, double kernel) {
    const double a = env.alpha(), l = env.lambda(), g1 = env.gamma1(), d = env.one_minus_gamma1();
    const double k = l * d;
    return env.mu() * (kernel - d * std::exp(-k * (t - t0)) * (l / env.mu() - 1.0 / g1) * ell / a) - ell;
}

} // namespace

double hjb_margin(const BanditEnv& env, double t, double t0) {
    require_state(t0);
    const double ell = whittle_discounted(env, t0);
    if (t <= t0) return margin_passive_side(env, t, ell, threshold_value(env, t, t0));
    const double k = env.lambda() * env.one_minus_gamma1();
    auto cbd = [&](double s) { return cost_bar_deriv(env, s); };
    return margin_active_side(env, t, t0, ell, exp_kernel_integral(env, cbd, t0, t, k));
}

HjbReport hjb_scan(const BanditEnv& env, double t0, std::span<const double> grid) {
    require_state(t0);
    HjbReport rep;
    rep.t0 = t0;
    rep.ell = whittle_discounted(env, t0);
    rep.tol = 1e-6 * std::max(1.0, std::fabs(rep.ell));
    const double k = env.lambda() * env.one_minus_gamma1();
    auto cbd = [&](double s) { return cost_bar_deriv(env, s); };
    const double V0 = value_at_threshold(env, t0, rep.ell);
    const double a = env.alpha();
    // running kernel integral over (t0, t] on the active side
    double kernel = 0.0, last = t0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double t = grid[i];
        if (i > 0 && !(t > grid[i - 1])) throw DomainError("grid must be increasing");
        double m;
        if (t <= t0) {
            double span = t0 - t;
            double V = discounted_r(env, t, span, 1e-12) + std::exp(-a * span) * V0 + std::expm1(-a * span) * rep.ell / a;
            m = margin_passive_side(env, t, rep.ell, V);
        } else {
            kernel = std::exp(-k * (t - last)) * kernel + exp_kernel_integral(env, cbd, last, t, k);
            last = t;
            m = margin_active_side(env, t, t0, rep.ell, kernel);
        }
        bool ok = t < t0 ? m <= rep.tol : t > t0 ? m >= -rep.tol : std::fabs(m) <= rep.tol;
        rep.points.push_back({t, m, ok});
        rep.pass = rep.pass && ok;
    }
    return rep;
}

double ValueIterationResult::margin_at(double t) const {
    if (states.empty()) throw DomainError("empty value-iteration result");
    if (t <= states.front()) return margin.front();
    if (t >= states.back()) return margin.back();
    double x = (t - states.front()) / step;
    auto k = static_cast<std::size_t>(x);
    if (k + 1 >= states.size()) return margin.back();
    double f = x - static_cast<double>(k);
    return margin[k] + f * (margin[k + 1] - margin[k]);
}

ValueIterationResult value_iteration(const BanditEnv& env, double ell, const ValueIterationOptions& opt) {
    const double h = opt.step;
    if (!(h > 0)) throw DomainError("value-iteration step must be positive");
    const double a = env.alpha(), l = env.lambda(), mu = env.mu(), g2 = env.gamma2();
    if (!(mu * h < 1)) throw DomainError("value-iteration step must be below 1 / mu");
    double upper = opt.upper > 0 ? opt.upper : 20.0 / (mu - l);
    const auto n = static_cast<std::size_t>(std::ceil(upper / h)) + 1;
    if (n < 3) throw DomainError("value-iteration grid needs at least three states");
    ValueIterationResult out;
    out.step = h;
    out.ell = ell;
    out.states.resize(n);
    std::vector<double> cost(n);
    for (std::size_t k = 0; k < n; ++k) out.states[k] = static_cast<double>(k) * h;
    std::vector<double> rr(n + 1);
    for (std::size_t k = 0; k <= n; ++k) rr[k] = env.r(static_cast<double>(k) * h);
    const double disc = std::exp(-a * h);
    const double keep = std::exp(-l * h);
    const double g0 = -ell * (1.0 - g2) / a;  // G(0) = g2 V(0) + g0
    // one-step running cost alpha \int_0^h r(s + u) e^{-alpha u} du by the trapezoid rule
    for (std::size_t k = 0; k < n; ++k) cost[k] = 0.5 * a * h * (rr[k] + disc * rr[k + 1]);

    // Policy iteration on the discretised Bellman equation. Unknowns interleave
    // V_k (row 2k) and G_k = E V(kh - Y), Y ~ Exp(lambda) (row 2k - 1), which
    // makes each policy evaluation a banded solve. V above the grid is
    // extrapolated linearly.
    const lapack_int N = static_cast<lapack_int>(2 * n), kl = 3, ku = 2, ldab = 2 * kl + ku + 1;
    std::vector<double> ab(static_cast<std::size_t>(ldab) * static_cast<std::size_t>(N)), x(2 * n);
    std::vector<lapack_int> ipiv(static_cast<std::size_t>(N));
    auto vcol = [](std::size_t k) { return 2 * k; };
    auto gcol = [](std::size_t k) { return 2 * k - 1; };
    auto put = [&](std::size_t i, std::size_t j, double v) {
        ab[static_cast<std::size_t>(kl + ku) + i - j + j * static_cast<std::size_t>(ldab)] += v;
    };
    // adds coef * V_{k} with V_n = 2 V_{n-1} - V_{n-2}
    auto put_v = [&](std::size_t row, std::size_t k, double coef) {
        if (k < n) {
            put(row, vcol(k), coef);
        } else {
            put(row, vcol(n - 1), 2.0 * coef);
            put(row, vcol(n - 2), -coef);
        }
    };
    std::vector<char> active(n, 0);
    std::vector<double>& V = out.value;
    V.assign(n, 0.0);
    std::vector<double> G(n + 1);
    for (out.iterations = 1;; ++out.iterations) {
        std::fill(ab.begin(), ab.end(), 0.0);
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t rv = vcol(k), rg = 2 * k + 1;
            put(rv, rv, 1.0);
            if (active[k]) {
                put_v(rv, k + 1, -disc * (1.0 - mu * h));
                put(rv, gcol(k + 1), -disc * mu * h);
                x[rv] = cost[k];
            } else {
                put_v(rv, k + 1, -disc);
                x[rv] = cost[k] - ell * h;
            }
            put(rg, gcol(k + 1), 1.0);
            if (k == 0) {
                put(rg, vcol(0), -keep * g2);
                x[rg] = keep * g0;
            } else {
                put(rg, gcol(k), -keep);
                x[rg] = 0.0;
            }
            put_v(rg, k, -0.5 * (1.0 - keep));
            put_v(rg, k + 1, -0.5 * (1.0 - keep));
        }
        lapack_int info = LAPACKE_dgbsv(LAPACK_COL_MAJOR, N, kl, ku, 1, ab.data(), ldab, ipiv.data(), x.data(), N);
        if (info != 0) throw NumericError("policy evaluation solve failed", static_cast<double>(info));
        double scale = 1.0;
        for (std::size_t k = 0; k < n; ++k) {
            V[k] = x[vcol(k)];
            G[k + 1] = x[gcol(k + 1)];
            scale = std::max(scale, std::fabs(V[k]));
        }
        bool changed = false;
        for (std::size_t k = 0; k < n; ++k) {
            double up = k + 1 < n ? V[k + 1] : 2.0 * V[n - 1] - V[n - 2];
            double qp = cost[k] - ell * h + disc * up;
            double qa = cost[k] + disc * ((1.0 - mu * h) * up + mu * h * G[k + 1]);
            // switch only on a clear improvement so ties cannot cycle
            const double eps = opt.tol * scale;
            if (active[k] && qp < qa - eps) active[k] = 0, changed = true;
            else if (!active[k] && qa < qp - eps) active[k] = 1, changed = true;
        }
        if (!changed) break;
        if (out.iterations >= opt.max_iter) throw NumericError("policy iteration did not settle", 0.0);
    }
    out.margin.resize(n);
    auto extend = [&](std::size_t i) { return i < n ? V[i] : 2.0 * V[n - 1] - V[n - 2]; };
    G[0] = g2 * V[0] + g0;
    for (std::size_t k = 0; k < n; ++k) G[k + 1] = keep * G[k] + (1.0 - keep) * 0.5 * (V[k] + extend(k + 1));
    for (std::size_t k = 0; k < n; ++k) out.margin[k] = -ell + disc * mu * (extend(k + 1) - G[k + 1]);
    return out;
}

ActionAgreement compare_actions(const ValueIterationResult& vi, double t0, std::span<const double> grid, double band) {
    ActionAgreement out;
    for (double t : grid) {
        double m = vi.margin_at(t);
        bool ok = t < t0 ? m <= band : t > t0 ? m >= -band : true;
        ++out.points;
        if (ok) ++out.agree;
    }
    out.fraction = out.points ? static_cast<double>(out.agree) / static_cast<double>(out.points) : 1.0;
    return out;
}

IndexabilityReport indexability_scan(const BanditEnv& env, std::span<const double> grid) {
    if (grid.size() < 2) throw DomainError("grid needs at least two points");
    double prev = whittle_discounted(env, grid[0]);
    for (std::size_t i = 1; i < grid.size(); ++i) {
        if (!(grid[i] > grid[i - 1])) throw DomainError("grid must be increasing");
        double v = whittle_discounted(env, grid[i]);
        if (v < prev - 1e-9 * std::max(1.0, std::fabs(prev))) {
            std::ostringstream os;
            os << "index decreases from " << prev << " at " << grid[i - 1] << " to " << v << " at " << grid[i];
            return {false, os.str()};
        }
        prev = std::max(prev, v);
    }
    return {true, "nondecreasing on " + std::to_string(grid.size()) + " states"};
}

double always_active_cost(const BanditEnv& env) {
    return cost_bar(env, 0.0) / (1.0 - env.gamma1() * env.gamma2());
}

DiscountTrend discount_limit_check(double lambda, double mu, const CostFunction& cost, std::span<const double> alphas,
                                   double queue_mean) {
    if (alphas.size() < 2) throw DomainError("need at least two discount rates");
    DiscountTrend out;
    out.queue_mean = queue_mean;
    const double scale = std::fabs(queue_mean) > 0 ? std::fabs(queue_mean) : 1.0;
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        if (i > 0 && !(alphas[i] < alphas[i - 1])) throw DomainError("discount rates must decrease");
        BanditEnv env(lambda, mu, alphas[i], cost);
        double v = always_active_cost(env);
        out.alphas.push_back(alphas[i]);
        out.discounted.push_back(v);
        out.gaps.push_back(std::fabs(v - queue_mean) / scale);
    }
    out.pass = out.gaps.back() < out.gaps.front() || (out.gaps.back() == 0.0 && out.gaps.front() == 0.0);
    return out;
}

Estimate busy_period_lst_mc(double lambda, double mu, double alpha, std::size_t n_reps, std::uint64_t seed) {
    if (!(lambda < mu)) throw InstabilityError("busy period needs lambda < mu");
    if (n_reps < 2) throw DomainError("need at least two replications");
    ExpStream service(mu, substream_seed(seed, 0, 0, StreamKind::service));
    ExpStream drop(lambda, substream_seed(seed, 0, 0, StreamKind::interarrival));
    RunningStats st;
    for (std::size_t rep = 0; rep < n_reps; ++rep) {
        // oldest-age process of a busy period: unit drift, Exp(lambda) drops at completions
        double age = 0.0, length = 0.0;
        for (;;) {
            double S = service.next();
            age += S;
            length += S;
            age -= drop.next();
            if (age < 0) break;
        }
        st.add(std::exp(-alpha * length));
    }
    return to_estimate(st);
}

} // namespace tvhc
