#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "tvhc/cost_model.hpp"
#include "tvhc/errors.hpp"

using namespace tvhc;

TEST_CASE("eval on the basic families") {
    CHECK(eval(CostFunction::constant(5), 3) == 5);
    CHECK(eval(CostFunction::polynomial({0, 1}), 2.5) == doctest::Approx(2.5));
    // a narrow logistic is close to the indicator of t > d
    auto s = CostFunction::smoothed_step(1, 2, 1e-3);
    CHECK(eval(s, 3) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(eval(s, 1) < 1e-12);
    CHECK(eval(s, 2) == doctest::Approx(0.5));
    auto pl = CostFunction::piecewise_linear({{0, 1}, {1, 3}, {2, 3.5}});
    CHECK(eval(pl, 0.5) == doctest::Approx(2));
    CHECK(eval(pl, 4) == doctest::Approx(4.5));  // last slope continues
    CHECK(eval(CostFunction::exponential(2, 0.5), 2) == doctest::Approx(2 * std::exp(1.0)));
    CHECK(eval(CostFunction::sum({CostFunction::constant(1), CostFunction::polynomial({0, 1})}), 2) ==
          doctest::Approx(3));
}

TEST_CASE("negative ages are rejected") {
    CHECK_THROWS_AS(eval(CostFunction::constant(1), -1), DomainError);
    CHECK_THROWS_AS(deriv(CostFunction::constant(1), -0.1), DomainError);
    CHECK_THROWS_AS(antideriv(CostFunction::constant(1), -1), DomainError);
}

TEST_CASE("constructors reject decreasing or negative costs") {
    CHECK_THROWS_AS(CostFunction::constant(-1), ConfigError);
    CHECK_THROWS_AS(CostFunction::polynomial({0, -1}), ConfigError);
    CHECK_THROWS_AS(CostFunction::polynomial({}), ConfigError);
    CHECK_THROWS_AS(CostFunction::smoothed_step(-1, 1, 0.1), ConfigError);
    CHECK_THROWS_AS(CostFunction::piecewise_linear({{0, 2}, {1, 1}}), ConfigError);
    CHECK_THROWS_AS(CostFunction::piecewise_linear({{1, 0}, {2, 1}}), ConfigError);
    CHECK_THROWS_AS(CostFunction::exponential(1, -0.1), ConfigError);
    CHECK_THROWS_AS(CostFunction::sum({}), ConfigError);
}

TEST_CASE("smoothed step default width is 1% of the deadline") {
    auto s = CostFunction::smoothed_step(2, 5);
    const auto& f = std::get<family::SmoothedStep>(s.repr());
    CHECK(f.w == doctest::Approx(0.05));
}

TEST_CASE("deriv examples and finite differences") {
    CHECK(deriv(CostFunction::constant(5), 1) == 0);
    CHECK(deriv(CostFunction::polynomial({0, 0, 1}), 3) == doctest::Approx(6));
    CHECK(deriv(CostFunction::smoothed_step(1, 2, 0.5), 2) == doctest::Approx(0.5));
    CHECK(deriv(CostFunction::piecewise_linear({{0, 0}, {1, 2}, {3, 3}}), 1) == doctest::Approx(0.5));

    std::mt19937_64 g(11);
    for (int fam = 0; fam <= 5; ++fam) {
        if (fam == 3) continue;  // kinks; right derivative checked above
        for (int k = 0; k < 100; ++k) {
            auto c = oracle::random_cost(g, fam);
            double t = oracle::uniform(g, 0.01, 8.0);
            double h = 1e-5 * std::max(1.0, t);
            double fd = (eval(c, t + h) - eval(c, t - h)) / (2 * h);
            double d = deriv(c, t);
            CHECK(std::fabs(fd - d) <= 1e-6 * std::max(1.0, std::fabs(d)));
        }
    }
}

TEST_CASE("antideriv examples and quadrature oracle") {
    CHECK(antideriv(CostFunction::constant(1), 4) == doctest::Approx(4));
    CHECK(antideriv(CostFunction::polynomial({0, 1}), 2) == doctest::Approx(2));
    CHECK(antideriv(CostFunction::sum({CostFunction::constant(1), CostFunction::polynomial({0, 1})}), 2) ==
          doctest::Approx(4));

    std::mt19937_64 g(12);
    for (int fam = 0; fam <= 5; ++fam) {
        for (int k = 0; k < 20; ++k) {
            auto c = oracle::random_cost(g, fam);
            double t = oracle::uniform(g, 0.0, 12.0);
            double num = oracle::integrate([&](double x) { return eval(c, x); }, 0, t, c.breakpoints(), 1e-13);
            CHECK(oracle::close_rel(antideriv(c, t), num, 1e-8, 1e-12));
            double num2 = oracle::integrate([&](double x) { return antideriv(c, x); }, 0, t, c.breakpoints(), 1e-13);
            CHECK(oracle::close_rel(antideriv2(c, t), num2, 1e-8, 1e-12));
        }
    }
}

TEST_CASE("double antiderivative of a sharp step far beyond the deadline") {
    auto s = CostFunction::smoothed_step(10, 2, 0.02);
    for (double t : {1.99, 2.0, 2.01, 5.0, 50.0, 400.0}) {
        double num = oracle::integrate([&](double x) { return antideriv(s, x); }, 0, t, {2.0}, 1e-12, 0.05);
        CHECK(oracle::close_rel(antideriv2(s, t), num, 1e-9, 1e-12));
    }
}

TEST_CASE("exp_shift examples") {
    CHECK(exp_shift(CostFunction::constant(5), 7, 1.0) == 5);
    CHECK(exp_shift(CostFunction::polynomial({0, 1}), 2, 1.0) == doctest::Approx(3));
    CHECK(exp_shift(CostFunction::polynomial({0, 0, 1}), 1, 2.0) == doctest::Approx(2.5));
    CHECK_THROWS_AS(exp_shift(CostFunction::constant(1), 0, 0.0), DomainError);
    CHECK_THROWS_AS(exp_shift(CostFunction::exponential(1, 2), 0, 1.0), DomainError);
}

TEST_CASE("exp_shift matches an independent quadrature on every family") {
    std::mt19937_64 g(13);
    for (int fam = 0; fam <= 5; ++fam) {
        for (int k = 0; k < 15; ++k) {
            auto c = oracle::random_cost(g, fam, 0.4);
            double t = oracle::uniform(g, 0.0, 6.0);
            double rate = oracle::uniform(g, 0.5, 5.0);
            double ref = oracle::shifted_mean([&](double x) { return eval(c, x); }, t, rate, c.breakpoints(),
                                              oracle::cost_growth(c));
            CHECK(oracle::close_rel(exp_shift(c, t, rate), ref, 1e-9, 1e-12));
        }
    }
}

TEST_CASE("closed-form and quadrature shift methods agree") {
    std::mt19937_64 g(14);
    for (int fam : {0, 1, 3, 4}) {
        for (int k = 0; k < 10; ++k) {
            auto c = oracle::random_cost(g, fam, 0.4);
            double t = oracle::uniform(g, 0.0, 5.0), rate = oracle::uniform(g, 0.5, 4.0);
            double a = exp_shift(c, t, {ShiftMethod::closed_form, rate, 1e-12});
            double b = exp_shift(c, t, {ShiftMethod::quadrature, rate, 1e-12});
            CHECK(oracle::close_rel(a, b, 1e-8, 1e-12));
        }
    }
}

TEST_CASE("exp_shift Monte Carlo oracle for c = t and c = t^2") {
    std::mt19937_64 g(15);
    std::exponential_distribution<double> x1(1.0), x2(2.0);
    RunningStats s1, s2;
    for (int i = 0; i < 1000000; ++i) {
        s1.add(2 + x1(g));
        double y = 1 + x2(g);
        s2.add(y * y);
    }
    CHECK(std::fabs(s1.mean() - exp_shift(CostFunction::polynomial({0, 1}), 2, 1.0)) <= 3 * s1.std_error());
    CHECK(std::fabs(s2.mean() - exp_shift(CostFunction::polynomial({0, 0, 1}), 1, 2.0)) <= 3 * s2.std_error());
}

TEST_CASE("property: monotone costs, shift dominance, and convergence as the rate grows") {
    std::mt19937_64 g(16);
    for (int k = 0; k < 300; ++k) {
        auto c = oracle::random_cost(g, k % 6);
        double t1 = oracle::uniform(g, 0, 10), t2 = oracle::uniform(g, 0, 10);
        if (t1 > t2) std::swap(t1, t2);
        CHECK(eval(c, t1) <= eval(c, t2) + 1e-12);
        double rate = oracle::uniform(g, 0.5, 10);
        CHECK(exp_shift(c, t1, rate) >= eval(c, t1) - 1e-12 * std::max(1.0, eval(c, t1)));
    }
    // polynomial: E[c(t+X)] - c(t) = sum_j a_j sum_{m>=1} C(j,m) t^{j-m} m!/theta^m <= bound/theta for theta >= 1
    auto p = CostFunction::polynomial({1, 2, 0.5, 0.25});
    for (double t : {0.0, 1.0, 3.0}) {
        double prev = INFINITY;
        for (double theta : {1e1, 1e2, 1e3, 1e4}) {
            double gap = exp_shift(p, t, theta) - eval(p, t);
            double bound = 0.0;
            const double a[] = {1, 2, 0.5, 0.25};
            for (int j = 1; j <= 3; ++j) {
                double fact = 1, binom = 1;
                for (int m = 1; m <= j; ++m) {
                    binom = binom * (j - m + 1) / m;
                    fact *= m;
                    bound += a[j] * binom * std::pow(t, j - m) * fact;
                }
            }
            CHECK(gap >= 0);
            CHECK(gap <= bound / theta + 1e-12);
            CHECK(gap < prev);
            prev = gap;
        }
    }
}

TEST_CASE("reward_r examples") {
    CHECK(reward_r(CostFunction::constant(1), 2, 3) == doctest::Approx(7));
    auto c = CostFunction::smoothed_step(3, 1, 0.2);
    CHECK(reward_r(c, 0, 2.5) == eval(c, 2.5));
    CHECK(reward_r(c, 1.3, -1) == 0);
    CHECK(reward_r(CostFunction::polynomial({0, 1}), 1, 2) == doctest::Approx(4));
}

TEST_CASE("r_mc_oracle examples") {
    auto e0 = r_mc_oracle(CostFunction::polynomial({0, 1}), 0, 2, 10, 1);
    CHECK(e0.mean == 2);
    CHECK(e0.std_error == 0);
    auto e1 = r_mc_oracle(CostFunction::constant(1), 2, 3, 1000000, 2);
    CHECK(std::fabs(e1.mean - 7) <= 3 * e1.std_error);
    auto e2 = r_mc_oracle(CostFunction::polynomial({0, 1}), 1, 2, 1000000, 3);
    CHECK(std::fabs(e2.mean - 4) <= 3 * e2.std_error);
}

TEST_CASE("property: reward_r agrees with its Monte Carlo oracle") {
    std::mt19937_64 g(17);
    int fails = 0;
    for (int k = 0; k < 30; ++k) {
        auto c = oracle::random_cost(g, k % 6);
        double lambda = oracle::uniform(g, 0.1, 3), t = oracle::uniform(g, 0, 5);
        auto e = r_mc_oracle(c, lambda, t, 40000, 100 + k);
        if (std::fabs(e.mean - reward_r(c, lambda, t)) > 3 * e.std_error) ++fails;
    }
    // 30 tests at the 3-SE level: expect ~0.1 false alarms
    CHECK(fails <= 1);
}

TEST_CASE("reward_r_integral honours r = 0 below zero") {
    auto c = CostFunction::piecewise_linear({{0, 1}, {2, 3}});
    double lambda = 0.7;
    CHECK(reward_r_integral(c, lambda, -3, -1) == 0);
    double num = oracle::integrate([&](double s) { return reward_r(c, lambda, s); }, 0, 4.5, {2.0}, 1e-13);
    CHECK(reward_r_integral(c, lambda, -2, 4.5) == doctest::Approx(num).epsilon(1e-10));
    CHECK(reward_r_integral(c, lambda, 1, 4.5) ==
          doctest::Approx(num - oracle::integrate([&](double s) { return reward_r(c, lambda, s); }, 0, 1))
              .epsilon(1e-10));
}

TEST_CASE("growth_check") {
    CHECK(growth_check(CostFunction::polynomial({0, 0, 1}), 1, 2).pass);
    CHECK(growth_check(CostFunction::constant(1e6), 0.3, 0.5).pass);
    CHECK_THROWS_AS(growth_check(CostFunction::constant(1), 1, 1), InstabilityError);
    auto bad = growth_check(CostFunction::exponential(1, 1.5), 1, 2);
    CHECK_FALSE(bad.pass);
    CHECK(bad.note.find("exponential") != std::string::npos);
    CHECK(growth_check(CostFunction::exponential(1, 0.5), 1, 2).pass);
    CHECK_FALSE(
        growth_check(CostFunction::sum({CostFunction::constant(1), CostFunction::exponential(1, 3)}), 1, 2).pass);
}

TEST_CASE("scaled multiplies every level") {
    std::mt19937_64 g(18);
    for (int fam = 0; fam <= 5; ++fam) {
        auto c = oracle::random_cost(g, fam);
        auto s = c.scaled(3.5);
        for (double t : {0.0, 0.7, 2.0, 6.0}) CHECK(eval(s, t) == doctest::Approx(3.5 * eval(c, t)));
    }
}
