#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "tvhc/errors.hpp"
#include "tvhc/policy_index.hpp"

using namespace tvhc;

namespace {
ClassConfig cls(int id, double lambda, double mu, CostFunction c) { return {id, lambda, mu, std::move(c)}; }
} // namespace

TEST_CASE("whittle reduces to c mu for constant costs, exactly") {
    std::mt19937_64 g(21);
    for (int k = 0; k < 200; ++k) {
        double h = oracle::uniform(g, 0.01, 100), mu = oracle::uniform(g, 0.1, 10);
        double lambda = oracle::uniform(g, 0, 0.99) * mu;
        auto c = cls(1, lambda, mu, CostFunction::constant(h));
        double age = oracle::uniform(g, 0, 50);
        CHECK(index_value(IndexPolicy::whittle(), c, age) == h * mu);
    }
}

TEST_CASE("index examples for c(t) = t") {
    auto c = cls(1, 1, 2, CostFunction::polynomial({0, 1}));
    CHECK(index_value(IndexPolicy::whittle(), c, 3) == doctest::Approx(8));
    CHECK(index_value(IndexPolicy::aalto(), c, 3) == doctest::Approx(7));
    CHECK(index_value(IndexPolicy::gen_cmu(), c, 3) == doctest::Approx(6));
    CHECK(index_value(IndexPolicy::fcfs(), c, 3) == 3);
    CHECK(index_value(IndexPolicy::accumulated_priority(), c, 3) == doctest::Approx(3 * (2 * 0 + 1)));
    CHECK(IndexPolicy::accumulated_priority({4.0}).index_value(c, 3, 0) == doctest::Approx(12));
}

TEST_CASE("whittle index against an independent shifted-mean quadrature") {
    std::mt19937_64 g(22);
    for (int k = 0; k < 40; ++k) {
        double mu = oracle::uniform(g, 1, 4), lambda = oracle::uniform(g, 0, 0.8) * mu;
        auto c = cls(1, lambda, mu, oracle::random_cost(g, k % 6, 0.2));
        double age = oracle::uniform(g, 0, 6);
        double ref = mu * oracle::shifted_mean([&](double x) { return eval(c.cost, x); }, age, mu - lambda,
                                               c.cost.breakpoints(), oracle::cost_growth(c.cost));
        CHECK(oracle::close_rel(index_value(IndexPolicy::whittle(), c, age), ref, 1e-8, 1e-12));
    }
}

TEST_CASE("whittle needs lambda < mu") {
    auto c = cls(3, 2, 2, CostFunction::constant(1));
    CHECK_THROWS_AS(index_value(IndexPolicy::whittle(), c, 1), ConfigError);
    CHECK_THROWS_AS(BoundPolicy(IndexPolicy::whittle(), {c}), ConfigError);
    CHECK_THROWS_AS(index_value(IndexPolicy::gen_cmu(), c, -1), DomainError);
}

TEST_CASE("property: whittle equals aalto when lambda = 0") {
    std::mt19937_64 g(23);
    for (int k = 0; k < 60; ++k) {
        double mu = oracle::uniform(g, 0.5, 5);
        auto c = cls(1, 0, mu, oracle::random_cost(g, k % 6, 0.3));
        double age = oracle::uniform(g, 0, 8);
        double w = index_value(IndexPolicy::whittle(), c, age), a = index_value(IndexPolicy::aalto(), c, age);
        CHECK(oracle::close_rel(w, a, 1e-10, 1e-300));
    }
}

TEST_CASE("property: whittle dominates generalized c mu pointwise") {
    std::mt19937_64 g(24);
    for (int k = 0; k < 200; ++k) {
        double mu = oracle::uniform(g, 0.5, 5), lambda = oracle::uniform(g, 0, 0.9) * mu;
        auto c = cls(1, lambda, mu, oracle::random_cost(g, k % 6, 0.05));
        double age = oracle::uniform(g, 0, 8);
        double w = index_value(IndexPolicy::whittle(), c, age), gc = index_value(IndexPolicy::gen_cmu(), c, age);
        CHECK(w >= gc * (1 - 1e-12));
    }
}

TEST_CASE("property: diffusion degeneracy with an explicit O(1/theta) bound") {
    // c(t) = 1 + t + t^2: W/mu - c = 1/theta + 2t/theta + 2/theta^2
    auto cost = CostFunction::polynomial({1, 1, 1});
    for (double theta : {1e2, 1e3, 1e4}) {
        double mu = 2 * theta, lambda = theta;
        auto c = cls(1, lambda, mu, cost);
        for (double t : {1.0, 2.5, 5.0, 10.0}) {
            double gap = index_value(IndexPolicy::whittle(), c, t) / mu - eval(cost, t);
            double exact = (1 + 2 * t) / theta + 2 / (theta * theta);
            CHECK(gap == doctest::Approx(exact).epsilon(1e-6));
            CHECK(gap <= (3 + 2 * t) / theta);
        }
    }
}

TEST_CASE("property: a common cost scale leaves the served class unchanged") {
    std::mt19937_64 g(25);
    for (auto policy : {IndexPolicy::whittle(), IndexPolicy::aalto(), IndexPolicy::gen_cmu()}) {
        for (int k = 0; k < 30; ++k) {
            std::vector<ClassConfig> cs, scaled;
            double kappa = oracle::uniform(g, 0.1, 10);
            for (int i = 0; i < 3; ++i) {
                double mu = oracle::uniform(g, 1, 4);
                auto c = oracle::random_cost(g, (k + i) % 6, 0.1);
                cs.push_back(cls(i + 1, 0.2 * mu, mu, c));
                scaled.push_back(cls(i + 1, 0.2 * mu, mu, c.scaled(kappa)));
            }
            BoundPolicy a(policy, cs), b(policy, scaled);
            std::vector<double> ages = {oracle::uniform(g, 0, 5), oracle::uniform(g, 0, 5), oracle::uniform(g, 0, 5)};
            std::vector<char> elig = {1, 1, 1};
            // skip near-ties where rounding could flip the argmax
            double i0 = a.index(0, ages[0]), i1 = a.index(1, ages[1]), i2 = a.index(2, ages[2]);
            double top = std::max({i0, i1, i2});
            int near = (std::fabs(i0 - top) < 1e-9 * top) + (std::fabs(i1 - top) < 1e-9 * top) +
                       (std::fabs(i2 - top) < 1e-9 * top);
            if (near > 1) continue;
            CHECK(a.select(ages, elig) == b.select(ages, elig));
        }
    }
}

TEST_CASE("verify_monotone") {
    std::vector<ClassConfig> cs = {cls(1, 0.5, 2, CostFunction::smoothed_step(5, 2, 0.05)),
                                   cls(2, 0.3, 1, CostFunction::polynomial({0, 1, 1}))};
    auto grid = age_grid(20);
    CHECK(verify_monotone(IndexPolicy::whittle(), cs, grid).pass);
    CHECK(verify_monotone(IndexPolicy::gen_cmu(), cs, grid).pass);
    CHECK(verify_monotone(IndexPolicy::aalto(), cs, grid).pass);
    auto decreasing = IndexPolicy::custom("decreasing", [](const ClassConfig& c, double t) {
        return c.id == 2 ? 10.0 - t : t;
    });
    auto rep = verify_monotone(decreasing, cs, grid);
    CHECK_FALSE(rep.pass);
    CHECK(rep.detail.find("class 2") != std::string::npos);
    CHECK_THROWS_AS(verify_monotone(IndexPolicy::fcfs(), cs, age_grid(20, 50)), DomainError);
}

TEST_CASE("static priority encoding and selection") {
    std::vector<ClassConfig> cs = {cls(1, 0.2, 1, CostFunction::constant(1)), cls(2, 0.2, 1, CostFunction::constant(5))};
    BoundPolicy p(IndexPolicy::static_priority({2, 1}), cs);
    std::vector<double> ages = {100.0, 0.001};
    CHECK(p.select(ages, std::vector<char>{1, 1}) == 1);
    CHECK(p.select(ages, std::vector<char>{1, 0}) == 0);
    CHECK(p.select(ages, std::vector<char>{0, 0}) == -1);
    CHECK_THROWS_AS(BoundPolicy(IndexPolicy::static_priority({1}), cs), ConfigError);
    CHECK(IndexPolicy::static_priority({2, 1}).name() == "static_priority(2>1)");
}

TEST_CASE("ties go to the older job, then to the lower position") {
    std::vector<ClassConfig> cs = {cls(1, 0.2, 1, CostFunction::constant(2)), cls(2, 0.2, 2, CostFunction::constant(1))};
    BoundPolicy p(IndexPolicy::gen_cmu(), cs);  // both indices equal 2
    CHECK(p.select(std::vector<double>{1.0, 3.0}, std::vector<char>{1, 1}) == 1);
    CHECK(p.select(std::vector<double>{3.0, 1.0}, std::vector<char>{1, 1}) == 0);
    CHECK(p.select(std::vector<double>{2.0, 2.0}, std::vector<char>{1, 1}) == 0);
    BoundPolicy f(IndexPolicy::fcfs(), cs);
    CHECK(f.select(std::vector<double>{0.5, 0.7}, std::vector<char>{1, 1}) == 1);
}

TEST_CASE("tabulated indices match direct evaluation") {
    std::vector<ClassConfig> cs = {cls(1, 0.9, 3, CostFunction::smoothed_step(10, 2, 0.02)),
                                   cls(2, 0.3, 1, CostFunction::constant(1))};
    BoundPolicy p(IndexPolicy::whittle(), cs);
    std::mt19937_64 g(26);
    double worst = 0.0;
    for (int k = 0; k < 2000; ++k) {
        double age = oracle::uniform(g, 0, 6);
        double direct = IndexPolicy::whittle().index_value(cs[0], age, 0);
        worst = std::max(worst, std::fabs(p.index(0, age) - direct) / std::max(1.0, direct));
    }
    CHECK(worst < 1e-5);
    CHECK(p.index(1, 3.7) == 1.0);
}
