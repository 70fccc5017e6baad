#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "tvhc/errors.hpp"
#include "tvhc/rmab_bridge.hpp"

using namespace tvhc;

namespace {

SystemConfig two_class() {
    SystemConfig cfg;
    cfg.classes = {{1, 0.6, 2.0, CostFunction::polynomial({0, 1})}, {2, 0.3, 1.0, CostFunction::smoothed_step(3, 1, 0.2)}};
    cfg.horizon = 2e4;
    cfg.replications = 6;
    return cfg;
}

bool overlap(const SimResult& a, const SimResult& b) {
    return std::fabs(a.mean_cost - b.mean_cost) <= a.ci_half_width + b.ci_half_width;
}

} // namespace

TEST_CASE("queue ages and arm states coincide along a coupled path") {
    auto cfg = two_class();
    for (auto p : {IndexPolicy::whittle(), IndexPolicy::fcfs(), IndexPolicy::gen_cmu()}) {
        CoupledOptions opt;
        opt.max_events = 20000;
        auto tr = coupled_equivalence(cfg, p, opt);
        CHECK(tr.pass);
        CHECK(tr.events >= 20000);
        CHECK(tr.max_state_gap <= 1e-9);
        CHECK(tr.max_progress_gap <= 1e-9);
        CHECK(tr.count_mismatches == 0);
        CHECK(tr.choice_mismatches == 0);
        CHECK(tr.first_divergence.empty());
    }
}

TEST_CASE("recorded trace has arm states for every event") {
    auto cfg = two_class();
    CoupledOptions opt;
    opt.max_events = 500;
    opt.record = true;
    auto tr = coupled_equivalence(cfg, IndexPolicy::whittle(), opt);
    REQUIRE_FALSE(tr.points.empty());
    double last = 0;
    for (const auto& pt : tr.points) {
        CHECK(pt.t >= last);
        last = pt.t;
        CHECK(std::fabs(pt.A - pt.T) <= 1e-9);
    }
}

TEST_CASE("property: coupling holds on random configurations") {
    std::mt19937_64 g(41);
    for (int k = 0; k < 8; ++k) {
        SystemConfig cfg;
        int n = 1 + k % 3;
        for (int i = 0; i < n; ++i) {
            double mu = oracle::uniform(g, 0.5, 4);
            cfg.classes.push_back({i + 1, mu, mu, oracle::random_cost(g, (k + i) % 6, 0.05)});
        }
        cfg = cfg.at_load(oracle::uniform(g, 0.3, 0.9));
        cfg.seed = 100 + k;
        CoupledOptions opt;
        opt.max_events = 5000;
        CHECK(coupled_equivalence(cfg, IndexPolicy::whittle(), opt).pass);
    }
}

TEST_CASE("arm reward average agrees with the queue cost") {
    auto cfg = two_class();
    auto q = simulate(cfg, IndexPolicy::whittle());
    auto r = simulate_rmab(cfg, IndexPolicy::whittle());
    CHECK(overlap(q, r));
    CHECK(r.mean_cost > 0);
}

TEST_CASE("decreasing index functions are refused") {
    auto cfg = two_class();
    auto down = IndexPolicy::custom("down", [](const ClassConfig&, double t) { return -t; });
    CHECK_THROWS_AS(coupled_equivalence(cfg, down), ConfigError);
}
