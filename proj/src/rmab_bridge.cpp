#include "tvhc/rmab_bridge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "tvhc/errors.hpp"

namespace tvhc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_monotone(const SystemConfig& cfg, const IndexPolicy& policy) {
    double span = 10.0;
    for (const auto& c : cfg.classes) {
        for (double b : c.cost.breakpoints()) span = std::max(span, 2.0 * b);
        span = std::max(span, 20.0 / (c.mu > c.lambda ? c.mu - c.lambda : c.mu));
    }
    auto report = verify_monotone(policy, cfg.classes, age_grid(span));
    if (!report.pass) throw ConfigError("index functions must be nondecreasing: " + report.detail);
}

} // namespace

ArmEngine::ArmEngine(const SystemConfig& cfg, const BoundPolicy& policy, std::size_t replication)
    : cfg_(cfg),
      policy_(policy),
      path_(SamplePath::make(cfg, replication)),
      warmup_(cfg.effective_warmup()),
      horizon_(cfg.horizon),
      quantum_(cfg.effective_quantum()) {
    const std::size_t k = cfg.classes.size();
    arms_.resize(k);
    timer_.resize(k);
    origin_.resize(k);
    anchor_.resize(k);
    class_cost_.assign(k, 0.0);
    age_buf_.resize(k);
    elig_buf_.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        origin_[i] = anchor_[i] = path_.interarrival[i].next();
        arms_[i].T = -origin_[i];
        timer_[i] = path_.service[i].next();
    }
}

void ArmEngine::decide() {
    for (std::size_t i = 0; i < arms_.size(); ++i) {
        elig_buf_[i] = arms_[i].T >= 0 ? 1 : 0;
        age_buf_[i] = elig_buf_[i] ? arms_[i].T : 0.0;
    }
    active_ = policy_.select(age_buf_, elig_buf_);
}

double ArmEngine::next_event_time() const {
    double t = kInf;
    std::size_t eligible = 0;
    for (const auto& a : arms_) {
        if (a.T < 0) t = std::min(t, now_ - a.T);
        else ++eligible;
    }
    if (active_ >= 0) {
        auto i = static_cast<std::size_t>(active_);
        t = std::min(t, now_ + (timer_[i] - arms_[i].xi));
    }
    if (eligible >= 2 && policy_.needs_decision_grid()) {
        double g = (std::floor(now_ / quantum_ + 1e-6) + 1.0) * quantum_;
        if (g <= now_) g += quantum_;
        t = std::min(t, g);
    }
    return t;
}

void ArmEngine::accrue(double from, double to) {
    double lo = std::max(from, warmup_), hi = std::min(to, horizon_);
    if (!(hi > lo)) return;
    for (std::size_t i = 0; i < arms_.size(); ++i) {
        const double T = arms_[i].T;
        if (!std::isfinite(T)) continue;
        class_cost_[i] +=
            reward_r_integral(cfg_.classes[i].cost, cfg_.classes[i].lambda, T + (lo - from), T + (hi - from));
    }
    if (active_ >= 0) busy_ += hi - lo;
}

// The state is kept as now - anchor rather than accumulated increments, so
// rounding does not build up over long runs. The anchor is the running sum of
// inter-arrival gaps, pulled back to the current time when a snap happens.
void ArmEngine::advance_to(double t, double tol) {
    tol = std::max(tol, 1e-13 * std::max(1.0, t));
    double dt = std::max(0.0, t - now_);
    accrue(now_, now_ + dt);
    if (active_ >= 0) arms_[static_cast<std::size_t>(active_)].xi += dt;
    now_ = std::max(now_, t);
    ++events_;
    if (active_ >= 0) {
        auto i = static_cast<std::size_t>(active_);
        auto& a = arms_[i];
        if (timer_[i] - a.xi <= tol) {
            origin_[i] += path_.interarrival[i].next();
            anchor_[i] = origin_[i];
            a.xi = 0.0;
            timer_[i] = path_.service[i].next();
            ++a.count;
        }
    }
    for (std::size_t i = 0; i < arms_.size(); ++i) {
        if (anchor_[i] > now_ && anchor_[i] <= now_ + tol) anchor_[i] = now_;
        arms_[i].T = now_ - anchor_[i];
    }
}

void ArmEngine::finish() {}

ReplicationResult ArmEngine::result() const {
    ReplicationResult r;
    const double window = horizon_ - warmup_;
    r.class_cost.resize(arms_.size());
    for (std::size_t i = 0; i < arms_.size(); ++i) {
        r.class_cost[i] = class_cost_[i] / window;
        r.total_cost += class_cost_[i];
        r.departures += arms_[i].count;
    }
    r.mean_cost = r.total_cost / window;
    r.events = events_;
    r.busy_fraction = busy_ / window;
    return r;
}

ReplicationResult simulate_rmab_replication(const SystemConfig& cfg, const BoundPolicy& policy,
                                            std::size_t replication) {
    ArmEngine eng(cfg, policy, replication);
    for (;;) {
        eng.decide();
        double t = eng.next_event_time();
        if (t >= cfg.horizon) {
            eng.advance_to(cfg.horizon);
            break;
        }
        eng.advance_to(t);
    }
    eng.finish();
    return eng.result();
}

SimResult simulate_rmab(const SystemConfig& cfg, const IndexPolicy& policy) {
    cfg.validate();
    require_monotone(cfg, policy);
    BoundPolicy bound(policy, cfg.classes);
    std::vector<ReplicationResult> reps(cfg.replications);
    parallel_for(reps.size(), [&](std::size_t r) { reps[r] = simulate_rmab_replication(cfg, bound, r); });
    return aggregate(std::move(reps));
}

CoupledTrace coupled_equivalence(const SystemConfig& cfg, const IndexPolicy& policy, const CoupledOptions& opt) {
    cfg.validate();
    require_monotone(cfg, policy);
    BoundPolicy bound(policy, cfg.classes);
    QueueEngine queue(cfg, bound, opt.replication);
    ArmEngine arms(cfg, bound, opt.replication);
    CoupledTrace out;
    const std::size_t k = cfg.classes.size();

    auto diverge = [&](const std::string& what) {
        if (!out.first_divergence.empty()) return;
        std::ostringstream os;
        os.precision(17);
        os << "event " << out.events << " at t=" << queue.now() << ": " << what;
        out.first_divergence = os.str();
    };

    for (;;) {
        queue.decide();
        arms.decide();
        if (queue.served() != arms.active()) {
            ++out.choice_mismatches;
            diverge("queue serves " + std::to_string(queue.served()) + ", bandit activates " +
                    std::to_string(arms.active()));
        }
        double t = std::min(queue.next_event_time(), arms.next_event_time());
        bool done = t >= cfg.horizon;
        if (done) t = cfg.horizon;
        const double tol = 1e-12 * std::max(1.0, t);
        queue.advance_to(t, tol);
        arms.advance_to(t, tol);
        ++out.events;

        for (std::size_t i = 0; i < k; ++i) {
            const double A = queue.oldest_age(i), T = arms.arm(i).T;
            if (std::isfinite(A) || std::isfinite(T)) {
                double gap = std::fabs(A - T);
                if (!(gap <= out.max_state_gap)) out.max_state_gap = std::isnan(gap) ? kInf : gap;
                if (!(gap <= opt.gap_tol)) diverge("class " + std::to_string(i) + " oldest age differs from arm state");
            }
            double pg = std::fabs(queue.service_progress(i) - arms.arm(i).xi);
            out.max_progress_gap = std::max(out.max_progress_gap, pg);
            if (pg > opt.gap_tol) diverge("class " + std::to_string(i) + " service progress differs");
            if (queue.completions(i) != arms.arm(i).count) {
                ++out.count_mismatches;
                diverge("class " + std::to_string(i) + " completion count differs");
            }
            if (opt.record) out.points.push_back({t, static_cast<int>(i), A, T});
        }
        if (done || (opt.max_events > 0 && out.events >= opt.max_events)) break;
    }
    out.pass = out.first_divergence.empty();
    return out;
}

} // namespace tvhc
