#include "tvhc/queue_sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "tvhc/errors.hpp"

namespace tvhc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double monotone_check_span(const SystemConfig& cfg) {
    double span = 10.0;
    for (const auto& c : cfg.classes) {
        for (double b : c.cost.breakpoints()) span = std::max(span, 2.0 * b);
        double theta = c.mu > c.lambda ? c.mu - c.lambda : c.mu;
        span = std::max(span, 20.0 / theta);
    }
    return span;
}

} // namespace

// ----------------------------------------------------------------- SystemConfig

double SystemConfig::load() const {
    double rho = 0.0;
    for (const auto& c : classes) rho += c.lambda / c.mu;
    return rho;
}

double SystemConfig::effective_warmup() const {
    return warmup < 0 ? 0.1 * horizon : warmup;
}

double SystemConfig::effective_quantum() const {
    if (decision_quantum > 0) return decision_quantum;
    double mu_max = 0.0;
    for (const auto& c : classes) mu_max = std::max(mu_max, c.mu);
    return 0.01 / mu_max;
}

void SystemConfig::validate() const {
    if (classes.empty()) throw ConfigError("system needs at least one class");
    for (const auto& c : classes) c.validate();
    for (std::size_t i = 0; i < classes.size(); ++i)
        for (std::size_t j = i + 1; j < classes.size(); ++j)
            if (classes[i].id == classes[j].id)
                throw ConfigError("duplicate class id " + std::to_string(classes[i].id));
    double rho = load();
    if (!(rho < 1.0))
        throw InstabilityError("total load " + std::to_string(rho) + " is not below 1");
    if (!(horizon > 0)) throw ConfigError("horizon must be positive");
    if (!(effective_warmup() < horizon)) throw ConfigError("warmup must be shorter than the horizon");
    if (replications < 1) throw ConfigError("need at least one replication");
    if (!(effective_quantum() > 0)) throw ConfigError("decision quantum must be positive");
}

SystemConfig SystemConfig::at_load(double rho) const {
    if (!(rho > 0 && rho < 1)) throw ConfigError("target load must lie in (0, 1)");
    double base = load();
    if (!(base > 0)) throw ConfigError("cannot rescale a system with zero arrival rates");
    SystemConfig out = *this;
    for (auto& c : out.classes) c.lambda *= rho / base;
    return out;
}

SamplePath SamplePath::make(const SystemConfig& cfg, std::size_t replication) {
    SamplePath p;
    for (std::size_t i = 0; i < cfg.classes.size(); ++i) {
        p.interarrival.emplace_back(cfg.classes[i].lambda,
                                    substream_seed(cfg.seed, replication, i, StreamKind::interarrival));
        p.service.emplace_back(cfg.classes[i].mu, substream_seed(cfg.seed, replication, i, StreamKind::service));
    }
    return p;
}

// ------------------------------------------------------------------ QueueEngine

QueueEngine::QueueEngine(const SystemConfig& cfg, const BoundPolicy& policy, std::size_t replication,
                         WithinClass order)
    : cfg_(cfg),
      policy_(policy),
      order_(order),
      path_(SamplePath::make(cfg, replication)),
      warmup_(cfg.effective_warmup()),
      horizon_(cfg.horizon),
      quantum_(cfg.effective_quantum()) {
    const std::size_t k = cfg.classes.size();
    queues_.resize(k);
    next_arrival_.resize(k);
    timer_left_.resize(k);
    timer_total_.resize(k);
    class_cost_.assign(k, 0.0);
    class_arrivals_.assign(k, 0);
    class_departures_.assign(k, 0);
    age_buf_.resize(k);
    elig_buf_.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        next_arrival_[i] = path_.interarrival[i].next();
        timer_total_[i] = path_.service[i].next();
        timer_left_[i] = timer_total_[i];
    }
}

double QueueEngine::candidate_age(std::size_t i) const {
    const auto& q = queues_[i];
    return now_ - (order_ == WithinClass::fcfs ? q.front() : q.back());
}

double QueueEngine::oldest_age(std::size_t i) const {
    if (!queues_[i].empty()) return now_ - queues_[i].front();
    return now_ - next_arrival_[i];
}

double QueueEngine::service_progress(std::size_t i) const {
    return timer_total_[i] - timer_left_[i];
}

void QueueEngine::decide() {
    const std::size_t k = queues_.size();
    bool any = false;
    for (std::size_t i = 0; i < k; ++i) {
        elig_buf_[i] = queues_[i].empty() ? 0 : 1;
        age_buf_[i] = elig_buf_[i] ? candidate_age(i) : 0.0;
        any = any || elig_buf_[i];
    }
    int choice;
    if (forced_ >= 0) {
        choice = any ? forced_ : -1;
        if (any && !elig_buf_[static_cast<std::size_t>(forced_)])
            throw std::logic_error("forced class has no job present");
        forced_ = -1;
    } else {
        choice = policy_.select(age_buf_, elig_buf_);
    }
    if (served_ >= 0 && choice != served_ && !queues_[static_cast<std::size_t>(served_)].empty())
        ++preemptions_;
    served_ = choice;
    check_invariants();
}

void QueueEngine::check_invariants() const {
    bool any = false;
    for (std::size_t i = 0; i < queues_.size(); ++i) {
        any = any || !queues_[i].empty();
        if (class_arrivals_[i] != class_departures_[i] + queues_[i].size())
            throw std::logic_error("flow balance violated for class " + std::to_string(i));
    }
    if (any != (served_ >= 0)) throw std::logic_error("work conservation violated");
}

double QueueEngine::next_event_time() const {
    double t = kInf;
    std::size_t nonempty = 0;
    for (std::size_t i = 0; i < queues_.size(); ++i) {
        t = std::min(t, next_arrival_[i]);
        if (!queues_[i].empty()) ++nonempty;
    }
    if (served_ >= 0) t = std::min(t, now_ + timer_left_[static_cast<std::size_t>(served_)]);
    if (nonempty >= 2 && policy_.needs_decision_grid()) {
        double g = (std::floor(now_ / quantum_ + 1e-6) + 1.0) * quantum_;
        if (g <= now_) g += quantum_;
        t = std::min(t, g);
    }
    return t;
}

void QueueEngine::account_job(std::size_t i, double arrival, double until) {
    if (until <= warmup_) return;
    const auto& c = cfg_.classes[i].cost;
    double lo = std::max(0.0, warmup_ - arrival);
    double hi = std::max(0.0, until - arrival);
    class_cost_[i] += antideriv(c, hi) - (lo > 0 ? antideriv(c, lo) : 0.0);
}

void QueueEngine::emit(EventKind kind, int cls) {
    if (!trace_) return;
    TraceEvent ev{now_, kind, cls, served_, {}};
    for (const auto& q : queues_) ev.in_system.push_back(q.size());
    trace_(ev);
}

void QueueEngine::advance_to(double t, double tol) {
    if (finished_) throw std::logic_error("engine already finished");
    // rounding residue in a timer must not leave an event a few ulps ahead
    tol = std::max(tol, 1e-13 * std::max(1.0, t));
    double dt = std::max(0.0, t - now_);
    if (served_ >= 0) {
        timer_left_[static_cast<std::size_t>(served_)] -= dt;
        double lo = std::max(now_, warmup_), hi = std::min(t, horizon_);
        if (hi > lo) busy_ += hi - lo;
    }
    now_ = std::max(now_, t);
    ++events_;
    bool any_event = false;
    if (served_ >= 0) {
        auto i = static_cast<std::size_t>(served_);
        if (timer_left_[i] <= tol) {
            auto& q = queues_[i];
            double a;
            if (order_ == WithinClass::fcfs) {
                a = q.front();
                q.pop_front();
            } else {
                a = q.back();
                q.pop_back();
            }
            account_job(i, a, now_);
            ++class_departures_[i];
            timer_total_[i] = path_.service[i].next();
            timer_left_[i] = timer_total_[i];
            any_event = true;
            emit(EventKind::departure, static_cast<int>(i));
        }
    }
    for (std::size_t i = 0; i < queues_.size(); ++i) {
        while (next_arrival_[i] <= now_ + tol) {
            queues_[i].push_back(std::min(next_arrival_[i], now_));
            ++class_arrivals_[i];
            max_class_jobs_ = std::max(max_class_jobs_, queues_[i].size());
            next_arrival_[i] += path_.interarrival[i].next();
            any_event = true;
            emit(EventKind::arrival, static_cast<int>(i));
        }
    }
    if (!any_event) emit(EventKind::epoch, -1);
}

void QueueEngine::finish() {
    if (finished_) return;
    for (std::size_t i = 0; i < queues_.size(); ++i)
        for (double a : queues_[i]) account_job(i, a, now_);
    finished_ = true;
    emit(EventKind::horizon, -1);
}

ReplicationResult QueueEngine::result() const {
    ReplicationResult r;
    const double window = horizon_ - warmup_;
    r.class_cost.resize(queues_.size());
    for (std::size_t i = 0; i < queues_.size(); ++i) {
        r.class_cost[i] = class_cost_[i] / window;
        r.total_cost += class_cost_[i];
        r.arrivals += class_arrivals_[i];
        r.departures += class_departures_[i];
        r.in_system += queues_[i].size();
    }
    r.mean_cost = r.total_cost / window;
    r.preemptions = preemptions_;
    r.events = events_;
    r.busy_fraction = busy_ / window;
    r.max_class_jobs = max_class_jobs_;
    return r;
}

// ------------------------------------------------------------------- drivers

ReplicationResult simulate_replication(const SystemConfig& cfg, const BoundPolicy& policy,
                                       std::size_t replication, TraceSink trace, WithinClass order) {
    QueueEngine eng(cfg, policy, replication, order);
    if (trace) eng.set_trace(std::move(trace));
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

SimResult aggregate(std::vector<ReplicationResult> reps) {
    SimResult out;
    RunningStats mean, busy;
    for (const auto& r : reps) {
        mean.add(r.mean_cost);
        busy.add(r.busy_fraction);
        if (out.class_cost.size() < r.class_cost.size()) out.class_cost.resize(r.class_cost.size(), 0.0);
        for (std::size_t i = 0; i < r.class_cost.size(); ++i)
            out.class_cost[i] += r.class_cost[i] / static_cast<double>(reps.size());
        out.arrivals += r.arrivals;
        out.departures += r.departures;
        out.in_system += r.in_system;
        out.preemptions += r.preemptions;
    }
    out.mean_cost = mean.mean();
    out.ci_half_width = mean.ci_half_width();
    out.busy_fraction = busy.mean();
    out.replications = std::move(reps);
    return out;
}

SimResult simulate(const SystemConfig& cfg, const IndexPolicy& policy, TraceSink trace) {
    cfg.validate();
    BoundPolicy bound(policy, cfg.classes);
    auto grid = age_grid(monotone_check_span(cfg));
    auto report = verify_monotone(policy, cfg.classes, grid);
    if (!report.pass) throw ConfigError("non-monotone policy: " + report.detail);
    std::vector<ReplicationResult> reps(cfg.replications);
    if (trace) {
        for (std::size_t r = 0; r < reps.size(); ++r) reps[r] = simulate_replication(cfg, bound, r, trace);
    } else {
        parallel_for(reps.size(), [&](std::size_t r) { reps[r] = simulate_replication(cfg, bound, r); });
    }
    return aggregate(std::move(reps));
}

std::vector<CoupledPath> simulate_coupled(const SystemConfig& cfg, std::span<const CoupledPolicy> policies,
                                          bool follow_first) {
    cfg.validate();
    if (policies.empty()) throw ConfigError("need at least one policy");
    std::vector<BoundPolicy> bound;
    for (const auto& p : policies) {
        auto report = verify_monotone(p.policy, cfg.classes, age_grid(monotone_check_span(cfg)));
        if (!report.pass) throw ConfigError("non-monotone policy: " + report.detail);
        bound.emplace_back(p.policy, cfg.classes);
    }
    std::vector<CoupledPath> out(cfg.replications);
    parallel_for(out.size(), [&](std::size_t r) {
        CoupledPath path;
        if (!follow_first) {
            for (std::size_t p = 0; p < policies.size(); ++p) {
                auto res = simulate_replication(cfg, bound[p], r, {}, policies[p].order);
                path.cost.push_back(res.total_cost);
                path.max_class_jobs.push_back(res.max_class_jobs);
            }
        } else {
            std::vector<QueueEngine> engines;
            engines.reserve(policies.size());
            for (std::size_t p = 0; p < policies.size(); ++p) engines.emplace_back(cfg, bound[p], r, policies[p].order);
            for (;;) {
                engines[0].decide();
                for (std::size_t p = 1; p < engines.size(); ++p) {
                    engines[p].force_class(engines[0].served());
                    engines[p].decide();
                }
                double t = kInf;
                for (const auto& e : engines) t = std::min(t, e.next_event_time());
                bool done = t >= cfg.horizon;
                if (done) t = cfg.horizon;
                for (auto& e : engines) e.advance_to(t);
                if (done) break;
            }
            for (auto& e : engines) {
                e.finish();
                auto res = e.result();
                path.cost.push_back(res.total_cost);
                path.max_class_jobs.push_back(res.max_class_jobs);
            }
        }
        out[r] = std::move(path);
    });
    return out;
}

std::vector<SweepRow> load_sweep(const SystemConfig& base, std::span<const double> loads,
                                 std::span<const IndexPolicy> policies) {
    std::vector<SweepRow> rows;
    for (double rho : loads) {
        SystemConfig cfg = base.at_load(rho);
        for (const auto& p : policies) {
            if (p.kind() == PolicyKind::static_priority && p.priority_order().empty()) {
                std::vector<int> ids;
                for (const auto& c : cfg.classes) ids.push_back(c.id);
                std::sort(ids.begin(), ids.end());
                SweepRow best;
                bool first = true;
                do {
                    auto candidate = IndexPolicy::static_priority(ids);
                    auto res = simulate(cfg, candidate);
                    if (first || res.mean_cost < best.result.mean_cost) {
                        best = {rho, "static_priority", candidate.name(), std::move(res)};
                        first = false;
                    }
                } while (std::next_permutation(ids.begin(), ids.end()));
                rows.push_back(std::move(best));
            } else {
                rows.push_back({rho, p.kind() == PolicyKind::static_priority ? "static_priority" : p.name(),
                                p.kind() == PolicyKind::static_priority ? p.name() : "", simulate(cfg, p)});
            }
        }
    }
    return rows;
}

std::size_t worker_count() {
    if (const char* env = std::getenv("TVHC_WORKERS")) {
        long n = std::strtol(env, nullptr, 10);
        if (n > 0) return static_cast<std::size_t>(n);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    std::size_t workers = std::min(worker_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mu);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

} // namespace tvhc
