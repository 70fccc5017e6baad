#ifndef TVHC_QUEUE_SIM_HPP
#define TVHC_QUEUE_SIM_HPP

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tvhc/policy_index.hpp"
#include "tvhc/rng.hpp"

namespace tvhc {

struct SystemConfig {
    std::vector<ClassConfig> classes;
    double horizon = 1e5;
    /// Negative means 10% of the horizon.
    double warmup = -1.0;
    std::size_t replications = 10;
    std::uint64_t seed = 1;
    /// Spacing of forced decision epochs; non-positive means 0.01 / max mu.
    double decision_quantum = 0.0;

    double load() const;
    double effective_warmup() const;
    double effective_quantum() const;
    /// Throws InstabilityError / ConfigError.
    void validate() const;
    /// Copy with every arrival rate scaled so the total load equals `rho`.
    SystemConfig at_load(double rho) const;
};

/// Per-class sample path: the inter-arrival stream {a_i0, a_i1, ...} and the
/// service-timer stream {s_i1, s_i2, ...}, reproducible from
/// (seed, replication, class position).
struct SamplePath {
    std::vector<ExpStream> interarrival;
    std::vector<ExpStream> service;

    static SamplePath make(const SystemConfig& cfg, std::size_t replication);
};

enum class WithinClass { fcfs, lcfs };

enum class EventKind { arrival, departure, epoch, horizon };

struct TraceEvent {
    double t = 0.0;
    EventKind kind = EventKind::epoch;
    int cls = -1;
    int served = -1;
    std::vector<std::size_t> in_system;
};

using TraceSink = std::function<void(const TraceEvent&)>;

struct ReplicationResult {
    double mean_cost = 0.0;
    double total_cost = 0.0;
    std::vector<double> class_cost;
    std::uint64_t arrivals = 0;
    std::uint64_t departures = 0;
    std::uint64_t in_system = 0;
    std::uint64_t preemptions = 0;
    std::uint64_t events = 0;
    double busy_fraction = 0.0;
    /// Largest number of simultaneously present jobs of any single class.
    std::size_t max_class_jobs = 0;
};

struct SimResult {
    double mean_cost = 0.0;
    double ci_half_width = 0.0;
    std::vector<double> class_cost;
    std::uint64_t arrivals = 0;
    std::uint64_t departures = 0;
    std::uint64_t in_system = 0;
    std::uint64_t preemptions = 0;
    double busy_fraction = 0.0;
    std::vector<ReplicationResult> replications;
};

/// One replication of the preemptive multi-class queue on a fixed sample path.
/// Exposed so coupled runs (follower policies, the R-MAB bridge) can advance
/// several systems on a single clock.
class QueueEngine {
public:
    QueueEngine(const SystemConfig& cfg, const BoundPolicy& policy, std::size_t replication,
                WithinClass order = WithinClass::fcfs);

    void set_trace(TraceSink sink) { trace_ = std::move(sink); }
    /// Follow another system's class choice at the next decide().
    void force_class(int position) { forced_ = position; }

    void decide();
    /// Earliest pending arrival, departure, or decision epoch (not the horizon).
    double next_event_time() const;
    /// Moves the clock to t and processes every event due at or before t + tol.
    void advance_to(double t, double tol = 0.0);
    /// Adds the partial cost of jobs still present; call once at the end.
    void finish();

    double now() const { return now_; }
    int served() const { return served_; }
    std::size_t num_classes() const { return queues_.size(); }
    std::size_t jobs(std::size_t i) const { return queues_[i].size(); }
    /// Age of the oldest class-i job, or minus the time to the next class-i arrival.
    double oldest_age(std::size_t i) const;
    /// Service the oldest class-i job has received (class-timer progress).
    double service_progress(std::size_t i) const;
    std::uint64_t completions(std::size_t i) const { return class_departures_[i]; }
    ReplicationResult result() const;

private:
    double candidate_age(std::size_t i) const;
    void account_job(std::size_t i, double arrival, double until);
    void check_invariants() const;
    void emit(EventKind kind, int cls);

    const SystemConfig& cfg_;
    const BoundPolicy& policy_;
    WithinClass order_;
    SamplePath path_;
    double warmup_, horizon_, quantum_;
    double now_ = 0.0;
    int served_ = -1;
    int forced_ = -1;
    std::vector<std::deque<double>> queues_;
    std::vector<double> next_arrival_;
    std::vector<double> timer_left_;
    std::vector<double> timer_total_;
    std::vector<double> class_cost_;
    std::vector<std::uint64_t> class_arrivals_;
    std::vector<std::uint64_t> class_departures_;
    std::uint64_t preemptions_ = 0;
    std::uint64_t events_ = 0;
    std::size_t max_class_jobs_ = 0;
    double busy_ = 0.0;
    bool finished_ = false;
    std::vector<double> age_buf_;
    std::vector<char> elig_buf_;
    TraceSink trace_;
};

/// Time-average holding cost of the index policy over independent replications.
SimResult simulate(const SystemConfig& cfg, const IndexPolicy& policy, TraceSink trace = {});

ReplicationResult simulate_replication(const SystemConfig& cfg, const BoundPolicy& policy,
                                       std::size_t replication, TraceSink trace = {},
                                       WithinClass order = WithinClass::fcfs);

SimResult aggregate(std::vector<ReplicationResult> reps);

struct CoupledPolicy {
    IndexPolicy policy;
    WithinClass order = WithinClass::fcfs;
};

struct CoupledPath {
    /// Accumulated holding cost over [warmup, horizon], one entry per policy.
    std::vector<double> cost;
    std::vector<std::size_t> max_class_jobs;
};

/// Runs every policy on the same sample path for each replication. With
/// follow_first, policies 1.. serve whichever class policy 0 serves and differ
/// only in the within-class order.
std::vector<CoupledPath> simulate_coupled(const SystemConfig& cfg, std::span<const CoupledPolicy> policies,
                                          bool follow_first = false);

struct SweepRow {
    double load = 0.0;
    std::string policy;
    /// Chosen ordering for expanded static priority, otherwise empty.
    std::string detail;
    SimResult result;
};

/// Scales arrival rates (fixed shares) to each load and runs every policy.
/// A static_priority policy with an empty order is expanded to all k!
/// orderings and only the best one is reported for each load.
std::vector<SweepRow> load_sweep(const SystemConfig& base, std::span<const double> loads,
                                 std::span<const IndexPolicy> policies);

/// Worker count from TVHC_WORKERS (default: hardware concurrency).
std::size_t worker_count();

/// Runs fn(i) for i in [0, n) on the worker pool.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

} // namespace tvhc

#endif
