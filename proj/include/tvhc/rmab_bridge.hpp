#ifndef TVHC_RMAB_BRIDGE_HPP
#define TVHC_RMAB_BRIDGE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "tvhc/queue_sim.hpp"

namespace tvhc {

struct ArmState {
    /// Age of the oldest job; negative means time until the next arrival.
    double T = 0.0;
    /// Active time accumulated toward the current service timer.
    double xi = 0.0;
    std::uint64_t count = 0;
};

/// k restless arms, one per class. An arm drifts up at unit rate; while active
/// it drops by the next inter-arrival gap each time its service timer expires.
/// Driven by the same sample-path streams as QueueEngine.
class ArmEngine {
public:
    ArmEngine(const SystemConfig& cfg, const BoundPolicy& policy, std::size_t replication);

    void decide();
    double next_event_time() const;
    void advance_to(double t, double tol = 0.0);
    void finish();

    double now() const { return now_; }
    int active() const { return active_; }
    const ArmState& arm(std::size_t i) const { return arms_[i]; }
    std::size_t num_arms() const { return arms_.size(); }
    ReplicationResult result() const;

private:
    void accrue(double from, double to);

    const SystemConfig& cfg_;
    const BoundPolicy& policy_;
    SamplePath path_;
    double warmup_, horizon_, quantum_;
    double now_ = 0.0;
    int active_ = -1;
    std::vector<ArmState> arms_;
    std::vector<double> timer_;
    std::vector<double> origin_;
    std::vector<double> anchor_;
    std::vector<double> class_cost_;
    std::uint64_t events_ = 0;
    double busy_ = 0.0;
    std::vector<double> age_buf_;
    std::vector<char> elig_buf_;
};

ReplicationResult simulate_rmab_replication(const SystemConfig& cfg, const BoundPolicy& policy,
                                            std::size_t replication);

/// Time-average of sum_i r_i(T_i(t)) under the index policy.
SimResult simulate_rmab(const SystemConfig& cfg, const IndexPolicy& policy);

struct TracePoint {
    double t = 0.0;
    int cls = 0;
    double A = 0.0;
    double T = 0.0;
};

struct CoupledTrace {
    std::uint64_t events = 0;
    double max_state_gap = 0.0;
    double max_progress_gap = 0.0;
    std::uint64_t count_mismatches = 0;
    std::uint64_t choice_mismatches = 0;
    bool pass = false;
    /// Empty on success, else a description of the first divergence.
    std::string first_divergence;
    /// Filled only when recording was requested.
    std::vector<TracePoint> points;
};

struct CoupledOptions {
    std::size_t replication = 0;
    /// Stop after this many lockstep events (0 means run to the horizon).
    std::uint64_t max_events = 0;
    double gap_tol = 1e-9;
    bool record = false;
};

/// Runs the queue and the arms on one clock from the same streams and compares
/// oldest ages with arm states, timer progress, and completion counts at every
/// event. Throws ConfigError when an index function decreases.
CoupledTrace coupled_equivalence(const SystemConfig& cfg, const IndexPolicy& policy, const CoupledOptions& opt = {});

} // namespace tvhc

#endif
