#ifndef TVHC_POLICY_INDEX_HPP
#define TVHC_POLICY_INDEX_HPP

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tvhc/cost_model.hpp"

namespace tvhc {

struct ClassConfig {
    int id = 0;
    double lambda = 0.0;
    double mu = 1.0;
    CostFunction cost = CostFunction::constant(1.0);

    /// Shift rate of the Whittle index, mu - lambda.
    double whittle_rate() const { return mu - lambda; }
    void validate() const;
};

enum class PolicyKind { fcfs, static_priority, gen_cmu, aalto, whittle, accumulated_priority, custom };

/// Separation between static priority levels; ages never approach it.
inline constexpr double kPriorityLevelGap = 1e12;

/// A named family of per-class index functions V_i(age). The server runs the
/// oldest job of the class with the largest index; ties go to the older job,
/// then to the lower class position.
class IndexPolicy {
public:
    using Custom = std::function<double(const ClassConfig&, double)>;

    static IndexPolicy fcfs();
    /// order[0] is the id of the highest-priority class.
    static IndexPolicy static_priority(std::vector<int> order);
    static IndexPolicy gen_cmu();
    static IndexPolicy aalto();
    static IndexPolicy whittle();
    /// slopes[i] applies to the i-th class passed to index_value/bind; empty
    /// means the default mu_i c_i(0) + 1.
    static IndexPolicy accumulated_priority(std::vector<double> slopes = {});
    /// Test and experiment hook: an arbitrary index function.
    static IndexPolicy custom(std::string name, Custom fn);

    PolicyKind kind() const { return kind_; }
    std::string name() const;
    const std::vector<int>& priority_order() const { return order_; }
    const std::vector<double>& slopes() const { return slopes_; }

    /// Index of a job of class `cls` (at position `position` among the system's
    /// classes) with the given age.
    double index_value(const ClassConfig& cls, double age, std::size_t position = 0) const;

    /// False when the argmax can only change at arrivals and departures.
    bool needs_decision_grid() const;

private:
    PolicyKind kind_ = PolicyKind::fcfs;
    std::vector<int> order_;
    std::vector<double> slopes_;
    std::string custom_name_;
    Custom custom_;
};

double index_value(const IndexPolicy& p, const ClassConfig& cls, double age);

struct MonotoneReport {
    bool pass = true;
    std::string detail;
};

/// Samples every class's index on the age grid (>= 100 points) and reports the
/// first decrease beyond floating-point noise.
MonotoneReport verify_monotone(const IndexPolicy& p, std::span<const ClassConfig> classes,
                               std::span<const double> grid);

/// Default age grid for monotonicity checks: [0, horizon] with n points.
std::vector<double> age_grid(double horizon, std::size_t n = 401);

/// A policy bound to a concrete set of classes; evaluators for quadrature-backed
/// indices are tabulated lazily on a fine age grid. Thread-safe.
class BoundPolicy {
public:
    BoundPolicy(const IndexPolicy& policy, std::vector<ClassConfig> classes);
    ~BoundPolicy();
    BoundPolicy(BoundPolicy&&) noexcept;
    BoundPolicy& operator=(BoundPolicy&&) noexcept;

    const IndexPolicy& policy() const { return policy_; }
    std::span<const ClassConfig> classes() const { return classes_; }
    double index(std::size_t position, double age) const;
    bool needs_decision_grid() const { return policy_.needs_decision_grid(); }

    /// Position of the class to serve, or -1 when no class is eligible.
    /// `age[i]` is the age of the candidate job of class i.
    int select(std::span<const double> age, std::span<const char> eligible) const;

private:
    struct Table;
    IndexPolicy policy_;
    std::vector<ClassConfig> classes_;
    std::vector<std::unique_ptr<Table>> tables_;
};

} // namespace tvhc

#endif
