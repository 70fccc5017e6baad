#include "tvhc/policy_index.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <mutex>
#include <sstream>

#include "tvhc/errors.hpp"

namespace tvhc {

void ClassConfig::validate() const {
    if (!(lambda >= 0)) throw ConfigError("class " + std::to_string(id) + ": lambda must be >= 0");
    if (!(mu > 0)) throw ConfigError("class " + std::to_string(id) + ": mu must be > 0");
}

IndexPolicy IndexPolicy::fcfs() {
    return IndexPolicy{};
}

IndexPolicy IndexPolicy::static_priority(std::vector<int> order) {
    IndexPolicy p;
    p.kind_ = PolicyKind::static_priority;
    p.order_ = std::move(order);
    return p;
}

IndexPolicy IndexPolicy::gen_cmu() {
    IndexPolicy p;
    p.kind_ = PolicyKind::gen_cmu;
    return p;
}

IndexPolicy IndexPolicy::aalto() {
    IndexPolicy p;
    p.kind_ = PolicyKind::aalto;
    return p;
}

IndexPolicy IndexPolicy::whittle() {
    IndexPolicy p;
    p.kind_ = PolicyKind::whittle;
    return p;
}

IndexPolicy IndexPolicy::accumulated_priority(std::vector<double> slopes) {
    for (double b : slopes)
        if (!(b >= 0)) throw ConfigError("accumulated_priority slopes must be >= 0");
    IndexPolicy p;
    p.kind_ = PolicyKind::accumulated_priority;
    p.slopes_ = std::move(slopes);
    return p;
}

IndexPolicy IndexPolicy::custom(std::string name, Custom fn) {
    IndexPolicy p;
    p.kind_ = PolicyKind::custom;
    p.custom_name_ = std::move(name);
    p.custom_ = std::move(fn);
    return p;
}

std::string IndexPolicy::name() const {
    switch (kind_) {
    case PolicyKind::fcfs: return "fcfs";
    case PolicyKind::static_priority: {
        std::ostringstream os;
        os << "static_priority(";
        for (std::size_t i = 0; i < order_.size(); ++i) os << (i ? ">" : "") << order_[i];
        os << ")";
        return os.str();
    }
    case PolicyKind::gen_cmu: return "gen_cmu";
    case PolicyKind::aalto: return "aalto";
    case PolicyKind::whittle: return "whittle";
    case PolicyKind::accumulated_priority: return "accumulated_priority";
    case PolicyKind::custom: return custom_name_;
    }
    return "?";
}

double IndexPolicy::index_value(const ClassConfig& cls, double age, std::size_t position) const {
    if (!(age >= 0)) throw DomainError("age must be nonnegative");
    switch (kind_) {
    case PolicyKind::fcfs:
        return age;
    case PolicyKind::static_priority: {
        auto it = std::find(order_.begin(), order_.end(), cls.id);
        if (it == order_.end())
            throw ConfigError("class " + std::to_string(cls.id) + " missing from priority order");
        double rank = static_cast<double>(order_.end() - it);
        return rank * kPriorityLevelGap + age;
    }
    case PolicyKind::gen_cmu:
        return cls.mu * eval(cls.cost, age);
    case PolicyKind::aalto:
        return cls.mu * exp_shift(cls.cost, age, cls.mu);
    case PolicyKind::whittle:
        if (!(cls.lambda < cls.mu))
            throw ConfigError("whittle index needs lambda < mu for class " + std::to_string(cls.id));
        return cls.mu * exp_shift(cls.cost, age, cls.mu - cls.lambda);
    case PolicyKind::accumulated_priority: {
        double b = position < slopes_.size() ? slopes_[position] : cls.mu * eval(cls.cost, 0.0) + 1.0;
        return b * age;
    }
    case PolicyKind::custom:
        return custom_(cls, age);
    }
    return 0.0;
}

bool IndexPolicy::needs_decision_grid() const {
    return kind_ != PolicyKind::fcfs && kind_ != PolicyKind::static_priority;
}

double index_value(const IndexPolicy& p, const ClassConfig& cls, double age) {
    return p.index_value(cls, age);
}

std::vector<double> age_grid(double horizon, std::size_t n) {
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = horizon * static_cast<double>(i) / static_cast<double>(n - 1);
    return g;
}

MonotoneReport verify_monotone(const IndexPolicy& p, std::span<const ClassConfig> classes,
                               std::span<const double> grid) {
    if (grid.size() < 100) throw DomainError("monotonicity grid needs at least 100 points");
    for (std::size_t pos = 0; pos < classes.size(); ++pos) {
        const auto& cls = classes[pos];
        double prev = p.index_value(cls, grid[0], pos);
        for (std::size_t k = 1; k < grid.size(); ++k) {
            double v = p.index_value(cls, grid[k], pos);
            double tol = 1e-9 * std::max(1.0, std::fabs(prev));
            if (v < prev - tol) {
                std::ostringstream os;
                os << "policy " << p.name() << " class " << cls.id << ": index decreases from " << prev
                   << " at age " << grid[k - 1] << " to " << v << " at age " << grid[k];
                return {false, os.str()};
            }
            prev = std::max(prev, v);
        }
    }
    return {true, "nondecreasing on " + std::to_string(grid.size()) + " ages"};
}

// ------------------------------------------------------------------ BoundPolicy

struct BoundPolicy::Table {
    static constexpr std::size_t kChunk = 1024;
    static constexpr std::size_t kMaxChunks = 1 << 14;

    double step = 1e-3;
    std::array<std::once_flag, kMaxChunks> once;
    std::array<std::unique_ptr<std::vector<double>>, kMaxChunks> chunks;
};

BoundPolicy::BoundPolicy(const IndexPolicy& policy, std::vector<ClassConfig> classes)
    : policy_(policy), classes_(std::move(classes)) {
    for (const auto& c : classes_) c.validate();
    if (policy_.kind() == PolicyKind::whittle)
        for (const auto& c : classes_)
            if (!(c.lambda < c.mu))
                throw ConfigError("whittle index needs lambda < mu for class " + std::to_string(c.id));
    if (policy_.kind() == PolicyKind::static_priority) {
        auto order = policy_.priority_order();
        std::vector<int> ids;
        for (const auto& c : classes_) ids.push_back(c.id);
        std::sort(order.begin(), order.end());
        std::sort(ids.begin(), ids.end());
        if (order != ids) throw ConfigError("static priority order must be a permutation of class ids");
    }
    bool shifted = policy_.kind() == PolicyKind::whittle || policy_.kind() == PolicyKind::aalto;
    tables_.resize(classes_.size());
    for (std::size_t i = 0; i < classes_.size(); ++i) {
        if (!shifted || !classes_[i].cost.needs_quadrature()) continue;
        auto t = std::make_unique<Table>();
        double step = 1e-3;
        // resolve the sharpest logistic transition with >= 20 samples
        std::function<void(const CostFunction&)> scan = [&](const CostFunction& c) {
            if (const auto* s = std::get_if<family::SmoothedStep>(&c.repr())) step = std::min(step, s->w / 20.0);
            if (const auto* s = std::get_if<family::Sum>(&c.repr()))
                for (const auto& p : s->parts) scan(p);
        };
        scan(classes_[i].cost);
        t->step = step;
        tables_[i] = std::move(t);
    }
}

BoundPolicy::~BoundPolicy() = default;
BoundPolicy::BoundPolicy(BoundPolicy&&) noexcept = default;
BoundPolicy& BoundPolicy::operator=(BoundPolicy&&) noexcept = default;

double BoundPolicy::index(std::size_t position, double age) const {
    const Table* t = tables_[position].get();
    if (!t) return policy_.index_value(classes_[position], age, position);
    double x = age / t->step;
    auto k = static_cast<std::size_t>(x);
    std::size_t chunk = k / Table::kChunk;
    if (chunk >= Table::kMaxChunks) return policy_.index_value(classes_[position], age, position);
    auto& mut = const_cast<Table&>(*t);
    std::call_once(mut.once[chunk], [&] {
        auto v = std::make_unique<std::vector<double>>(Table::kChunk + 1);
        for (std::size_t j = 0; j <= Table::kChunk; ++j) {
            double a = static_cast<double>(chunk * Table::kChunk + j) * t->step;
            (*v)[j] = policy_.index_value(classes_[position], a, position);
        }
        mut.chunks[chunk] = std::move(v);
    });
    const auto& v = *t->chunks[chunk];
    std::size_t j = k - chunk * Table::kChunk;
    double frac = x - static_cast<double>(k);
    return v[j] + frac * (v[j + 1] - v[j]);
}

int BoundPolicy::select(std::span<const double> age, std::span<const char> eligible) const {
    int best = -1;
    double best_index = 0.0, best_age = 0.0;
    for (std::size_t i = 0; i < classes_.size(); ++i) {
        if (!eligible[i]) continue;
        double v = index(i, age[i]);
        if (best < 0 || v > best_index || (v == best_index && age[i] > best_age)) {
            best = static_cast<int>(i);
            best_index = v;
            best_age = age[i];
        }
    }
    return best;
}

} // namespace tvhc
