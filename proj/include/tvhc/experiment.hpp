#ifndef TVHC_EXPERIMENT_HPP
#define TVHC_EXPERIMENT_HPP

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tvhc/errors.hpp"
#include "tvhc/rmab_bridge.hpp"

namespace tvhc {

/// Config file problem, tagged with the JSON path of the offending node.
class SchemaError : public ConfigError {
public:
    SchemaError(std::string path, const std::string& msg)
        : ConfigError(path + ": " + msg), path_(std::move(path)) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

enum class Suite { sweep, bandit_checks, bridge_checks, sanity };

std::string suite_name(Suite s);

struct BanditSettings {
    /// Position of the class whose single-arm problem is scanned.
    std::size_t cls = 0;
    double alpha = 0.1;
    /// System load used for the arrival rate; non-positive means the first sweep load.
    double load = 0.0;
    /// Upper end of the state grid; non-positive picks one from the cost shape.
    double t_max = 0.0;
    std::size_t points = 61;
};

struct BridgeSettings {
    double load = 0.0;
    std::size_t replication = 0;
    std::uint64_t max_events = 100000;
};

struct ExperimentSpec {
    std::string name;
    /// When set (e.g. "fig7"), the sweep also writes <figure>_data.csv.
    std::string figure;
    /// Arrival rates are relative; each sweep load rescales them.
    SystemConfig system;
    std::vector<double> loads;
    std::vector<IndexPolicy> policies;
    std::string output_dir = "out";
    std::vector<Suite> suites{Suite::sweep};
    BanditSettings bandit;
    BridgeSettings bridge;
};

nlohmann::json cost_to_json(const CostFunction& c);
CostFunction cost_from_json(const nlohmann::json& j, const std::string& path = "cost");

/// Throws SchemaError for structural problems and for policies that cannot be
/// built from the classes.
ExperimentSpec parse_spec(const nlohmann::json& j);

std::vector<std::string> preset_names();
/// Throws ConfigError for an unknown name.
nlohmann::json preset(const std::string& name);
/// A file path, or the name of a built-in preset when no such file exists.
nlohmann::json load_spec_json(const std::string& path_or_preset);

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> reps;
    std::optional<double> horizon;
    std::optional<std::string> out;
};

void apply_overrides(ExperimentSpec& spec, const Overrides& ov);

// ---- results.csv: load,policy,replication,mean_cost,ci_half,arrivals,departures,busy_fraction
// One row per replication (ci_half empty) followed by an aggregate row whose
// replication field is "all".

struct ResultRow {
    double load = 0.0;
    std::string policy;
    std::string replication;
    double mean_cost = 0.0;
    std::optional<double> ci_half;
    std::uint64_t arrivals = 0;
    std::uint64_t departures = 0;
    double busy_fraction = 0.0;
};

std::vector<ResultRow> result_rows(const std::vector<SweepRow>& sweep);
std::string results_csv(const std::vector<ResultRow>& rows);
std::vector<ResultRow> parse_results_csv(const std::string& text);
/// Policy ranking per load, computed from the aggregate rows only.
std::string summary_markdown(const std::vector<ResultRow>& rows);
/// Wide table: load, then <policy>,<policy>_ci for each policy.
std::string figure_csv(const std::vector<ResultRow>& rows);

struct CheckItem {
    std::string check;
    std::string subject;
    bool pass = true;
    std::string detail;
};

struct CheckReport {
    std::vector<CheckItem> items;
    bool pass() const;
    std::string text() const;
};

/// Dry run: schema, stability at every load, cost growth, index monotonicity.
/// Never throws for problems in the file; every finding is an item.
CheckReport validate_spec(const nlohmann::json& j);

struct BanditRow {
    double t = 0.0;
    double whittle = 0.0;
    double cost_bar = 0.0;
    double gamma_fn = 0.0;
    bool hjb_sign_ok = true;
};

std::vector<BanditRow> bandit_table(const ExperimentSpec& spec);
/// Columns t,whittle,cost_bar,gamma_fn,hjb_margin_sign_ok.
std::string bandit_csv(const std::vector<BanditRow>& rows);

struct BridgeReport {
    double load = 0.0;
    CoupledTrace trace;
    SimResult queue;
    SimResult rmab;
    bool ci_overlap = false;
    bool pass() const { return trace.pass && ci_overlap; }
    std::string text() const;
};

BridgeReport bridge_check(const ExperimentSpec& spec);
/// Columns t,i,A_i,T_i.
std::string bridge_csv(const CoupledTrace& trace);

/// One JSON object per event of a single replication:
/// {"t", "event": arrival|departure|epoch|horizon, "class", "served", "in_system"}.
/// Class fields hold class ids or null. Epochs that do not change the served
/// class are skipped. Returns the number of lines written.
std::size_t write_trace_jsonl(const ExperimentSpec& spec, double load, std::size_t policy, std::size_t replication,
                              std::ostream& out);

struct SanityOptions {
    std::uint64_t seed = 1;
    std::size_t reps = 10;
    double horizon = 1e6;
};

/// M/M/1 cost against rho / (1 - rho), the c-mu index identity, and the
/// busy-period transform residual.
CheckReport sanity_checks(const SanityOptions& opt = {});

struct SuiteOutcome {
    Suite suite = Suite::sweep;
    bool ok = false;
    std::string message;
    std::vector<std::string> files;
};

struct RunReport {
    std::vector<SuiteOutcome> suites;
    bool ok() const;
};

/// Runs every requested suite; a failing suite is recorded and the rest still run.
RunReport run_experiment(const ExperimentSpec& spec, std::ostream& log);

/// Fixed-format number used in every emitted file.
std::string fmt_num(double x);

} // namespace tvhc

#endif
