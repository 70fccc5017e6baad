#include "tvhc/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "tvhc/bandit_lab.hpp"

namespace tvhc {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// ---- schema helpers ----

const json& member(const json& j, const std::string& key, const std::string& path) {
    if (!j.is_object()) throw SchemaError(path, "expected an object");
    auto it = j.find(key);
    if (it == j.end()) throw SchemaError(path + "." + key, "missing required field");
    return *it;
}

double number(const json& j, const std::string& path) {
    if (!j.is_number()) throw SchemaError(path, "expected a number");
    double v = j.get<double>();
    if (!std::isfinite(v)) throw SchemaError(path, "must be finite");
    return v;
}

double number_field(const json& j, const std::string& key, const std::string& path) {
    return number(member(j, key, path), path + "." + key);
}

double number_or(const json& j, const std::string& key, const std::string& path, double fallback) {
    return j.contains(key) ? number(j.at(key), path + "." + key) : fallback;
}

std::uint64_t count_or(const json& j, const std::string& key, const std::string& path, std::uint64_t fallback) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0)
        throw SchemaError(path + "." + key, "expected a nonnegative integer");
    return v.get<std::uint64_t>();
}

std::string string_or(const json& j, const std::string& key, const std::string& path, std::string fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_string()) throw SchemaError(path + "." + key, "expected a string");
    return j.at(key).get<std::string>();
}

const json& array_field(const json& j, const std::string& key, const std::string& path) {
    const auto& a = member(j, key, path);
    if (!a.is_array()) throw SchemaError(path + "." + key, "expected an array");
    return a;
}

void reject_unknown(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) throw SchemaError(path + "." + it.key(), "unknown field");
    }
}

std::string idx(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

// Wraps constructor validation errors with the JSON path.
template <class F>
auto at_path(const std::string& path, F&& f) {
    try {
        return f();
    } catch (const SchemaError&) {
        throw;
    } catch (const std::exception& e) {
        throw SchemaError(path, e.what());
    }
}

Suite parse_suite(const json& j, const std::string& path) {
    if (!j.is_string()) throw SchemaError(path, "expected a suite name");
    auto s = j.get<std::string>();
    if (s == "sweep") return Suite::sweep;
    if (s == "bandit_checks") return Suite::bandit_checks;
    if (s == "bridge_checks") return Suite::bridge_checks;
    if (s == "sanity") return Suite::sanity;
    throw SchemaError(path, "unknown suite '" + s + "' (sweep, bandit_checks, bridge_checks, sanity)");
}

IndexPolicy parse_policy(const json& j, const std::string& path) {
    std::string name;
    if (j.is_string()) {
        name = j.get<std::string>();
    } else if (j.is_object()) {
        const auto& n = member(j, "name", path);
        if (!n.is_string()) throw SchemaError(path + ".name", "expected a string");
        name = n.get<std::string>();
    } else {
        throw SchemaError(path, "expected a policy name or object");
    }
    if (name == "whittle") return IndexPolicy::whittle();
    if (name == "aalto") return IndexPolicy::aalto();
    if (name == "gen_cmu") return IndexPolicy::gen_cmu();
    if (name == "fcfs") return IndexPolicy::fcfs();
    if (name == "static_priority") {
        std::vector<int> order;
        if (j.is_object() && j.contains("order")) {
            const auto& o = j.at("order");
            if (!o.is_array()) throw SchemaError(path + ".order", "expected an array of class ids");
            for (std::size_t i = 0; i < o.size(); ++i) {
                if (!o[i].is_number_integer()) throw SchemaError(idx(path + ".order", i), "expected a class id");
                order.push_back(o[i].get<int>());
            }
        }
        return IndexPolicy::static_priority(std::move(order));
    }
    if (name == "accumulated_priority") {
        std::vector<double> slopes;
        if (j.is_object() && j.contains("slopes")) {
            const auto& s = j.at("slopes");
            if (!s.is_array()) throw SchemaError(path + ".slopes", "expected an array");
            for (std::size_t i = 0; i < s.size(); ++i) slopes.push_back(number(s[i], idx(path + ".slopes", i)));
        }
        return at_path(path, [&] { return IndexPolicy::accumulated_priority(std::move(slopes)); });
    }
    throw SchemaError(path, "unknown policy '" + name + "'");
}

// Policy references must resolve against the class list.
void check_policy_classes(const IndexPolicy& p, const std::vector<ClassConfig>& classes, const std::string& path) {
    if (p.kind() == PolicyKind::static_priority && !p.priority_order().empty()) {
        std::set<int> ids, seen;
        for (const auto& c : classes) ids.insert(c.id);
        for (int id : p.priority_order()) {
            if (!ids.count(id)) throw SchemaError(path + ".order", "class id " + std::to_string(id) + " not defined");
            if (!seen.insert(id).second)
                throw SchemaError(path + ".order", "class id " + std::to_string(id) + " repeated");
        }
        if (seen.size() != ids.size()) throw SchemaError(path + ".order", "must list every class exactly once");
    }
    if (p.kind() == PolicyKind::accumulated_priority && !p.slopes().empty() && p.slopes().size() != classes.size())
        throw SchemaError(path + ".slopes", "need one slope per class");
}

double heaviest_span(const std::vector<ClassConfig>& classes) {
    double span = 10.0;
    for (const auto& c : classes) {
        for (double b : c.cost.breakpoints()) span = std::max(span, 2.0 * b);
        span = std::max(span, 20.0 / (c.mu > c.lambda ? c.mu - c.lambda : c.mu));
    }
    return span;
}

std::string write_file(const fs::path& dir, const std::string& name, const std::string& body) {
    fs::create_directories(dir);
    fs::path p = dir / name;
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << body;
    if (!out) throw std::runtime_error("write failed for " + p.string());
    return p.string();
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double(const std::string& s, std::size_t line) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("results.csv line " + std::to_string(line) + ": bad number '" + s + "'");
    }
}

std::uint64_t parse_count(const std::string& s, std::size_t line) {
    try {
        std::size_t used = 0;
        auto v = std::stoull(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("results.csv line " + std::to_string(line) + ": bad count '" + s + "'");
    }
}

constexpr const char* kResultsHeader = "load,policy,replication,mean_cost,ci_half,arrivals,departures,busy_fraction";

SystemConfig config_at(const ExperimentSpec& spec, double load) {
    return load > 0 ? spec.system.at_load(load) : spec.system;
}

double pick_load(const ExperimentSpec& spec, double requested) {
    if (requested > 0) return requested;
    return spec.loads.empty() ? 0.0 : spec.loads.front();
}

} // namespace

std::string fmt_num(double x) {
    if (x == 0.0) return "0";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

std::string suite_name(Suite s) {
    switch (s) {
    case Suite::sweep: return "sweep";
    case Suite::bandit_checks: return "bandit_checks";
    case Suite::bridge_checks: return "bridge_checks";
    case Suite::sanity: return "sanity";
    }
    return "?";
}

// ---------------------------------------------------------------- cost JSON

json cost_to_json(const CostFunction& c) {
    return std::visit(
        overloaded{
            [](const family::Constant& f) { return json{{"family", "constant"}, {"h", f.h}}; },
            [](const family::Polynomial& f) { return json{{"family", "polynomial"}, {"coeffs", f.coeffs}}; },
            [](const family::SmoothedStep& f) {
                return json{{"family", "smoothed_step"}, {"h", f.h}, {"d", f.d}, {"w", f.w}};
            },
            [](const family::PiecewiseLinear& f) {
                json knots = json::array();
                for (const auto& k : f.knots) knots.push_back({k.t, k.value});
                return json{{"family", "piecewise_linear"}, {"knots", knots}};
            },
            [](const family::Exponential& f) {
                return json{{"family", "exponential"}, {"scale", f.scale}, {"rate", f.rate}};
            },
            [](const family::Sum& f) {
                json parts = json::array();
                for (const auto& p : f.parts) parts.push_back(cost_to_json(p));
                return json{{"family", "sum"}, {"parts", parts}};
            },
        },
        c.repr());
}

CostFunction cost_from_json(const json& j, const std::string& path) {
    const auto& fam = member(j, "family", path);
    if (!fam.is_string()) throw SchemaError(path + ".family", "expected a string");
    const auto f = fam.get<std::string>();
    if (f == "constant") {
        reject_unknown(j, path, {"family", "h"});
        double h = number_field(j, "h", path);
        return at_path(path, [&] { return CostFunction::constant(h); });
    }
    if (f == "polynomial") {
        reject_unknown(j, path, {"family", "coeffs"});
        const auto& a = array_field(j, "coeffs", path);
        std::vector<double> coeffs;
        for (std::size_t i = 0; i < a.size(); ++i) coeffs.push_back(number(a[i], idx(path + ".coeffs", i)));
        return at_path(path, [&] { return CostFunction::polynomial(coeffs); });
    }
    if (f == "smoothed_step") {
        reject_unknown(j, path, {"family", "h", "d", "w"});
        double h = number_field(j, "h", path), d = number_field(j, "d", path);
        double w = number_or(j, "w", path, 0.0);
        return at_path(path, [&] { return CostFunction::smoothed_step(h, d, w); });
    }
    if (f == "piecewise_linear") {
        reject_unknown(j, path, {"family", "knots"});
        const auto& a = array_field(j, "knots", path);
        std::vector<family::Knot> knots;
        for (std::size_t i = 0; i < a.size(); ++i) {
            auto p = idx(path + ".knots", i);
            if (!a[i].is_array() || a[i].size() != 2) throw SchemaError(p, "expected [t, value]");
            knots.push_back({number(a[i][0], p + "[0]"), number(a[i][1], p + "[1]")});
        }
        return at_path(path, [&] { return CostFunction::piecewise_linear(knots); });
    }
    if (f == "exponential") {
        reject_unknown(j, path, {"family", "scale", "rate"});
        double a = number_field(j, "scale", path), b = number_field(j, "rate", path);
        return at_path(path, [&] { return CostFunction::exponential(a, b); });
    }
    if (f == "sum") {
        reject_unknown(j, path, {"family", "parts"});
        const auto& a = array_field(j, "parts", path);
        std::vector<CostFunction> parts;
        for (std::size_t i = 0; i < a.size(); ++i) parts.push_back(cost_from_json(a[i], idx(path + ".parts", i)));
        return at_path(path, [&] { return CostFunction::sum(parts); });
    }
    throw SchemaError(path + ".family", "unknown cost family '" + f + "'");
}

// ---------------------------------------------------------------- spec JSON

ExperimentSpec parse_spec(const json& j) {
    const std::string root = "$";
    if (!j.is_object()) throw SchemaError(root, "expected an object");
    reject_unknown(j, root,
                   {"name", "figure", "classes", "loads", "policies", "horizon", "warmup", "replications", "seed",
                    "decision_quantum", "output", "suites", "bandit", "bridge", "description"});
    ExperimentSpec spec;
    spec.name = string_or(j, "name", root, "experiment");
    spec.figure = string_or(j, "figure", root, "");
    spec.output_dir = string_or(j, "output", root, "out/" + spec.name);

    const auto& classes = array_field(j, "classes", root);
    if (classes.empty()) throw SchemaError(root + ".classes", "need at least one class");
    for (std::size_t i = 0; i < classes.size(); ++i) {
        auto p = idx(root + ".classes", i);
        const auto& c = classes[i];
        if (!c.is_object()) throw SchemaError(p, "expected an object");
        reject_unknown(c, p, {"id", "lambda", "mu", "cost"});
        ClassConfig cc;
        cc.id = static_cast<int>(count_or(c, "id", p, i + 1));
        cc.lambda = number_field(c, "lambda", p);
        cc.mu = number_field(c, "mu", p);
        cc.cost = cost_from_json(member(c, "cost", p), p + ".cost");
        if (!(cc.lambda >= 0)) throw SchemaError(p + ".lambda", "must be nonnegative");
        if (!(cc.mu > 0)) throw SchemaError(p + ".mu", "must be positive");
        for (const auto& prev : spec.system.classes)
            if (prev.id == cc.id) throw SchemaError(p + ".id", "duplicate class id " + std::to_string(cc.id));
        spec.system.classes.push_back(std::move(cc));
    }

    const auto& loads = array_field(j, "loads", root);
    if (loads.empty()) throw SchemaError(root + ".loads", "need at least one load");
    for (std::size_t i = 0; i < loads.size(); ++i) {
        double rho = number(loads[i], idx(root + ".loads", i));
        if (!(rho > 0)) throw SchemaError(idx(root + ".loads", i), "load must be positive");
        spec.loads.push_back(rho);
    }
    double base = spec.system.load();
    if (!(base > 0)) throw SchemaError(root + ".classes", "all arrival rates are zero");

    const auto& pols = array_field(j, "policies", root);
    if (pols.empty()) throw SchemaError(root + ".policies", "policy list is empty");
    for (std::size_t i = 0; i < pols.size(); ++i) {
        auto p = idx(root + ".policies", i);
        auto pol = parse_policy(pols[i], p);
        check_policy_classes(pol, spec.system.classes, p);
        spec.policies.push_back(std::move(pol));
    }

    spec.system.horizon = number_or(j, "horizon", root, 1e5);
    spec.system.warmup = number_or(j, "warmup", root, -1.0);
    spec.system.replications = count_or(j, "replications", root, 10);
    spec.system.seed = count_or(j, "seed", root, 1);
    spec.system.decision_quantum = number_or(j, "decision_quantum", root, 0.0);
    if (!(spec.system.horizon > 0)) throw SchemaError(root + ".horizon", "must be positive");
    if (spec.system.replications < 2) throw SchemaError(root + ".replications", "need at least two replications");
    if (!(spec.system.effective_warmup() < spec.system.horizon))
        throw SchemaError(root + ".warmup", "must be shorter than the horizon");

    if (j.contains("suites")) {
        const auto& s = j.at("suites");
        if (!s.is_array() || s.empty()) throw SchemaError(root + ".suites", "expected a nonempty array");
        spec.suites.clear();
        for (std::size_t i = 0; i < s.size(); ++i) {
            Suite su = parse_suite(s[i], idx(root + ".suites", i));
            if (std::find(spec.suites.begin(), spec.suites.end(), su) == spec.suites.end()) spec.suites.push_back(su);
        }
    }

    if (j.contains("bandit")) {
        const auto& b = j.at("bandit");
        const std::string p = root + ".bandit";
        if (!b.is_object()) throw SchemaError(p, "expected an object");
        reject_unknown(b, p, {"class", "alpha", "load", "t_max", "points"});
        spec.bandit.cls = count_or(b, "class", p, 0);
        spec.bandit.alpha = number_or(b, "alpha", p, spec.bandit.alpha);
        spec.bandit.load = number_or(b, "load", p, 0.0);
        spec.bandit.t_max = number_or(b, "t_max", p, 0.0);
        spec.bandit.points = count_or(b, "points", p, spec.bandit.points);
        if (spec.bandit.cls >= spec.system.classes.size()) throw SchemaError(p + ".class", "no such class position");
        if (!(spec.bandit.alpha > 0)) throw SchemaError(p + ".alpha", "must be positive");
        if (spec.bandit.points < 2) throw SchemaError(p + ".points", "need at least two points");
    }
    if (j.contains("bridge")) {
        const auto& b = j.at("bridge");
        const std::string p = root + ".bridge";
        if (!b.is_object()) throw SchemaError(p, "expected an object");
        reject_unknown(b, p, {"load", "replication", "max_events"});
        spec.bridge.load = number_or(b, "load", p, 0.0);
        spec.bridge.replication = count_or(b, "replication", p, 0);
        spec.bridge.max_events = count_or(b, "max_events", p, spec.bridge.max_events);
    }
    return spec;
}

void apply_overrides(ExperimentSpec& spec, const Overrides& ov) {
    if (ov.seed) spec.system.seed = *ov.seed;
    if (ov.reps) {
        if (*ov.reps < 2) throw ConfigError("--reps must be at least 2");
        spec.system.replications = *ov.reps;
    }
    if (ov.horizon) {
        if (!(*ov.horizon > 0)) throw ConfigError("--horizon must be positive");
        spec.system.horizon = *ov.horizon;
        if (!(spec.system.effective_warmup() < spec.system.horizon)) spec.system.warmup = -1.0;
    }
    if (ov.out) spec.output_dir = *ov.out;
}

// ------------------------------------------------------------------ presets

std::vector<std::string> preset_names() { return {"fig7", "fig8", "fig9", "fig10", "counterexample"}; }

json preset(const std::string& name) {
    const json loads = {0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    const json five = {"whittle", "aalto", "gen_cmu", "fcfs", "static_priority"};
    auto cls = [](int id, double lambda, double mu, json cost) {
        return json{{"id", id}, {"lambda", lambda}, {"mu", mu}, {"cost", std::move(cost)}};
    };
    auto step = [](double h, double d, double w) {
        return json{{"family", "smoothed_step"}, {"h", h}, {"d", d}, {"w", w}};
    };
    auto poly = [](std::vector<double> a) { return json{{"family", "polynomial"}, {"coeffs", a}}; };
    json j;
    if (name == "fig7") {
        // Short jobs pay a large penalty after a deadline; long jobs a small steady cost.
        j = {{"name", "fig7"},
             {"figure", "fig7"},
             {"description", "one deadline; mu1=3, mu2=1, lambda1=0.9 lambda"},
             {"classes", {cls(1, 0.9, 3, step(10, 2, 0.02)), cls(2, 0.1, 1, {{"family", "constant"}, {"h", 1}})}}};
    } else if (name == "fig8") {
        // Late high deadline for short jobs, early low deadline for long jobs.
        j = {{"name", "fig8"},
             {"figure", "fig8"},
             {"description", "two deadlines; mu1=3, mu2=1, lambda1=0.5 lambda"},
             {"classes", {cls(1, 0.5, 3, step(10, 4, 0.05)), cls(2, 0.5, 1, step(1, 1, 0.05))}}};
    } else if (name == "fig9") {
        j = {{"name", "fig9"},
             {"figure", "fig9"},
             {"description", "linear vs quadratic; mu1=3, mu2=1, lambda1=0.75 lambda"},
             {"classes", {cls(1, 0.75, 3, poly({0, 1})), cls(2, 0.25, 1, poly({0, 0, 1}))}}};
    } else if (name == "fig10") {
        // Two interleaving lines for the short classes, a steep quadratic for the long one.
        j = {{"name", "fig10"},
             {"figure", "fig10"},
             {"description", "three classes; mu1=mu2=3, mu3=1, equal arrival rates"},
             {"classes",
              {cls(1, 1, 3, poly({0, 2})), cls(2, 1, 3, poly({1, 0.5})), cls(3, 1, 1, poly({0, 0, 0.5}))}}};
    } else if (name == "counterexample") {
        j = {{"name", "counterexample"},
             {"description", "identical c(t)=t and mu, unequal arrival rates: FCFS is optimal"},
             {"classes", {cls(1, 0.8, 2, poly({0, 1})), cls(2, 0.2, 2, poly({0, 1}))}}};
    } else {
        std::string known;
        for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
        throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
    }
    j["loads"] = name == "counterexample" ? json{0.5, 0.7, 0.9} : loads;
    j["policies"] = five;
    j["horizon"] = 20000.0;
    j["replications"] = 10;
    j["seed"] = 1;
    j["output"] = "out/" + name;
    j["suites"] = {"sweep"};
    return j;
}

json load_spec_json(const std::string& path_or_preset) {
    if (fs::exists(path_or_preset)) {
        std::ifstream in(path_or_preset);
        if (!in) throw ConfigError("cannot read " + path_or_preset);
        try {
            return json::parse(in);
        } catch (const json::parse_error& e) {
            throw SchemaError("$", std::string("JSON syntax error in ") + path_or_preset + ": " + e.what());
        }
    }
    auto names = preset_names();
    if (std::find(names.begin(), names.end(), path_or_preset) != names.end()) return preset(path_or_preset);
    throw ConfigError("no such file or preset: " + path_or_preset);
}

// ------------------------------------------------------------------ results

std::vector<ResultRow> result_rows(const std::vector<SweepRow>& sweep) {
    std::vector<ResultRow> rows;
    for (const auto& s : sweep) {
        const auto& reps = s.result.replications;
        for (std::size_t r = 0; r < reps.size(); ++r) {
            rows.push_back({s.load, s.policy, std::to_string(r), reps[r].mean_cost, std::nullopt, reps[r].arrivals,
                            reps[r].departures, reps[r].busy_fraction});
        }
        rows.push_back({s.load, s.policy, "all", s.result.mean_cost, s.result.ci_half_width, s.result.arrivals,
                        s.result.departures, s.result.busy_fraction});
    }
    return rows;
}

std::string results_csv(const std::vector<ResultRow>& rows) {
    std::ostringstream os;
    os << kResultsHeader << '\n';
    for (const auto& r : rows) {
        os << fmt_num(r.load) << ',' << r.policy << ',' << r.replication << ',' << fmt_num(r.mean_cost) << ','
           << (r.ci_half ? fmt_num(*r.ci_half) : "") << ',' << r.arrivals << ',' << r.departures << ','
           << fmt_num(r.busy_fraction) << '\n';
    }
    return os.str();
}

std::vector<ResultRow> parse_results_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || split_csv_line(line) != split_csv_line(kResultsHeader))
        throw ConfigError("results.csv: unexpected header");
    std::vector<ResultRow> rows;
    std::size_t n = 1;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty() || line == "\r") continue;
        auto f = split_csv_line(line);
        if (f.size() != 8) throw ConfigError("results.csv line " + std::to_string(n) + ": expected 8 fields");
        ResultRow r;
        r.load = parse_double(f[0], n);
        r.policy = f[1];
        r.replication = f[2];
        r.mean_cost = parse_double(f[3], n);
        if (!f[4].empty()) r.ci_half = parse_double(f[4], n);
        r.arrivals = parse_count(f[5], n);
        r.departures = parse_count(f[6], n);
        r.busy_fraction = parse_double(f[7], n);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::string summary_markdown(const std::vector<ResultRow>& rows) {
    std::map<double, std::vector<const ResultRow*>> by_load;
    for (const auto& r : rows)
        if (r.replication == "all") by_load[r.load].push_back(&r);
    std::ostringstream os;
    os << "# Policy ranking\n\n"
       << "Mean time-average holding cost with 95% CI half-width. `tied` marks a policy whose interval overlaps "
          "the best policy's interval.\n";
    for (auto& [load, list] : by_load) {
        std::stable_sort(list.begin(), list.end(), [](const ResultRow* a, const ResultRow* b) {
            if (a->mean_cost != b->mean_cost) return a->mean_cost < b->mean_cost;
            return a->policy < b->policy;
        });
        const ResultRow& best = *list.front();
        const double best_ci = best.ci_half.value_or(0.0);
        os << "\n## load " << fmt_num(load) << "\n\n| rank | policy | mean_cost | ci_half | flag |\n|---|---|---|---|---|\n";
        for (std::size_t k = 0; k < list.size(); ++k) {
            const ResultRow& r = *list[k];
            const double ci = r.ci_half.value_or(0.0);
            std::string flag = k == 0 ? "best" : (r.mean_cost - ci <= best.mean_cost + best_ci ? "tied" : "worse");
            os << "| " << k + 1 << " | " << r.policy << " | " << fmt_num(r.mean_cost) << " | " << fmt_num(ci) << " | "
               << flag << " |\n";
        }
    }
    return os.str();
}

std::string figure_csv(const std::vector<ResultRow>& rows) {
    std::vector<std::string> policies;
    std::map<double, std::map<std::string, const ResultRow*>> table;
    for (const auto& r : rows) {
        if (r.replication != "all") continue;
        if (std::find(policies.begin(), policies.end(), r.policy) == policies.end()) policies.push_back(r.policy);
        table[r.load][r.policy] = &r;
    }
    std::ostringstream os;
    os << "load";
    for (const auto& p : policies) os << ',' << p << ',' << p << "_ci";
    os << '\n';
    for (const auto& [load, cells] : table) {
        os << fmt_num(load);
        for (const auto& p : policies) {
            auto it = cells.find(p);
            if (it == cells.end()) os << ",,";
            else os << ',' << fmt_num(it->second->mean_cost) << ',' << fmt_num(it->second->ci_half.value_or(0.0));
        }
        os << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------- validate

bool CheckReport::pass() const {
    return std::all_of(items.begin(), items.end(), [](const CheckItem& c) { return c.pass; });
}

std::string CheckReport::text() const {
    std::ostringstream os;
    for (const auto& c : items) {
        os << (c.pass ? "PASS" : "FAIL") << "  " << c.check;
        if (!c.subject.empty()) os << " [" << c.subject << "]";
        if (!c.detail.empty()) os << ": " << c.detail;
        os << '\n';
    }
    os << (pass() ? "all checks passed" : "some checks failed") << '\n';
    return os.str();
}

CheckReport validate_spec(const json& j) {
    CheckReport rep;
    ExperimentSpec spec;
    try {
        spec = parse_spec(j);
        rep.items.push_back({"schema", "", true, "ok"});
    } catch (const std::exception& e) {
        rep.items.push_back({"schema", "", false, e.what()});
        return rep;
    }
    const double base = spec.system.load();
    for (double rho : spec.loads) {
        const std::string subject = "load " + fmt_num(rho);
        // Arrival rates at this load, computed directly so loads >= 1 can be diagnosed.
        std::vector<ClassConfig> classes = spec.system.classes;
        for (auto& c : classes) c.lambda *= rho / base;
        std::string unstable;
        for (const auto& c : classes)
            if (!(c.lambda < c.mu))
                unstable += (unstable.empty() ? "" : "; ") + ("class " + std::to_string(c.id) + " has lambda " +
                                                              fmt_num(c.lambda) + " >= mu " + fmt_num(c.mu));
        if (!(rho < 1.0)) {
            std::size_t heavy = 0;
            for (std::size_t i = 1; i < classes.size(); ++i)
                if (classes[i].lambda / classes[i].mu > classes[heavy].lambda / classes[heavy].mu) heavy = i;
            rep.items.push_back({"stability", subject, false,
                                 "total load " + fmt_num(rho) + " is not below 1 (heaviest: class " +
                                     std::to_string(classes[heavy].id) + ", rho_i " +
                                     fmt_num(classes[heavy].lambda / classes[heavy].mu) + ")" +
                                     (unstable.empty() ? "" : "; " + unstable)});
            continue;
        }
        if (!unstable.empty()) {
            rep.items.push_back({"stability", subject, false, unstable});
            continue;
        }
        rep.items.push_back({"stability", subject, true, "total load " + fmt_num(rho)});

        bool growth_ok = true;
        for (const auto& c : classes) {
            auto v = growth_check(c.cost, c.lambda, c.mu);
            if (!v.pass) {
                growth_ok = false;
                rep.items.push_back({"growth_check", subject + ", class " + std::to_string(c.id), false, v.note});
            }
        }
        if (growth_ok) rep.items.push_back({"growth_check", subject, true, "every cost integrable"});
        if (!growth_ok) continue;

        auto grid = age_grid(heaviest_span(classes));
        for (const auto& p : spec.policies) {
            std::string pname = p.name();
            try {
                IndexPolicy check = p;
                if (p.kind() == PolicyKind::static_priority && p.priority_order().empty()) {
                    std::vector<int> ids;
                    for (const auto& c : classes) ids.push_back(c.id);
                    check = IndexPolicy::static_priority(ids);
                    pname = "static_priority";
                }
                auto m = verify_monotone(check, classes, grid);
                rep.items.push_back({"monotone", subject + ", " + pname, m.pass, m.pass ? "nondecreasing" : m.detail});
            } catch (const std::exception& e) {
                rep.items.push_back({"monotone", subject + ", " + pname, false, e.what()});
            }
        }
    }
    return rep;
}

// ------------------------------------------------------------------ bandit

std::vector<BanditRow> bandit_table(const ExperimentSpec& spec) {
    const auto& b = spec.bandit;
    if (b.cls >= spec.system.classes.size()) throw ConfigError("bandit class position out of range");
    SystemConfig cfg = config_at(spec, pick_load(spec, b.load));
    const auto& c = cfg.classes[b.cls];
    BanditEnv env(c.lambda, c.mu, b.alpha, c.cost);
    double t_max = b.t_max;
    if (!(t_max > 0)) {
        t_max = 5.0 / (c.mu - c.lambda);
        for (double bp : c.cost.breakpoints()) t_max = std::max(t_max, 2.0 * bp);
    }
    // Dense grid for the sign scans, coarse grid for the table rows.
    std::vector<double> scan;
    const std::size_t dense = 8 * (b.points - 1);
    for (std::size_t k = 0; k <= dense; ++k) scan.push_back(t_max * static_cast<double>(k) / static_cast<double>(dense));
    std::vector<BanditRow> rows(b.points);
    parallel_for(rows.size(), [&](std::size_t k) {
        double t = t_max * static_cast<double>(k) / static_cast<double>(b.points - 1);
        BanditRow r;
        r.t = t;
        r.whittle = whittle_discounted(env, t);
        r.cost_bar = cost_bar(env, t);
        r.gamma_fn = gamma_fn(env, t);
        r.hjb_sign_ok = hjb_scan(env, t, scan).pass;
        rows[k] = r;
    });
    return rows;
}

std::string bandit_csv(const std::vector<BanditRow>& rows) {
    std::ostringstream os;
    os << "t,whittle,cost_bar,gamma_fn,hjb_margin_sign_ok\n";
    for (const auto& r : rows)
        os << fmt_num(r.t) << ',' << fmt_num(r.whittle) << ',' << fmt_num(r.cost_bar) << ',' << fmt_num(r.gamma_fn)
           << ',' << (r.hjb_sign_ok ? 1 : 0) << '\n';
    return os.str();
}

// ------------------------------------------------------------------ bridge

BridgeReport bridge_check(const ExperimentSpec& spec) {
    BridgeReport rep;
    rep.load = pick_load(spec, spec.bridge.load);
    SystemConfig cfg = config_at(spec, rep.load);
    // The bridge is stated for one index policy; use the first one listed.
    const IndexPolicy& policy = spec.policies.front();
    IndexPolicy resolved = policy;
    if (policy.kind() == PolicyKind::static_priority && policy.priority_order().empty()) {
        std::vector<int> ids;
        for (const auto& c : cfg.classes) ids.push_back(c.id);
        resolved = IndexPolicy::static_priority(ids);
    }
    rep.trace = coupled_equivalence(cfg, resolved, {spec.bridge.replication, spec.bridge.max_events, 1e-9, true});
    rep.queue = simulate(cfg, resolved);
    rep.rmab = simulate_rmab(cfg, resolved);
    rep.ci_overlap = std::fabs(rep.queue.mean_cost - rep.rmab.mean_cost) <=
                     rep.queue.ci_half_width + rep.rmab.ci_half_width;
    return rep;
}

std::size_t write_trace_jsonl(const ExperimentSpec& spec, double load, std::size_t policy, std::size_t replication,
                              std::ostream& out) {
    if (policy >= spec.policies.size()) throw ConfigError("no policy at position " + std::to_string(policy));
    SystemConfig cfg = config_at(spec, pick_load(spec, load));
    IndexPolicy resolved = spec.policies[policy];
    if (resolved.kind() == PolicyKind::static_priority && resolved.priority_order().empty()) {
        std::vector<int> ids;
        for (const auto& c : cfg.classes) ids.push_back(c.id);
        resolved = IndexPolicy::static_priority(ids);
    }
    BoundPolicy bound(resolved, cfg.classes);
    auto id_of = [&](int pos) { return pos < 0 ? json(nullptr) : json(cfg.classes[static_cast<std::size_t>(pos)].id); };
    std::size_t lines = 0;
    int last_served = -2;
    simulate_replication(cfg, bound, replication, [&](const TraceEvent& ev) {
        // epochs only matter when they change who is served
        if (ev.kind == EventKind::epoch && ev.served == last_served) return;
        last_served = ev.served;
        static const char* kinds[] = {"arrival", "departure", "epoch", "horizon"};
        json line = {{"t", ev.t},
                     {"event", kinds[static_cast<int>(ev.kind)]},
                     {"class", id_of(ev.cls)},
                     {"served", id_of(ev.served)},
                     {"in_system", ev.in_system}};
        out << line.dump() << '\n';
        ++lines;
    });
    return lines;
}

std::string BridgeReport::text() const {
    std::ostringstream os;
    os << "load " << fmt_num(load) << '\n'
       << "events " << trace.events << '\n'
       << "max |A_i - T_i| " << fmt_num(trace.max_state_gap) << '\n'
       << "max service-progress gap " << fmt_num(trace.max_progress_gap) << '\n'
       << "completion-count mismatches " << trace.count_mismatches << '\n'
       << "choice mismatches " << trace.choice_mismatches << '\n'
       << "first divergence " << (trace.first_divergence.empty() ? "none" : trace.first_divergence) << '\n'
       << "queue mean cost " << fmt_num(queue.mean_cost) << " +- " << fmt_num(queue.ci_half_width) << '\n'
       << "bandit mean reward " << fmt_num(rmab.mean_cost) << " +- " << fmt_num(rmab.ci_half_width) << '\n'
       << "confidence intervals overlap " << (ci_overlap ? "yes" : "no") << '\n'
       << (pass() ? "PASS" : "FAIL") << '\n';
    return os.str();
}

std::string bridge_csv(const CoupledTrace& trace) {
    std::ostringstream os;
    os << "t,i,A_i,T_i\n";
    char buf[128];
    for (const auto& p : trace.points) {
        std::snprintf(buf, sizeof buf, "%.17g,%d,%.17g,%.17g\n", p.t, p.cls, p.A, p.T);
        os << buf;
    }
    return os.str();
}

// ------------------------------------------------------------------ sanity

CheckReport sanity_checks(const SanityOptions& opt) {
    CheckReport rep;
    {
        SystemConfig cfg;
        cfg.classes = {{1, 0.5, 1.0, CostFunction::constant(1.0)}};
        cfg.horizon = opt.horizon;
        cfg.replications = opt.reps;
        cfg.seed = opt.seed;
        auto res = simulate(cfg, IndexPolicy::fcfs());
        double rel = std::fabs(res.mean_cost - 1.0);
        rep.items.push_back({"mm1_mean_cost", "lambda 0.5, mu 1, c=1", rel <= 0.05,
                             fmt_num(res.mean_cost) + " +- " + fmt_num(res.ci_half_width) + " vs 1"});
    }
    {
        std::vector<ClassConfig> classes = {{1, 0.3, 2.0, CostFunction::constant(1.5)},
                                            {2, 0.4, 0.7, CostFunction::constant(4.0)}};
        bool exact = true;
        std::string detail;
        for (const auto& c : classes) {
            for (double t : {0.0, 0.5, 3.0, 40.0}) {
                double w = index_value(IndexPolicy::whittle(), c, t);
                double cmu = eval(c.cost, 0.0) * c.mu;
                if (w != cmu) {
                    exact = false;
                    detail = "class " + std::to_string(c.id) + " at t=" + fmt_num(t) + ": " + fmt_num(w) + " vs " +
                             fmt_num(cmu);
                }
            }
        }
        rep.items.push_back({"whittle_equals_cmu", "constant costs", exact, exact ? "exact" : detail});
    }
    {
        double worst = 0.0;
        for (double lambda : {0.1, 0.5, 0.9, 5.0})
            for (double alpha : {1e-3, 0.1, 1.0, 10.0}) {
                double mu = lambda + 1.0;
                double g = solve_gamma1(lambda, mu, alpha);
                worst = std::max(worst, std::fabs(gamma1_residual(lambda, mu, alpha, g)));
            }
        rep.items.push_back({"gamma1_residual", "16 triples", worst <= 1e-12, "max " + fmt_num(worst)});
    }
    return rep;
}

// --------------------------------------------------------------------- run

bool RunReport::ok() const {
    return std::all_of(suites.begin(), suites.end(), [](const SuiteOutcome& s) { return s.ok; });
}

RunReport run_experiment(const ExperimentSpec& spec, std::ostream& log) {
    RunReport report;
    const fs::path dir(spec.output_dir);
    for (Suite suite : spec.suites) {
        SuiteOutcome out;
        out.suite = suite;
        try {
            switch (suite) {
            case Suite::sweep: {
                spec.system.validate();
                auto sweep = load_sweep(spec.system, spec.loads, spec.policies);
                for (const auto& s : sweep)
                    if (!s.detail.empty()) log << "load " << fmt_num(s.load) << ": best ordering " << s.detail << '\n';
                const std::string csv = results_csv(result_rows(sweep));
                out.files.push_back(write_file(dir, "results.csv", csv));
                // Re-read what was written so the summary depends on the CSV alone.
                auto rows = parse_results_csv(csv);
                out.files.push_back(write_file(dir, "summary.md", summary_markdown(rows)));
                if (!spec.figure.empty())
                    out.files.push_back(write_file(dir, spec.figure + "_data.csv", figure_csv(rows)));
                out.ok = true;
                out.message = std::to_string(sweep.size()) + " load/policy cells";
                break;
            }
            case Suite::bandit_checks: {
                auto rows = bandit_table(spec);
                out.files.push_back(write_file(dir, "bandit.csv", bandit_csv(rows)));
                std::size_t bad = 0;
                for (std::size_t k = 1; k < rows.size(); ++k)
                    if (rows[k].whittle < rows[k - 1].whittle - 1e-9 * std::max(1.0, std::fabs(rows[k].whittle)))
                        ++bad;
                std::size_t sign_bad = 0;
                for (const auto& r : rows) sign_bad += r.hjb_sign_ok ? 0 : 1;
                out.ok = bad == 0 && sign_bad == 0;
                out.message = std::to_string(rows.size()) + " states, " + std::to_string(bad) +
                              " index decreases, " + std::to_string(sign_bad) + " HJB sign violations";
                break;
            }
            case Suite::bridge_checks: {
                auto rep = bridge_check(spec);
                log << rep.text();
                out.files.push_back(write_file(dir, "bridge.csv", bridge_csv(rep.trace)));
                out.files.push_back(write_file(dir, "bridge_report.txt", rep.text()));
                out.ok = rep.pass();
                out.message = rep.trace.first_divergence.empty() ? "no divergence" : rep.trace.first_divergence;
                break;
            }
            case Suite::sanity: {
                auto rep = sanity_checks({spec.system.seed, spec.system.replications, 1e6});
                log << rep.text();
                out.files.push_back(write_file(dir, "sanity.txt", rep.text()));
                out.ok = rep.pass();
                out.message = out.ok ? "all sanity checks passed" : "sanity failures";
                break;
            }
            }
        } catch (const std::exception& e) {
            out.ok = false;
            out.message = e.what();
        }
        log << suite_name(suite) << ": " << (out.ok ? "ok" : "FAILED") << " (" << out.message << ")\n";
        for (const auto& f : out.files) log << "  wrote " << f << '\n';
        report.suites.push_back(std::move(out));
    }
    return report;
}

} // namespace tvhc
