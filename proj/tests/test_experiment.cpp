#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tvhc/experiment.hpp"

using namespace tvhc;
using nlohmann::json;

namespace {

json small_spec() {
    auto j = preset("fig7");
    j["loads"] = {0.5, 0.7};
    j["policies"] = {"whittle", "fcfs"};
    j["horizon"] = 2000.0;
    j["replications"] = 3;
    return j;
}

std::string schema_path(const json& j) {
    try {
        parse_spec(j);
    } catch (const SchemaError& e) {
        return e.path();
    }
    return "";
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

const CheckItem* find_item(const CheckReport& r, const std::string& check, bool pass) {
    for (const auto& it : r.items)
        if (it.check == check && it.pass == pass) return &it;
    return nullptr;
}

} // namespace

TEST_CASE("schema errors name the offending node") {
    auto j = small_spec();
    j["policies"] = json::array();
    CHECK(schema_path(j) == "$.policies");
    try {
        parse_spec(j);
    } catch (const SchemaError& e) {
        CHECK(std::string(e.what()).find("policy list is empty") != std::string::npos);
    }

    j = small_spec();
    j["classes"][1]["cost"]["family"] = "cubic_spline";
    CHECK(schema_path(j) == "$.classes[1].cost.family");

    j = small_spec();
    j["classes"][0]["mu"] = "fast";
    CHECK(schema_path(j) == "$.classes[0].mu");

    j = small_spec();
    j["colour"] = "blue";
    CHECK(schema_path(j) == "$.colour");

    j = small_spec();
    j["replications"] = 1;
    CHECK(schema_path(j) == "$.replications");

    j = small_spec();
    j["loads"] = json::array();
    CHECK(schema_path(j) == "$.loads");

    j = small_spec();
    j["policies"] = {{{"name", "static_priority"}, {"order", {1, 7}}}};
    CHECK(schema_path(j) == "$.policies[0].order");

    CHECK(schema_path(small_spec()).empty());
}

TEST_CASE("cost JSON round trip") {
    for (auto c : {CostFunction::constant(2), CostFunction::polynomial({1, 0, 3}),
                   CostFunction::smoothed_step(4, 1, 0.3), CostFunction::piecewise_linear({{0, 1}, {2, 3}}),
                   CostFunction::exponential(1, 0.2),
                   CostFunction::sum({CostFunction::constant(1), CostFunction::polynomial({0, 1})})}) {
        auto back = cost_from_json(cost_to_json(c));
        for (double t : {0.0, 0.5, 1.7, 4.0}) CHECK(eval(back, t) == eval(c, t));
    }
}

TEST_CASE("validate reports instability and fast cost growth") {
    auto j = small_spec();
    j["loads"] = {0.5, 1.0};
    auto rep = validate_spec(j);
    CHECK_FALSE(rep.pass());
    auto bad = find_item(rep, "stability", false);
    REQUIRE(bad != nullptr);
    CHECK(bad->subject == "load 1");
    CHECK(bad->detail.find("heaviest: class") != std::string::npos);
    CHECK(find_item(rep, "stability", true) != nullptr);

    j = small_spec();
    j["classes"][1]["cost"] = {{"family", "exponential"}, {"scale", 1.0}, {"rate", 5.0}};
    rep = validate_spec(j);
    CHECK_FALSE(rep.pass());
    CHECK(find_item(rep, "growth_check", false) != nullptr);

    rep = validate_spec(small_spec());
    CHECK(rep.pass());
    CHECK(rep.text().find("FAIL") == std::string::npos);

    j = small_spec();
    j["policies"] = json::array();
    rep = validate_spec(j);
    CHECK_FALSE(rep.pass());
    CHECK(find_item(rep, "schema", false) != nullptr);
}

TEST_CASE("results CSV round trip and summary derived from it") {
    auto spec = parse_spec(small_spec());
    auto sweep = load_sweep(spec.system, spec.loads, spec.policies);
    auto rows = result_rows(sweep);
    // per replication rows plus one aggregate per (load, policy)
    CHECK(rows.size() == 2 * 2 * (3 + 1));
    auto csv = results_csv(rows);
    auto parsed = parse_results_csv(csv);
    REQUIRE(parsed.size() == rows.size());
    CHECK(results_csv(parsed) == csv);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(parsed[i].policy == rows[i].policy);
        CHECK(parsed[i].replication == rows[i].replication);
        CHECK(parsed[i].ci_half.has_value() == (rows[i].replication == "all"));
    }
    CHECK(summary_markdown(parsed) == summary_markdown(parse_results_csv(results_csv(parsed))));
    auto md = summary_markdown(parsed);
    CHECK(md.find("## load 0.5") != std::string::npos);
    CHECK(md.find("best") != std::string::npos);
    auto fig = figure_csv(parsed);
    CHECK(fig.rfind("load,whittle,whittle_ci,fcfs,fcfs_ci\n", 0) == 0);
    CHECK_THROWS_AS(parse_results_csv("nope\n"), ConfigError);
}

TEST_CASE("summary flags follow interval overlap") {
    std::vector<ResultRow> rows = {{0.5, "a", "all", 1.0, 0.1, 0, 0, 0},
                                   {0.5, "b", "all", 1.15, 0.1, 0, 0, 0},
                                   {0.5, "c", "all", 2.0, 0.1, 0, 0, 0}};
    auto md = summary_markdown(rows);
    CHECK(md.find("| 1 | a | 1 | 0.1 | best |") != std::string::npos);
    CHECK(md.find("| 2 | b | 1.15 | 0.1 | tied |") != std::string::npos);
    CHECK(md.find("| 3 | c | 2 | 0.1 | worse |") != std::string::npos);
}

TEST_CASE("reruns with the same seed write identical files") {
    auto base = std::filesystem::temp_directory_path() / "tvhc_experiment_test";
    std::filesystem::remove_all(base);
    std::string first;
    for (int k = 0; k < 2; ++k) {
        auto spec = parse_spec(small_spec());
        spec.output_dir = (base / ("run" + std::to_string(k))).string();
        std::ostringstream log;
        auto rep = run_experiment(spec, log);
        REQUIRE(rep.ok());
        auto text = slurp(base / ("run" + std::to_string(k)) / "results.csv") +
                    slurp(base / ("run" + std::to_string(k)) / "summary.md") +
                    slurp(base / ("run" + std::to_string(k)) / "fig7_data.csv");
        CHECK(text.size() > 100);
        if (k == 0) first = text;
        else CHECK(text == first);
    }
    std::filesystem::remove_all(base);
}

TEST_CASE("built-in presets match the shipped preset files") {
    for (const auto& name : preset_names()) {
        std::ifstream in(std::filesystem::path(TVHC_PRESET_DIR) / (name + ".json"));
        REQUIRE(in.good());
        CHECK(json::parse(in) == preset(name));
        CHECK_NOTHROW(parse_spec(preset(name)));
        CHECK(validate_spec(preset(name)).pass());
    }
    CHECK_THROWS_AS(preset("fig99"), ConfigError);
}

TEST_CASE("overrides replace only what is given") {
    auto spec = parse_spec(small_spec());
    auto before = spec;
    Overrides ov;
    ov.seed = 42;
    ov.horizon = 777;
    apply_overrides(spec, ov);
    CHECK(spec.system.seed == 42);
    CHECK(spec.system.horizon == 777);
    CHECK(spec.system.replications == before.system.replications);
    CHECK(spec.output_dir == before.output_dir);
    ov = {};
    ov.reps = 9;
    ov.out = "elsewhere";
    apply_overrides(spec, ov);
    CHECK(spec.system.replications == 9);
    CHECK(spec.output_dir == "elsewhere");
}

TEST_CASE("number formatting is fixed") {
    CHECK(fmt_num(0.5) == "0.5");
    CHECK(fmt_num(1.0 / 3) == "0.3333333333");
    CHECK(fmt_num(12345678901.0) == "1.23456789e+10");
}

TEST_CASE("trace lines are JSON objects in time order") {
    auto spec = parse_spec(small_spec());
    spec.system.horizon = 200;
    std::ostringstream os;
    auto n = write_trace_jsonl(spec, 0.5, 0, 0, os);
    CHECK(n > 10);
    std::istringstream in(os.str());
    std::string line;
    double last = 0;
    std::size_t count = 0;
    while (std::getline(in, line)) {
        auto j = json::parse(line);
        CHECK(j.at("t").get<double>() >= last);
        last = j.at("t").get<double>();
        CHECK(j.at("in_system").size() == 2);
        ++count;
    }
    CHECK(count == n);
    CHECK_THROWS_AS(write_trace_jsonl(spec, 0.5, 9, 0, os), ConfigError);
}
