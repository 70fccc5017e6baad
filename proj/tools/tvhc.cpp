#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "tvhc/experiment.hpp"

namespace {

// Exit codes: 0 ok, 1 a check or suite failed, 2 bad input.
constexpr int kFailed = 1;
constexpr int kBadInput = 2;

struct Common {
    std::string spec;
    std::uint64_t seed = 0;
    std::size_t reps = 0;
    double horizon = 0.0;
    std::string out;
};

void add_common(CLI::App* sub, Common& c, bool needs_spec) {
    if (needs_spec) sub->add_option("spec", c.spec, "JSON experiment file or preset name")->required();
    sub->add_option("--seed", c.seed, "base random seed");
    sub->add_option("--reps", c.reps, "replications per cell");
    sub->add_option("--horizon", c.horizon, "simulated time per replication");
    sub->add_option("--out", c.out, "output directory");
}

tvhc::Overrides overrides(CLI::App* sub, const Common& c) {
    tvhc::Overrides ov;
    if (sub->count("--seed")) ov.seed = c.seed;
    if (sub->count("--reps")) ov.reps = c.reps;
    if (sub->count("--horizon")) ov.horizon = c.horizon;
    if (sub->count("--out")) ov.out = c.out;
    return ov;
}

tvhc::ExperimentSpec load(CLI::App* sub, const Common& c) {
    auto spec = tvhc::parse_spec(tvhc::load_spec_json(c.spec));
    tvhc::apply_overrides(spec, overrides(sub, c));
    // refuse before any suite runs; validate explains the details
    for (double rho : spec.loads)
        if (!(rho < 1.0))
            throw tvhc::InstabilityError("load " + tvhc::fmt_num(rho) + " is not below 1; run 'tvhc validate' for details");
    return spec;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Scheduling with time-varying holding costs: experiments and checks.\n"
                 "Worker threads: TVHC_WORKERS (default: hardware concurrency)."};
    app.require_subcommand(1);

    Common run_c, val_c, bandit_c, bridge_c, sanity_c;
    auto* run = app.add_subcommand("run", "run the suites listed in a spec");
    add_common(run, run_c, true);
    auto* val = app.add_subcommand("validate", "dry-run schema, stability, growth and monotonicity checks");
    add_common(val, val_c, true);
    auto* bandit = app.add_subcommand("bandit", "tabulate the single-arm index and HJB sign checks");
    add_common(bandit, bandit_c, true);
    auto* bridge = app.add_subcommand("bridge", "couple the queue with its bandit and report divergences");
    add_common(bridge, bridge_c, true);
    auto* sanity = app.add_subcommand("sanity", "M/M/1 and c-mu sanity checks");
    add_common(sanity, sanity_c, false);
    auto* trace = app.add_subcommand("trace", "write a per-event JSON-lines trace of one replication");
    Common trace_c;
    add_common(trace, trace_c, true);
    double trace_load = 0.0;
    std::size_t trace_policy = 0, trace_rep = 0;
    trace->add_option("--load", trace_load, "system load (default: first sweep load)");
    trace->add_option("--policy", trace_policy, "position in the policy list");
    trace->add_option("--replication", trace_rep, "replication number");
    std::string preset_name;
    auto* pre = app.add_subcommand("preset", "print a built-in preset as JSON");
    pre->add_option("name", preset_name, "preset name")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            auto spec = load(run, run_c);
            auto rep = tvhc::run_experiment(spec, std::cout);
            return rep.ok() ? 0 : kFailed;
        }
        if (*val) {
            tvhc::CheckReport rep;
            try {
                rep = tvhc::validate_spec(tvhc::load_spec_json(val_c.spec));
            } catch (const tvhc::ConfigError& e) {
                rep.items.push_back({"schema", "", false, e.what()});
            }
            std::cout << rep.text();
            return rep.pass() ? 0 : kFailed;
        }
        if (*bandit) {
            auto spec = load(bandit, bandit_c);
            spec.suites = {tvhc::Suite::bandit_checks};
            return tvhc::run_experiment(spec, std::cout).ok() ? 0 : kFailed;
        }
        if (*bridge) {
            auto spec = load(bridge, bridge_c);
            spec.suites = {tvhc::Suite::bridge_checks};
            return tvhc::run_experiment(spec, std::cout).ok() ? 0 : kFailed;
        }
        if (*sanity) {
            tvhc::SanityOptions opt;
            if (sanity->count("--seed")) opt.seed = sanity_c.seed;
            if (sanity->count("--reps")) opt.reps = sanity_c.reps;
            if (sanity->count("--horizon")) opt.horizon = sanity_c.horizon;
            auto rep = tvhc::sanity_checks(opt);
            std::cout << rep.text();
            return rep.pass() ? 0 : kFailed;
        }
        if (*trace) {
            auto spec = load(trace, trace_c);
            if (trace->count("--out")) {
                std::ofstream f(spec.output_dir);
                if (!f) throw tvhc::ConfigError("cannot write " + spec.output_dir);
                tvhc::write_trace_jsonl(spec, trace_load, trace_policy, trace_rep, f);
            } else {
                tvhc::write_trace_jsonl(spec, trace_load, trace_policy, trace_rep, std::cout);
            }
            return 0;
        }
        if (*pre) {
            std::cout << tvhc::preset(preset_name).dump(2) << '\n';
            return 0;
        }
    } catch (const tvhc::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kBadInput;
    } catch (const tvhc::InstabilityError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kBadInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailed;
    }
    return 0;
}
