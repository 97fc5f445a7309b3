#include "cmdp/cmdp_io.hpp"
#include "cmdp/harness.hpp"
#include "cmdp/planner.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace cmdp;

namespace {

enum Exit { kOk = 0, kError = 1, kInfeasible = 2, kNumerical = 3 };

int cmd_plan(const fs::path& file, const fs::path& policy_out) {
    const Cmdp model = load_cmdp(file);
    const auto plan = solve_cmdp_lp(model);
    std::cout << "status: " << to_string(plan.status) << '\n';
    switch (plan.status) {
    case PlanStatus::Infeasible:
        std::cout << "phase1_objective: " << plan.phase1_objective << '\n';
        return kInfeasible;
    case PlanStatus::NumericalFailure:
        std::cerr << "solver: " << plan.message << '\n';
        return kNumerical;
    case PlanStatus::Optimal: break;
    }
    const auto policy = policy_from_occupancy(*plan.occupancy);
    std::printf("objective: %.12g\n", plan.objective);
    for (int i = 1; i <= model.n_constraints(); ++i)
        std::printf("constraint %d: %.12g <= %.12g\n", i, plan.occupancy->expected_cost(model.costs, i),
                    model.thresholds[size_t(i - 1)]);
    for (int s = 0; s < policy.n_states(); ++s) {
        std::printf("pi(.|%d) =", s);
        for (int a = 0; a < policy.n_actions(); ++a) std::printf(" %.6f", policy(s, a));
        std::printf("\n");
    }
    if (!policy_out.empty()) write_json_file(to_json(policy), policy_out);
    return kOk;
}

void print_report(const harness::Experiment& exp, const harness::ExperimentResult& res) {
    const auto& r = res.report;
    std::printf("%s on %s: S=%d, J*=%.6g, runs=%zu\n", r.algo.c_str(), r.env.c_str(),
                exp.world().n_states(), exp.j_star(), res.traces.size());
    if (r.mean.empty()) return;
    const auto& m = r.mean.back().metrics;
    const auto& se = r.stderr_.back().metrics;
    std::printf("  T=%lld  regret %.6g +- %.3g (pos-part %.6g)\n", m.t, m.regret_signed, se.regret_signed,
                m.regret_pospart);
    for (size_t i = 0; i < m.viol_signed.size(); ++i)
        std::printf("  constraint %zu: violation %.6g +- %.3g (pos-part %.6g), mean cost %.4f\n", i + 1,
                    m.viol_signed[i], se.viol_signed[i], m.viol_pospart[i],
                    m.cum_cost[i + 1] / double(std::max(1LL, m.t)));
    const auto [lo, hi] = std::minmax_element(r.k_t.begin(), r.k_t.end());
    std::printf("  episodes K_T in [%lld, %lld], bound %.1f\n", *lo, *hi,
                harness::episode_bound(exp.world().n_states(), envs::kNumActions, m.t));
    if (!exp.config().output.empty()) std::printf("  wrote %s\n", exp.config().output.string().c_str());
}

int run_config(harness::ExperimentConfig cfg) {
    const harness::Experiment exp(std::move(cfg));
    const auto res = harness::run_experiment(exp);
    print_report(exp, res);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Constrained MDP lab: planning, learning agents and gridworld experiments"};
    app.require_subcommand(1);

    fs::path plan_file, policy_out;
    auto* plan = app.add_subcommand("plan", "Solve the occupancy LP of a CMDP file");
    plan->add_option("cmdp-file", plan_file, "CMDP JSON document")->required()->check(CLI::ExistingFile);
    plan->add_option("--policy-out", policy_out, "Write the optimal policy as JSON");

    fs::path config_file, output;
    int runs = 0, threads = 0;
    long long horizon = -1;
    auto* run = app.add_subcommand("run", "Run an experiment config");
    run->add_option("config", config_file, "Experiment JSON")->required()->check(CLI::ExistingFile);
    run->add_option("--runs", runs, "Override the number of runs");
    run->add_option("--horizon", horizon, "Override T");
    run->add_option("--threads", threads, "Worker threads across runs");
    run->add_option("--output", output, "Override the CSV path");

    fs::path sweep_dir;
    auto* sweep = app.add_subcommand("sweep", "Run every *.json experiment config in a directory");
    sweep->add_option("config-dir", sweep_dir)->required()->check(CLI::ExistingDirectory);
    sweep->add_option("--threads", threads, "Worker threads across runs");

    std::string env_ref;
    fs::path env_out;
    std::optional<double> threshold;
    bool as_spec = false;
    auto* exp_env = app.add_subcommand("export-env", "Write a gridworld as a CMDP (or GridSpec) JSON file");
    exp_env->add_option("env", env_ref, "Shipped layout name or GridSpec file")->required();
    exp_env->add_option("-o,--output", env_out, "Destination")->required();
    exp_env->add_option("--threshold", threshold, "Override tau_1");
    exp_env->add_flag("--spec", as_spec, "Write the GridSpec instead of the compiled model");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*plan) return cmd_plan(plan_file, policy_out);
        if (*run) {
            auto cfg = harness::load_experiment_config(config_file);
            if (runs > 0) cfg.runs = runs;
            if (horizon >= 0) cfg.horizon = horizon;
            if (threads > 0) cfg.threads = threads;
            if (!output.empty()) cfg.output = output;
            return run_config(std::move(cfg));
        }
        if (*sweep) {
            std::vector<fs::path> files;
            for (const auto& entry : fs::directory_iterator(sweep_dir))
                if (entry.is_regular_file() && entry.path().extension() == ".json")
                    files.push_back(entry.path());
            std::sort(files.begin(), files.end());
            int status = kOk;
            for (const auto& f : files) {
                std::printf("== %s\n", f.string().c_str());
                try {
                    auto cfg = harness::load_experiment_config(f);
                    if (threads > 0) cfg.threads = threads;
                    run_config(std::move(cfg));
                } catch (const std::exception& e) {
                    std::fprintf(stderr, "%s: %s\n", f.string().c_str(), e.what());
                    status = kError;
                }
            }
            return status;
        }
        if (*exp_env) {
            auto spec = fs::exists(env_ref) ? envs::load_grid_spec(env_ref) : envs::default_spec(env_ref);
            if (threshold) spec.threshold = *threshold;
            if (as_spec)
                write_json_file(envs::to_json(spec), env_out);
            else
                save_cmdp(envs::compile(spec), env_out);
            return kOk;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kError;
    }
    return kOk;
}
