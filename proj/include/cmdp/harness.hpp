#pragma once

#include "cmdp/agents.hpp"
#include "cmdp/envs.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cmdp::harness {

struct AgentSettings {
    std::string name = "psconrl";  // psconrl | conrl | cucrl | ucrlcmdp | oracle | uniform
    double prior = 0.01;           // Dirichlet concentration per entry
    double delta = 0.0;            // 0 selects 1/horizon
    long long h = 100;
    double alpha = 0.5;
    double bonus_scale = 1.0;
};

struct ExperimentConfig {
    std::string env_name;                 // shipped layout, used when env_file is empty
    std::filesystem::path env_file;       // GridSpec JSON
    std::optional<double> threshold;      // overrides tau_1 of the layout
    std::optional<double> slip;
    AgentSettings agent;
    long long horizon = 10000;
    int runs = 1;
    std::uint64_t seed = 0;
    long long cadence = 100;              // 1 records every step
    std::filesystem::path output;         // CSV; empty disables writing
    bool save_posterior = false;          // PSConRL only, next to the CSV
    int threads = 1;
};

/// Problems with the config; empty when it can be run.
std::vector<std::string> check(const ExperimentConfig& config);

ExperimentConfig experiment_config_from_json(const nlohmann::json& doc,
                                             const std::filesystem::path& base_dir = {});
/// Relative env_file / output paths are resolved against the config's directory.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

/// Metric columns after t steps. Signed columns are cumulative cost minus
/// t times the reference; positive-part columns add (c - reference)_+ per step.
struct MetricRow {
    long long t = 0;
    std::vector<double> cum_cost;      // c_0..c_m
    double regret_signed = 0.0;
    double regret_pospart = 0.0;
    std::vector<double> viol_signed;   // one per constraint
    std::vector<double> viol_pospart;
};

class MetricAccumulator {
public:
    MetricAccumulator(double j_star, std::vector<double> thresholds);
    void add(std::span<const double> costs);
    const MetricRow& row() const { return row_; }

private:
    double j_star_;
    std::vector<double> thresholds_;
    MetricRow row_;
};

/// One row per step of `costs` (each entry c_0..c_m).
std::vector<MetricRow> compute_metrics(const std::vector<std::vector<double>>& costs, double j_star,
                                       const std::vector<double>& thresholds);

struct TracePoint {
    MetricRow metrics;
    double episode_k = 0.0;  // episode the step at t belonged to
    double fallback = 0.0;   // 1 when that episode ran the uniform fallback
};

struct RunTrace {
    int run_id = 0;
    std::string algo;
    std::string env;
    double j_star = 0.0;  // NaN when the environment is infeasible
    std::vector<double> thresholds;
    long long horizon = 0;
    std::vector<TracePoint> points;
    std::vector<agents::EpisodeRecord> episodes;
    long long k_t = 0;  // episodes started at or before T
    double wall_seconds = 0.0;

    bool operator==(const RunTrace& other) const;  // ignores wall_seconds
};

struct AggregateReport {
    std::string algo;
    std::string env;
    std::vector<TracePoint> mean;
    std::vector<TracePoint> stderr_;  // sample sd / sqrt(n); 0 for one run
    std::vector<long long> k_t;
    std::vector<double> wall_seconds;
};

AggregateReport aggregate(const std::vector<RunTrace>& traces);

/// Environment, compiled model and oracle shared by every run of a config.
class Experiment {
public:
    explicit Experiment(ExperimentConfig config);

    const ExperimentConfig& config() const { return config_; }
    const envs::GridWorld& world() const { return *world_; }
    /// Empty when the compiled model is infeasible.
    const std::optional<envs::OracleSolution>& oracle() const { return oracle_; }
    double j_star() const;

private:
    ExperimentConfig config_;
    std::shared_ptr<const envs::GridWorld> world_;
    std::optional<envs::OracleSolution> oracle_;
};

std::unique_ptr<agents::Agent> make_agent(const AgentSettings& settings, const Experiment& exp);

struct StepEvent {
    long long t;
    int state;
    int action;
    std::span<const double> costs;
    int next;
};

using StepCallback = std::function<void(const StepEvent&, const agents::Agent&)>;

/// T steps of the configured agent with seed = base seed + run_index.
/// Planner failures propagate as agents::PlannerFailure.
RunTrace run_one(const Experiment& exp, int run_index, const StepCallback& on_step = {});

struct ExperimentResult {
    std::vector<RunTrace> traces;
    AggregateReport report;
};

/// All runs (threaded across runs), aggregation and, when configured, the
/// CSV, summary and posterior files.
ExperimentResult run_experiment(const Experiment& exp);

/// K_T <= sqrt(2 S A T log T) + 1.
double episode_bound(int n_states, int n_actions, long long horizon);

// CSV ----------------------------------------------------------------------

struct CsvRow {
    std::string kind;    // run | agg
    std::string run_id;  // run index, or mean / stderr
    std::string algo;
    std::string env;
    TracePoint point;
};

std::vector<std::string> csv_header(int n_constraints);
/// Numbers are written with 17 significant digits so a re-import is exact.
void export_csv(const std::filesystem::path& path, const std::vector<RunTrace>& traces,
                const AggregateReport* report = nullptr);
std::vector<CsvRow> import_csv(const std::filesystem::path& path);

nlohmann::json summary_json(const ExperimentConfig& config, const AggregateReport& report,
                            double j_star);

}  // namespace cmdp::harness
