#include "cmdp/harness.hpp"

#include "cmdp/cmdp_io.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

namespace cmdp::harness {

// Metrics --------------------------------------------------------------------

MetricAccumulator::MetricAccumulator(double j_star, std::vector<double> thresholds)
    : j_star_(j_star), thresholds_(std::move(thresholds)) {
    row_.cum_cost.assign(thresholds_.size() + 1, 0.0);
    row_.viol_signed.assign(thresholds_.size(), 0.0);
    row_.viol_pospart.assign(thresholds_.size(), 0.0);
}

void MetricAccumulator::add(std::span<const double> costs) {
    ++row_.t;
    const double t = double(row_.t);
    row_.cum_cost[0] += costs[0];
    row_.regret_signed = row_.cum_cost[0] - t * j_star_;
    row_.regret_pospart += std::max(0.0, costs[0] - j_star_);
    for (size_t i = 0; i < thresholds_.size(); ++i) {
        row_.cum_cost[i + 1] += costs[i + 1];
        row_.viol_signed[i] = row_.cum_cost[i + 1] - t * thresholds_[i];
        row_.viol_pospart[i] += std::max(0.0, costs[i + 1] - thresholds_[i]);
    }
}

std::vector<MetricRow> compute_metrics(const std::vector<std::vector<double>>& costs, double j_star,
                                       const std::vector<double>& thresholds) {
    MetricAccumulator acc(j_star, thresholds);
    std::vector<MetricRow> rows;
    rows.reserve(costs.size());
    for (const auto& c : costs) {
        acc.add(c);
        rows.push_back(acc.row());
    }
    return rows;
}

namespace {

bool same_value(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

bool same_values(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i)
        if (!same_value(a[i], b[i])) return false;
    return true;
}

bool same_point(const TracePoint& a, const TracePoint& b) {
    const auto& x = a.metrics;
    const auto& y = b.metrics;
    return x.t == y.t && same_values(x.cum_cost, y.cum_cost) &&
           same_value(x.regret_signed, y.regret_signed) &&
           same_value(x.regret_pospart, y.regret_pospart) && same_values(x.viol_signed, y.viol_signed) &&
           same_values(x.viol_pospart, y.viol_pospart) && a.episode_k == b.episode_k &&
           a.fallback == b.fallback;
}

bool same_episode(const agents::EpisodeRecord& a, const agents::EpisodeRecord& b) {
    return a.index == b.index && a.start == b.start && a.length == b.length &&
           a.fallback == b.fallback && a.ended_by_length == b.ended_by_length &&
           a.ended_by_doubling == b.ended_by_doubling;
}

}  // namespace

bool RunTrace::operator==(const RunTrace& o) const {
    if (run_id != o.run_id || algo != o.algo || env != o.env || !same_value(j_star, o.j_star) ||
        thresholds != o.thresholds || horizon != o.horizon || k_t != o.k_t ||
        points.size() != o.points.size() || episodes.size() != o.episodes.size())
        return false;
    for (size_t i = 0; i < points.size(); ++i)
        if (!same_point(points[i], o.points[i])) return false;
    for (size_t i = 0; i < episodes.size(); ++i)
        if (!same_episode(episodes[i], o.episodes[i])) return false;
    return true;
}

// Aggregation ----------------------------------------------------------------

namespace {

// Applies f to every numeric field of the points, in a fixed order.
template <class F>
void for_each_field(TracePoint& p, F&& f) {
    for (double& v : p.metrics.cum_cost) f(v);
    f(p.metrics.regret_signed);
    f(p.metrics.regret_pospart);
    for (double& v : p.metrics.viol_signed) f(v);
    for (double& v : p.metrics.viol_pospart) f(v);
    f(p.episode_k);
    f(p.fallback);
}

std::vector<double> flatten(const TracePoint& p) {
    std::vector<double> out;
    TracePoint copy = p;
    for_each_field(copy, [&](double& v) { out.push_back(v); });
    return out;
}

void assign(TracePoint& p, const std::vector<double>& values) {
    size_t k = 0;
    for_each_field(p, [&](double& v) { v = values[k++]; });
}

}  // namespace

AggregateReport aggregate(const std::vector<RunTrace>& traces) {
    AggregateReport report;
    if (traces.empty()) return report;
    const auto& first = traces.front();
    report.algo = first.algo;
    report.env = first.env;
    for (const auto& tr : traces) {
        if (tr.points.size() != first.points.size())
            throw std::invalid_argument("aggregate: traces have different cadence points");
        report.k_t.push_back(tr.k_t);
        report.wall_seconds.push_back(tr.wall_seconds);
    }
    const double n = double(traces.size());
    for (size_t j = 0; j < first.points.size(); ++j) {
        const auto base = flatten(first.points[j]);
        std::vector<double> sum(base.size(), 0.0);
        for (const auto& tr : traces) {
            if (tr.points[j].metrics.t != first.points[j].metrics.t)
                throw std::invalid_argument("aggregate: traces have different cadence points");
            const auto v = flatten(tr.points[j]);
            for (size_t f = 0; f < v.size(); ++f) sum[f] += v[f];
        }
        std::vector<double> mean(base.size()), se(base.size(), 0.0);
        for (size_t f = 0; f < base.size(); ++f) mean[f] = sum[f] / n;
        if (traces.size() > 1) {
            std::vector<double> ss(base.size(), 0.0);
            for (const auto& tr : traces) {
                const auto v = flatten(tr.points[j]);
                for (size_t f = 0; f < v.size(); ++f) ss[f] += (v[f] - mean[f]) * (v[f] - mean[f]);
            }
            for (size_t f = 0; f < base.size(); ++f) se[f] = std::sqrt(ss[f] / (n - 1.0)) / std::sqrt(n);
        }
        TracePoint m = first.points[j], s = first.points[j];
        assign(m, mean);
        assign(s, se);
        report.mean.push_back(std::move(m));
        report.stderr_.push_back(std::move(s));
    }
    return report;
}

// Experiment -----------------------------------------------------------------

namespace {

envs::GridSpec resolve_spec(const ExperimentConfig& c) {
    envs::GridSpec spec = c.env_file.empty() ? envs::default_spec(c.env_name) : envs::load_grid_spec(c.env_file);
    if (c.threshold) spec.threshold = *c.threshold;
    if (c.slip) spec.slip = *c.slip;
    return spec;
}

}  // namespace

Experiment::Experiment(ExperimentConfig config) : config_(std::move(config)) {
    if (const auto problems = check(config_); !problems.empty()) {
        std::string msg = "invalid experiment config:";
        for (const auto& p : problems) msg += "\n  " + p;
        throw FormatError(msg);
    }
    world_ = std::make_shared<const envs::GridWorld>(resolve_spec(config_));
    try {
        oracle_ = envs::oracle_solution(world_->model());
    } catch (const envs::InfeasibleModelError&) {
        oracle_.reset();
    }
}

double Experiment::j_star() const {
    return oracle_ ? oracle_->loss : std::numeric_limits<double>::quiet_NaN();
}

std::unique_ptr<agents::Agent> make_agent(const AgentSettings& settings, const Experiment& exp) {
    const Cmdp& model = exp.world().model();
    const int S = model.n_states();
    const int A = model.n_actions();
    if (settings.name == "psconrl")
        return std::make_unique<agents::PsConRl>(model.costs, model.thresholds, settings.prior);
    if (settings.name == "uniform")
        return std::make_unique<agents::FixedPolicyAgent>("uniform", StationaryPolicy::uniform(S, A));
    if (settings.name == "oracle") {
        if (!exp.oracle()) throw std::invalid_argument("oracle agent: environment is infeasible");
        return std::make_unique<agents::FixedPolicyAgent>("oracle", exp.oracle()->policy);
    }
    agents::BaselineConfig bc;
    bc.n_states = S;
    bc.n_actions = A;
    bc.thresholds = model.thresholds;
    bc.horizon = exp.config().horizon;
    bc.delta = settings.delta;
    bc.bonus_scale = settings.bonus_scale;
    bc.h = settings.h;
    bc.alpha = settings.alpha;
    if (settings.name == "conrl") return std::make_unique<agents::ConRl>(bc);
    if (settings.name == "cucrl") return std::make_unique<agents::CUcrl>(bc);
    if (settings.name == "ucrlcmdp") return std::make_unique<agents::UcrlCmdp>(bc);
    throw std::invalid_argument("unknown agent '" + settings.name + "'");
}

RunTrace run_one(const Experiment& exp, int run_index, const StepCallback& on_step) {
    const auto wall_start = std::chrono::steady_clock::now();
    const auto& cfg = exp.config();
    const auto& world = exp.world();
    const auto& spec = world.spec();
    const Cmdp& model = world.model();

    RunTrace trace;
    trace.run_id = run_index;
    trace.env = spec.name;
    trace.j_star = exp.j_star();
    trace.thresholds = model.thresholds;
    trace.horizon = cfg.horizon;

    Rng rng(cfg.seed + std::uint64_t(run_index));
    auto agent = make_agent(cfg.agent, exp);
    trace.algo = agent->name();

    MetricAccumulator acc(trace.j_star, model.thresholds);
    const long long cadence = std::max(1LL, cfg.cadence);
    if (cfg.horizon > 0) {
        envs::EnvState env_state = world.initial_state();
        int s = world.index_of(env_state);
        agent->start(s, rng);
        for (long long t = 1; t <= cfg.horizon; ++t) {
            const int a = agent->act(s, rng);
            const auto step = envs::env_step(spec, env_state, a, rng);
            const int next = world.index_of(step.next);
            const double episode_k = double(agent->episode_index());
            const double fallback = agent->fallback_active() ? 1.0 : 0.0;
            agent->observe({s, a, step.costs, next}, rng);
            acc.add(step.costs);
            if (on_step) on_step({t, s, a, step.costs, next}, *agent);
            if (t % cadence == 0 || t == cfg.horizon)
                trace.points.push_back({acc.row(), episode_k, fallback});
            env_state = step.next;
            s = next;
        }
    }
    trace.episodes = agent->episodes();
    for (const auto& e : trace.episodes)
        if (e.start <= cfg.horizon) ++trace.k_t;

    if (cfg.save_posterior && !cfg.output.empty())
        if (const auto* ps = dynamic_cast<const agents::PsConRl*>(agent.get())) {
            auto path = cfg.output;
            path.replace_filename(cfg.output.stem().string() + "_run" + std::to_string(run_index) +
                                  "_posterior.json");
            write_json_file(ps->posterior().snapshot(), path);
        }

    trace.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    return trace;
}

ExperimentResult run_experiment(const Experiment& exp) {
    const auto& cfg = exp.config();
    ExperimentResult result;
    result.traces.resize(size_t(cfg.runs));

    std::atomic<int> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;
    auto worker = [&] {
        for (int i = next++; i < cfg.runs; i = next++) {
            try {
                result.traces[size_t(i)] = run_one(exp, i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    const int n_threads = std::clamp(cfg.threads, 1, cfg.runs);
    std::vector<std::thread> pool;
    for (int i = 1; i < n_threads; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);

    result.report = aggregate(result.traces);
    if (!cfg.output.empty()) {
        export_csv(cfg.output, result.traces, &result.report);
        auto summary = cfg.output;
        summary.replace_extension(".summary.json");
        write_json_file(summary_json(cfg, result.report, exp.j_star()), summary);
    }
    return result;
}

double episode_bound(int n_states, int n_actions, long long horizon) {
    const double T = double(horizon);
    return std::sqrt(2.0 * n_states * n_actions * T * std::log(T)) + 1.0;
}

// CSV ------------------------------------------------------------------------

std::vector<std::string> csv_header(int n_constraints) {
    std::vector<std::string> h = {"kind", "run_id", "algo", "env", "t", "cum_c0"};
    for (int i = 1; i <= n_constraints; ++i) h.push_back("cum_c" + std::to_string(i));
    h.push_back("regret_signed");
    h.push_back("regret_pospart");
    for (int i = 1; i <= n_constraints; ++i) {
        h.push_back("viol" + std::to_string(i) + "_signed");
        h.push_back("viol" + std::to_string(i) + "_pospart");
    }
    h.push_back("episode_k");
    h.push_back("fallback");
    return h;
}

namespace {

std::string number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_row(std::ostream& out, const std::string& kind, const std::string& id, const std::string& algo,
               const std::string& env, const TracePoint& p) {
    const auto& m = p.metrics;
    out << kind << ',' << id << ',' << algo << ',' << env << ',' << m.t;
    for (double v : m.cum_cost) out << ',' << number(v);
    out << ',' << number(m.regret_signed) << ',' << number(m.regret_pospart);
    for (size_t i = 0; i < m.viol_signed.size(); ++i)
        out << ',' << number(m.viol_signed[i]) << ',' << number(m.viol_pospart[i]);
    out << ',' << number(p.episode_k) << ',' << number(p.fallback) << '\n';
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_number(const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') throw FormatError("csv: bad number '" + s + "'");
    return v;
}

}  // namespace

void export_csv(const std::filesystem::path& path, const std::vector<RunTrace>& traces,
                const AggregateReport* report) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    const int m = traces.empty() ? (report && !report->mean.empty()
                                        ? int(report->mean.front().metrics.viol_signed.size())
                                        : 0)
                                 : int(traces.front().thresholds.size());
    const auto header = csv_header(m);
    for (size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    for (const auto& tr : traces)
        for (const auto& p : tr.points) write_row(out, "run", std::to_string(tr.run_id), tr.algo, tr.env, p);
    if (report) {
        for (const auto& p : report->mean) write_row(out, "agg", "mean", report->algo, report->env, p);
        for (const auto& p : report->stderr_) write_row(out, "agg", "stderr", report->algo, report->env, p);
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<CsvRow> import_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw FormatError("csv: empty file " + path.string());
    const auto header = split(line);
    // kind, run_id, algo, env, t, m+1 costs, 2 regret, 2m violation, k, fallback
    const int m = (int(header.size()) - 10) / 3;
    if (m < 0 || header != csv_header(m)) throw FormatError("csv: unexpected header in " + path.string());

    std::vector<CsvRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split(line);
        if (cells.size() != header.size()) throw FormatError("csv: wrong column count: " + line);
        CsvRow row;
        row.kind = cells[0];
        row.run_id = cells[1];
        row.algo = cells[2];
        row.env = cells[3];
        auto& mt = row.point.metrics;
        mt.t = std::stoll(cells[4]);
        size_t c = 5;
        for (int i = 0; i <= m; ++i) mt.cum_cost.push_back(parse_number(cells[c++]));
        mt.regret_signed = parse_number(cells[c++]);
        mt.regret_pospart = parse_number(cells[c++]);
        for (int i = 0; i < m; ++i) {
            mt.viol_signed.push_back(parse_number(cells[c++]));
            mt.viol_pospart.push_back(parse_number(cells[c++]));
        }
        row.point.episode_k = parse_number(cells[c++]);
        row.point.fallback = parse_number(cells[c++]);
        rows.push_back(std::move(row));
    }
    return rows;
}

nlohmann::json summary_json(const ExperimentConfig& config, const AggregateReport& report, double j_star) {
    nlohmann::json doc;
    doc["config"] = to_json(config);
    doc["algo"] = report.algo;
    doc["env"] = report.env;
    if (std::isnan(j_star))
        doc["j_star"] = nullptr;
    else
        doc["j_star"] = j_star;
    doc["k_t"] = report.k_t;
    doc["wall_seconds"] = report.wall_seconds;
    if (!report.mean.empty()) {
        const auto& last = report.mean.back().metrics;
        doc["final_mean"] = {{"t", last.t},
                             {"regret_signed", last.regret_signed},
                             {"regret_pospart", last.regret_pospart},
                             {"viol_signed", last.viol_signed},
                             {"viol_pospart", last.viol_pospart}};
    }
    return doc;
}

}  // namespace cmdp::harness
