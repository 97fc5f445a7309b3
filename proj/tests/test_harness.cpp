#include "cmdp/cmdp_io.hpp"
#include "cmdp/harness.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

using namespace cmdp;
using namespace cmdp::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("cmdp_harness_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

ExperimentConfig small_config(const std::string& agent, long long horizon, int runs = 1) {
    ExperimentConfig c;
    c.env_name = "marsrover4x4";
    c.agent.name = agent;
    c.agent.bonus_scale = 0.1;
    c.horizon = horizon;
    c.runs = runs;
    c.seed = 17;
    c.cadence = 10;
    return c;
}

bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

RunTrace synthetic_trace(int id, double value) {
    RunTrace tr;
    tr.run_id = id;
    tr.algo = "x";
    tr.env = "y";
    tr.thresholds = {0.2};
    for (long long t : {10, 20}) {
        TracePoint p;
        p.metrics.t = t;
        p.metrics.cum_cost = {value * double(t), 1.0};
        p.metrics.regret_signed = value;
        p.metrics.regret_pospart = 2.0 * value;
        p.metrics.viol_signed = {-value};
        p.metrics.viol_pospart = {0.0};
        p.episode_k = value;
        p.fallback = 0.0;
        tr.points.push_back(p);
    }
    return tr;
}

}  // namespace

TEST(Metrics, ConstantOptimalCostGivesZeroRegret) {
    const std::vector<std::vector<double>> costs(50, std::vector<double>{0.25, 0.1});
    const auto rows = compute_metrics(costs, 0.25, {0.5});
    ASSERT_EQ(rows.size(), 50u);
    for (const auto& r : rows) {
        EXPECT_DOUBLE_EQ(r.regret_signed, 0.0);
        EXPECT_DOUBLE_EQ(r.regret_pospart, 0.0);
        EXPECT_LE(r.viol_signed[0], 0.0);
        EXPECT_DOUBLE_EQ(r.viol_pospart[0], 0.0);
    }
}

TEST(Metrics, TenStepHandTrace) {
    const std::vector<double> c0{1, 0, 1, 1, 0, 0, 1, 0, 1, 1};
    const std::vector<double> c1{0, 1, 0, 0, 1, 0, 0, 0, 1, 0};
    std::vector<std::vector<double>> costs;
    for (size_t t = 0; t < c0.size(); ++t) costs.push_back({c0[t], c1[t]});
    const auto rows = compute_metrics(costs, 0.5, {0.2});
    // t = 4: three c0 hits, one c1 hit.
    EXPECT_EQ(rows[3].t, 4);
    EXPECT_NEAR(rows[3].regret_signed, 1.0, 1e-12);
    EXPECT_NEAR(rows[3].regret_pospart, 1.5, 1e-12);
    EXPECT_NEAR(rows[3].viol_signed[0], 0.2, 1e-12);
    EXPECT_NEAR(rows[3].viol_pospart[0], 0.8, 1e-12);
    // t = 10: six c0 hits, three c1 hits.
    EXPECT_NEAR(rows[9].cum_cost[0], 6.0, 1e-12);
    EXPECT_NEAR(rows[9].cum_cost[1], 3.0, 1e-12);
    EXPECT_NEAR(rows[9].regret_signed, 1.0, 1e-12);
    EXPECT_NEAR(rows[9].regret_pospart, 3.0, 1e-12);
    EXPECT_NEAR(rows[9].viol_signed[0], 1.0, 1e-12);
    EXPECT_NEAR(rows[9].viol_pospart[0], 2.4, 1e-12);
}

TEST(Metrics, PositivePartDominatesSigned) {
    Rng rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::vector<double>> costs;
    for (int t = 0; t < 500; ++t) costs.push_back({u(rng), u(rng), u(rng)});
    const auto rows = compute_metrics(costs, 0.4, {0.5, 0.3});
    double prev = 0.0;
    for (const auto& r : rows) {
        EXPECT_GE(r.regret_pospart, r.regret_signed - 1e-9);
        EXPECT_GE(r.regret_pospart, prev);
        prev = r.regret_pospart;
        for (size_t i = 0; i < 2; ++i) EXPECT_GE(r.viol_pospart[i], r.viol_signed[i] - 1e-9);
    }
}

TEST(Aggregate, SingleRunHasZeroStderr) {
    const auto report = aggregate({synthetic_trace(0, 3.0)});
    ASSERT_EQ(report.mean.size(), 2u);
    EXPECT_EQ(report.mean[1].metrics.regret_signed, 3.0);
    EXPECT_EQ(report.stderr_[1].metrics.regret_signed, 0.0);
    EXPECT_EQ(report.stderr_[0].metrics.cum_cost[0], 0.0);
}

TEST(Aggregate, TwoRunsGiveMidpointAndHalfTheGap) {
    const auto report = aggregate({synthetic_trace(0, 1.0), synthetic_trace(1, 5.0)});
    const auto& m = report.mean[0];
    const auto& s = report.stderr_[0];
    EXPECT_DOUBLE_EQ(m.metrics.regret_signed, 3.0);
    EXPECT_DOUBLE_EQ(s.metrics.regret_signed, 2.0);
    EXPECT_DOUBLE_EQ(m.metrics.regret_pospart, 6.0);
    EXPECT_DOUBLE_EQ(s.metrics.regret_pospart, 4.0);
    EXPECT_DOUBLE_EQ(m.metrics.viol_signed[0], -3.0);
    EXPECT_DOUBLE_EQ(s.metrics.cum_cost[1], 0.0);
    EXPECT_EQ(m.metrics.t, 10);
    EXPECT_EQ(s.metrics.t, 10);
}

TEST(Aggregate, MismatchedCadenceThrows) {
    auto b = synthetic_trace(1, 1.0);
    b.points[1].metrics.t = 30;
    EXPECT_THROW(aggregate({synthetic_trace(0, 1.0), b}), std::invalid_argument);
    b.points.pop_back();
    EXPECT_THROW(aggregate({synthetic_trace(0, 1.0), b}), std::invalid_argument);
}

TEST(Csv, HeaderColumns) {
    EXPECT_EQ(csv_header(2), (std::vector<std::string>{"kind", "run_id", "algo", "env", "t", "cum_c0", "cum_c1",
                                                        "cum_c2", "regret_signed", "regret_pospart",
                                                        "viol1_signed", "viol1_pospart", "viol2_signed",
                                                        "viol2_pospart", "episode_k", "fallback"}));
}

TEST(Csv, RoundTripIsBitExact) {
    const Experiment exp(small_config("psconrl", 300, 2));
    std::vector<RunTrace> traces{run_one(exp, 0), run_one(exp, 1)};
    const auto report = aggregate(traces);
    const auto path = scratch_dir("csv") / "out.csv";
    export_csv(path, traces, &report);
    const auto rows = import_csv(path);
    ASSERT_EQ(rows.size(), 4 * traces[0].points.size());
    size_t r = 0;
    auto same = [&](const TracePoint& want, const CsvRow& got) {
        const auto& a = want.metrics;
        const auto& b = got.point.metrics;
        EXPECT_EQ(a.t, b.t);
        ASSERT_EQ(a.cum_cost.size(), b.cum_cost.size());
        for (size_t i = 0; i < a.cum_cost.size(); ++i) EXPECT_TRUE(bit_equal(a.cum_cost[i], b.cum_cost[i]));
        EXPECT_TRUE(bit_equal(a.regret_signed, b.regret_signed));
        EXPECT_TRUE(bit_equal(a.regret_pospart, b.regret_pospart));
        for (size_t i = 0; i < a.viol_signed.size(); ++i) {
            EXPECT_TRUE(bit_equal(a.viol_signed[i], b.viol_signed[i]));
            EXPECT_TRUE(bit_equal(a.viol_pospart[i], b.viol_pospart[i]));
        }
        EXPECT_TRUE(bit_equal(want.episode_k, got.point.episode_k));
        EXPECT_TRUE(bit_equal(want.fallback, got.point.fallback));
    };
    for (const auto& tr : traces)
        for (const auto& p : tr.points) {
            EXPECT_EQ(rows[r].kind, "run");
            EXPECT_EQ(rows[r].run_id, std::to_string(tr.run_id));
            EXPECT_EQ(rows[r].algo, "psconrl");
            EXPECT_EQ(rows[r].env, "marsrover4x4");
            same(p, rows[r++]);
        }
    for (const auto* series : {&report.mean, &report.stderr_})
        for (const auto& p : *series) {
            EXPECT_EQ(rows[r].kind, "agg");
            EXPECT_EQ(rows[r].run_id, series == &report.mean ? "mean" : "stderr");
            same(p, rows[r++]);
        }
}

TEST(Csv, RejectsForeignFiles) {
    const auto dir = scratch_dir("csvbad");
    std::ofstream(dir / "a.csv") << "kind,run_id,algo\nrun,0,x\n";
    EXPECT_THROW(import_csv(dir / "a.csv"), FormatError);
    {
        std::ofstream out(dir / "b.csv");
        const auto h = csv_header(1);
        for (size_t i = 0; i < h.size(); ++i) out << (i ? "," : "") << h[i];
        out << "\nrun,0,x,y,1,0.5\n";
    }
    EXPECT_THROW(import_csv(dir / "b.csv"), FormatError);
    EXPECT_THROW(import_csv(dir / "missing.csv"), std::runtime_error);
}

TEST(RunOne, SameSeedSameTrace) {
    for (const char* agent : {"psconrl", "conrl", "cucrl", "uniform"}) {
        const Experiment exp(small_config(agent, 2000));
        const auto a = run_one(exp, 0);
        const auto b = run_one(exp, 0);
        const auto c = run_one(exp, 1);
        EXPECT_TRUE(a == b) << agent;
        EXPECT_FALSE(a == c) << agent;
    }
}

TEST(RunOne, ZeroHorizonGivesAnEmptyTrace) {
    const Experiment exp(small_config("psconrl", 0));
    const auto tr = run_one(exp, 0);
    EXPECT_TRUE(tr.points.empty());
    EXPECT_EQ(tr.k_t, 0);
    EXPECT_EQ(tr.horizon, 0);
}

TEST(RunOne, CadenceAndFinalPoint) {
    auto cfg = small_config("uniform", 95);
    cfg.cadence = 10;
    const auto tr = run_one(Experiment(cfg), 0);
    ASSERT_EQ(tr.points.size(), 10u);
    EXPECT_EQ(tr.points[0].metrics.t, 10);
    EXPECT_EQ(tr.points[8].metrics.t, 90);
    EXPECT_EQ(tr.points[9].metrics.t, 95);
}

TEST(RunOne, CallbackSeesEveryStepAndCountsAgree) {
    const Experiment exp(small_config("psconrl", 3000));
    const auto& world = exp.world();
    TransitionCounts tally(world.n_states(), 4);
    long long expected_t = 1;
    bool sequential = true, chained = true;
    int last_next = world.index_of(world.initial_state());
    double cum_c0 = 0.0;
    const agents::Agent* seen = nullptr;
    const auto tr = run_one(exp, 0, [&](const StepEvent& e, const agents::Agent& agent) {
        if (e.t != expected_t++) sequential = false;
        if (e.state != last_next) chained = false;
        last_next = e.next;
        tally.add(e.state, e.action, e.next);
        cum_c0 += e.costs[0];
        seen = &agent;
        ASSERT_EQ(agent.counts(), tally);
    });
    EXPECT_TRUE(sequential);
    EXPECT_TRUE(chained);
    EXPECT_NE(seen, nullptr);
    EXPECT_NEAR(tr.points.back().metrics.cum_cost[0], cum_c0, 1e-9);
}

TEST(RunOne, EpisodeColumnsAndBound) {
    const Experiment exp(small_config("psconrl", 10000));
    const auto tr = run_one(exp, 0);
    double prev = 0.0;
    for (const auto& p : tr.points) {
        EXPECT_GE(p.episode_k, prev);
        EXPECT_GE(p.episode_k, 1.0);
        EXPECT_EQ(p.fallback, 0.0);
        prev = p.episode_k;
    }
    EXPECT_EQ(tr.k_t, static_cast<long long>(tr.episodes.size()));
    EXPECT_LE(double(tr.k_t), episode_bound(exp.world().n_states(), 4, 10000));
    EXPECT_NEAR(episode_bound(16, 4, 10000), std::sqrt(2.0 * 64 * 10000 * std::log(10000.0)) + 1.0, 1e-9);
}

TEST(RunOne, OracleAgentTracksTheOptimalLoss) {
    auto cfg = small_config("oracle", 100000);
    cfg.cadence = 1000;
    const Experiment exp(cfg);
    ASSERT_TRUE(exp.oracle().has_value());
    // Batch means over 100 blocks of 1000 steps absorb the chain's correlation.
    std::vector<double> block(100, 0.0);
    const auto tr = run_one(exp, 0, [&](const StepEvent& e, const agents::Agent&) {
        block[size_t((e.t - 1) / 1000)] += e.costs[0] / 1000.0;
    });
    double mean = 0.0, ss = 0.0;
    for (double b : block) mean += b / 100.0;
    for (double b : block) ss += (b - mean) * (b - mean);
    const double se = std::sqrt(ss / 99.0) / 10.0;
    EXPECT_LE(std::abs(mean - exp.j_star()), 3.0 * se + 1e-12);
    EXPECT_LE(std::abs(tr.points.back().metrics.regret_signed) / 100000.0, 0.02);
}

TEST(RunOne, UniformAgentRegretGrowsLinearly) {
    auto cfg = small_config("uniform", 40000);
    cfg.cadence = 1000;
    const auto tr = run_one(Experiment(cfg), 0);
    const double half = tr.points[19].metrics.regret_signed;
    const double full = tr.points.back().metrics.regret_signed;
    EXPECT_GT(half, 0.0);
    EXPECT_GT(full / half, 1.8);
    EXPECT_LT(full / half, 2.2);
}

TEST(RunOne, InfeasibleEnvironmentHasNoOracle) {
    // Every reachable cell is risky and the goal is walled off, so no
    // sampled kernel can meet tau = 0 either.
    auto spec = envs::parse_layout("allrisky", envs::Variant::Marsrover, {"######", "#SR#G#", "######"}, 0.1, 0.0);
    spec.risky.push_back(spec.start);
    const auto file = scratch_dir("infeasible") / "allrisky.json";
    write_json_file(envs::to_json(spec), file);
    auto cfg = small_config("psconrl", 200);
    cfg.env_file = file;
    const Experiment exp(cfg);
    EXPECT_FALSE(exp.oracle().has_value());
    EXPECT_TRUE(std::isnan(exp.j_star()));
    const auto tr = run_one(exp, 0);
    EXPECT_EQ(tr.env, "allrisky");
    EXPECT_TRUE(std::isnan(tr.points.back().metrics.regret_signed));
    for (const auto& p : tr.points) EXPECT_EQ(p.fallback, 1.0);
    auto oracle_cfg = cfg;
    oracle_cfg.agent.name = "oracle";
    EXPECT_THROW(make_agent(oracle_cfg.agent, Experiment(oracle_cfg)), std::invalid_argument);
}

TEST(RunExperiment, ThreadsDoNotChangeResultsAndFilesAreWritten) {
    const auto dir = scratch_dir("exp");
    auto cfg = small_config("conrl", 2000, 3);
    cfg.output = dir / "conrl.csv";
    const auto one = run_experiment(Experiment(cfg));
    cfg.threads = 3;
    cfg.output = dir / "conrl3.csv";
    const auto three = run_experiment(Experiment(cfg));
    ASSERT_EQ(one.traces.size(), 3u);
    for (size_t i = 0; i < 3; ++i) EXPECT_TRUE(one.traces[i] == three.traces[i]);
    EXPECT_TRUE(fs::exists(dir / "conrl.csv"));
    const auto summary = read_json_file(dir / "conrl.summary.json");
    EXPECT_EQ(summary.at("algo"), "conrl");
    EXPECT_EQ(summary.at("k_t").size(), 3u);
    EXPECT_EQ(summary.at("final_mean").at("t"), 2000);
}

TEST(RunExperiment, PosteriorSnapshotsNextToTheCsv) {
    const auto dir = scratch_dir("post");
    auto cfg = small_config("psconrl", 500, 1);
    cfg.output = dir / "ps.csv";
    cfg.save_posterior = true;
    run_experiment(Experiment(cfg));
    const auto post = DirichletPosterior::from_snapshot(read_json_file(dir / "ps_run0_posterior.json"));
    EXPECT_EQ(post.counts().total(), 500);
}

TEST(Config, ParsesFullDocument) {
    const auto dir = scratch_dir("cfg");
    const auto doc = nlohmann::json::parse(R"({
        "environment": {"name": "box6x6", "threshold": 0.3, "slip": 0.05},
        "agent": {"name": "cucrl", "h": 50, "bonus_scale": 0.1, "delta": 0.01},
        "horizon": 5000, "runs": 4, "seed": 9, "cadence": 50, "threads": 2,
        "output": "out/box.csv"
    })");
    const auto c = experiment_config_from_json(doc, dir);
    EXPECT_EQ(c.env_name, "box6x6");
    EXPECT_EQ(*c.threshold, 0.3);
    EXPECT_EQ(*c.slip, 0.05);
    EXPECT_EQ(c.agent.name, "cucrl");
    EXPECT_EQ(c.agent.h, 50);
    EXPECT_EQ(c.agent.bonus_scale, 0.1);
    EXPECT_EQ(c.agent.delta, 0.01);
    EXPECT_EQ(c.horizon, 5000);
    EXPECT_EQ(c.runs, 4);
    EXPECT_EQ(c.seed, 9u);
    EXPECT_EQ(c.cadence, 50);
    EXPECT_EQ(c.threads, 2);
    EXPECT_EQ(c.output, dir / "out/box.csv");

    const auto back = experiment_config_from_json(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Config, ShorthandAndDefaults) {
    const auto c = experiment_config_from_json(
        nlohmann::json::parse(R"({"environment": "marsrover8x8", "agent": "psconrl", "full_trace": true})"));
    EXPECT_EQ(c.env_name, "marsrover8x8");
    EXPECT_EQ(c.cadence, 1);
    EXPECT_EQ(c.runs, 1);
    EXPECT_EQ(c.agent.prior, 0.01);
    EXPECT_FALSE(c.threshold.has_value());
}

TEST(Config, RejectsBadDocuments) {
    for (const char* text : {
             R"({"agent": "psconrl"})",
             R"({"environment": "nowhere"})",
             R"({"environment": "box6x6", "agent": "qlearning"})",
             R"({"environment": "box6x6", "runs": 0})",
             R"({"environment": "box6x6", "horizon": "long"})",
             R"({"environment": "box6x6", "agent": {"name": "ucrlcmdp", "alpha": 1.5}})",
             R"({"environment": {"file": "/no/such/file.json"}})",
         }) {
        EXPECT_THROW(experiment_config_from_json(nlohmann::json::parse(text)), FormatError) << text;
    }
    EXPECT_THROW(load_experiment_config("/no/such/config.json"), std::exception);
}
