#include "cmdp/cmdp_io.hpp"
#include "cmdp/envs.hpp"

#include "oracles.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include <deque>
#include <map>

using namespace cmdp;
using namespace cmdp::envs;

namespace {

GridSpec with(GridSpec spec, double slip, double threshold) {
    spec.slip = slip;
    spec.threshold = threshold;
    return spec;
}

bool wall_at(const GridSpec& spec, Cell c) {
    if (c.row < 0 || c.row >= spec.height || c.col < 0 || c.col >= spec.width) return true;
    return std::find(spec.walls.begin(), spec.walls.end(), c) != spec.walls.end();
}

// Pearson statistic of `samples` draws against `p`; cells with p = 0 must be empty.
struct ChiSquare {
    double stat = 0.0;
    int dof = 0;
    bool impossible_hit = false;
};

ChiSquare chi_square(std::span<const double> p, const std::vector<long long>& hits, long long samples) {
    ChiSquare out;
    for (size_t k = 0; k < p.size(); ++k) {
        if (p[k] == 0.0) {
            out.impossible_hit |= hits[k] > 0;
            continue;
        }
        const double expect = p[k] * double(samples);
        out.stat += (double(hits[k]) - expect) * (double(hits[k]) - expect) / expect;
        ++out.dof;
    }
    --out.dof;
    return out;
}

// Runs `samples` simulator steps from every (state, action) and compares each
// row against the compiled kernel at a Bonferroni-corrected 3-sigma level.
void expect_simulator_matches_kernel(const GridWorld& world, long long samples, std::uint64_t seed) {
    const Cmdp& m = world.model();
    const int S = world.n_states();
    const double level = 0.0027 / double(S * kNumActions);
    Rng rng(seed);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < kNumActions; ++a) {
            std::vector<long long> hits(S, 0);
            for (long long k = 0; k < samples; ++k) {
                const auto r = env_step(world.spec(), world.state(s), a, rng);
                const int next = world.index_of(r.next);
                ASSERT_GE(next, 0);
                ASSERT_EQ(r.costs[0], m.costs(0, s, a));
                ASSERT_EQ(r.costs[1], m.costs(1, s, a));
                ++hits[next];
            }
            const auto chi = chi_square(m.transitions.row(s, a), hits, samples);
            EXPECT_FALSE(chi.impossible_hit) << "state " << s << " action " << a;
            if (chi.dof < 1) continue;
            const boost::math::chi_squared dist(chi.dof);
            EXPECT_LT(chi.stat, boost::math::quantile(boost::math::complement(dist, level)))
                << "state " << s << " action " << a;
        }
}

// Deterministic policy that walks a shortest path to the goal, optionally
// avoiding risky cells. Cells off the chosen graph take the unrestricted route.
StationaryPolicy route_policy(const GridWorld& world, bool avoid_risky) {
    const GridSpec& spec = world.spec();
    auto risky = [&](Cell c) { return std::find(spec.risky.begin(), spec.risky.end(), c) != spec.risky.end(); };
    auto distances = [&](bool avoid) {
        std::map<Cell, int> dist{{spec.goal, 0}};
        std::deque<Cell> queue{spec.goal};
        while (!queue.empty()) {
            const Cell c = queue.front();
            queue.pop_front();
            for (Cell d : {Cell{-1, 0}, Cell{1, 0}, Cell{0, 1}, Cell{0, -1}}) {
                const Cell n{c.row + d.row, c.col + d.col};
                if (wall_at(spec, n) || dist.count(n) || (avoid && risky(n))) continue;
                dist[n] = dist[c] + 1;
                queue.push_back(n);
            }
        }
        return dist;
    };
    const auto safe = distances(true), fast = distances(false);
    std::vector<int> actions(world.n_states(), 0);
    for (int s = 0; s < world.n_states(); ++s) {
        const Cell c = world.state(s).agent;
        if (c == spec.goal) continue;
        const auto& dist = avoid_risky && safe.count(c) ? safe : fast;
        int best = std::numeric_limits<int>::max();
        for (int a = 0; a < kNumActions; ++a) {
            const Cell n = move(spec, world.state(s), a).agent;
            if (n == c || !dist.count(n)) continue;
            if (dist.at(n) < best) {
                best = dist.at(n);
                actions[s] = a;
            }
        }
    }
    return StationaryPolicy::deterministic(actions, kNumActions);
}

}  // namespace

TEST(Compile, DefaultLayoutsValidate) {
    for (const auto& name : default_spec_names()) {
        const GridWorld world(default_spec(name));
        EXPECT_TRUE(validate(world.model()).empty()) << name;
        EXPECT_EQ(world.model().n_actions(), 4);
        EXPECT_EQ(world.model().costs.n_components(), 2);
        EXPECT_GE(world.goal_index(), 0);
        EXPECT_EQ(world.index_of(world.initial_state()), 0);
    }
    const GridWorld small(default_spec("marsrover4x4"));
    EXPECT_LE(small.n_states(), 16);
    EXPECT_EQ(small.model().thresholds, std::vector<double>{0.2});
}

TEST(Compile, PublishedThresholds) {
    EXPECT_EQ(default_spec("marsrover4x4").threshold, 0.2);
    EXPECT_EQ(default_spec("marsrover8x8").threshold, 0.1);
    EXPECT_EQ(default_spec("box6x6").threshold, 0.6);
    EXPECT_THROW(default_spec("nowhere"), std::invalid_argument);
}

TEST(Compile, WallMoveIsPointMassWithoutSlip) {
    const GridWorld world(with(default_spec("marsrover4x4"), 0.0, 0.2));
    const int s = world.index_of({world.spec().start});
    // The start sits on the bottom row, so moving down hits the boundary.
    EXPECT_EQ(world.model().transitions(s, kDown, s), 1.0);
    for (int t = 0; t < world.n_states(); ++t)
        if (t != s) {
            EXPECT_EQ(world.model().transitions(s, kDown, t), 0.0);
        }
}

TEST(Compile, SlipSplitsEvenlyOverPerpendiculars) {
    const auto spec = parse_layout("open", Variant::Marsrover, {"...", ".S.", "..G"}, 0.2, 1.0);
    const GridWorld world(spec);
    const int s = world.index_of({{1, 1}});
    const auto& P = world.model().transitions;
    EXPECT_DOUBLE_EQ(P(s, kUp, world.index_of({{0, 1}})), 0.8);
    EXPECT_DOUBLE_EQ(P(s, kUp, world.index_of({{1, 2}})), 0.1);
    EXPECT_DOUBLE_EQ(P(s, kUp, world.index_of({{1, 0}})), 0.1);
    EXPECT_DOUBLE_EQ(P(s, kLeft, world.index_of({{0, 1}})), 0.1);
    EXPECT_DOUBLE_EQ(P(s, kLeft, world.index_of({{2, 1}})), 0.1);
}

TEST(Compile, CostsAreBinaryAndGoalRowsResetToStart) {
    for (const auto& name : default_spec_names()) {
        const GridWorld world(default_spec(name));
        const Cmdp& m = world.model();
        for (int s = 0; s < world.n_states(); ++s) {
            const bool goal = world.state(s).agent == world.spec().goal;
            for (int a = 0; a < kNumActions; ++a) {
                for (int i = 0; i < 2; ++i) {
                    const double c = m.costs(i, s, a);
                    EXPECT_TRUE(c == 0.0 || c == 1.0);
                }
                EXPECT_EQ(m.costs(0, s, a), goal ? 0.0 : 1.0);
                if (goal) {
                    EXPECT_EQ(m.costs(1, s, a), 0.0);
                    EXPECT_EQ(m.transitions(s, a, 0), 1.0) << name;
                }
            }
        }
    }
}

TEST(Compile, BoxPushRule) {
    const auto spec = parse_layout("push", Variant::Box, {"#####", "#SB.#", "#..G#", "#####"}, 0.0, 1.0);
    const EnvState init{{1, 1}, {1, 2}};
    EXPECT_EQ(move(spec, init, kRight), (EnvState{{1, 2}, {1, 3}}));
    const EnvState jammed{{1, 2}, {1, 3}};
    EXPECT_EQ(move(spec, jammed, kRight), jammed);
    EXPECT_EQ(move(spec, init, kUp), init);
    EXPECT_EQ(move(spec, init, kDown), (EnvState{{2, 1}, {1, 2}}));
    const EnvState beside{{2, 1}, {2, 2}};
    EXPECT_EQ(move(spec, beside, kRight), beside);  // the goal lies beyond the box
}

TEST(Compile, GoalTileStopsTheBox) {
    const auto spec = parse_layout("goalbox", Variant::Box, {"#####", "#S..#", "#.B.#", "#.G.#", "#####"}, 0.0, 1.0);
    const EnvState above{{1, 2}, {2, 2}};
    EXPECT_EQ(move(spec, above, kDown), above);
}

TEST(Compile, CorneredBoxStaysPutAndCostsOne) {
    const GridWorld world(with(default_spec("box6x6"), 0.0, 0.6));
    const GridSpec& spec = world.spec();
    auto true_corner = [&](Cell c) {
        const bool up = wall_at(spec, {c.row - 1, c.col}), down = wall_at(spec, {c.row + 1, c.col});
        const bool left = wall_at(spec, {c.row, c.col - 1}), right = wall_at(spec, {c.row, c.col + 1});
        return (up || down) && (left || right);
    };
    int cornered = 0;
    for (int s = 0; s < world.n_states(); ++s) {
        const EnvState& x = world.state(s);
        if (x.agent == spec.goal || !true_corner(x.box)) continue;
        ++cornered;
        for (int a = 0; a < kNumActions; ++a) {
            EXPECT_EQ(world.model().costs(1, s, a), 1.0);
            for (int t = 0; t < world.n_states(); ++t)
                if (world.model().transitions(s, a, t) > 0.0) {
                    EXPECT_EQ(world.state(t).box, x.box);
                }
        }
    }
    EXPECT_GT(cornered, 0);
    // The opening push jams the box against the wall below it.
    const EnvState pushed = move(spec, world.initial_state(), kDown);
    EXPECT_NE(pushed.box, spec.box_start);
    EXPECT_EQ(step_costs(spec, pushed)[1], 1.0);
}

TEST(Compile, MalformedSpecsAreRejected) {
    auto spec = default_spec("marsrover4x4");
    spec.walls.push_back(spec.start);
    EXPECT_THROW(GridWorld{spec}, FormatError);
    spec = default_spec("marsrover4x4");
    spec.slip = 1.0;
    EXPECT_THROW(GridWorld{spec}, FormatError);
    auto box = default_spec("box6x6");
    box.box_start = box.start;
    EXPECT_THROW(GridWorld{box}, FormatError);
    EXPECT_THROW(parse_layout("x", Variant::Marsrover, {"S.."}, 0.1, 0.2), FormatError);
    EXPECT_THROW(parse_layout("x", Variant::Marsrover, {"S?G"}, 0.1, 0.2), FormatError);
}

TEST(EnvStep, GoalResetsToStartAtZeroCost) {
    for (const auto& name : default_spec_names()) {
        const GridWorld world(default_spec(name));
        const EnvState at_goal = world.state(world.goal_index());
        Rng rng(1);
        for (int a = 0; a < kNumActions; ++a)
            for (int k = 0; k < 50; ++k) {
                const auto r = env_step(world.spec(), at_goal, a, rng);
                EXPECT_EQ(r.next, world.initial_state());
                EXPECT_EQ(r.costs, (StepCosts{0.0, 0.0}));
            }
    }
}

TEST(EnvStep, RiskyCellCostsOneOne) {
    const auto spec = default_spec("marsrover4x4");
    ASSERT_FALSE(spec.risky.empty());
    Rng rng(2);
    for (Cell c : spec.risky) EXPECT_EQ(env_step(spec, {c}, kUp, rng).costs, (StepCosts{1.0, 1.0}));
    EXPECT_EQ(env_step(spec, {spec.start}, kUp, rng).costs, (StepCosts{1.0, 0.0}));
}

TEST(EnvStep, MatchesCompiledKernelMarsrover) {
    expect_simulator_matches_kernel(GridWorld(default_spec("marsrover4x4")), 100000, 11);
}

TEST(EnvStep, MatchesCompiledKernelBox) {
    expect_simulator_matches_kernel(GridWorld(default_spec("box6x6")), 5000, 12);
}

TEST(Structure, EveryLayoutIsCommunicating) {
    for (const auto& name : default_spec_names()) {
        const GridWorld world(default_spec(name));
        const double H = estimate_hitting_time(world.model(), StationaryPolicy::uniform(world.n_states(), 4));
        EXPECT_TRUE(std::isfinite(H)) << name;
    }
}

TEST(Oracle, VacuousThresholdGivesUnconstrainedOptimum) {
    for (const auto& name : default_spec_names()) {
        const auto spec = with(default_spec(name), 0.1, 1.0);
        const auto sol = oracle_solution(spec);
        EXPECT_NEAR(sol.loss, oracle::optimal_gain(compile(spec)), 1e-8) << name;
    }
}

TEST(Oracle, AllRoutesRiskyIsInfeasibleAtZero) {
    // Loitering on a safe start would satisfy tau = 0, so the start is risky too.
    auto spec = parse_layout("corridor", Variant::Marsrover, {"SRG"}, 0.1, 0.0);
    EXPECT_NO_THROW(oracle_solution(spec));
    spec.risky.push_back(spec.start);
    EXPECT_THROW(oracle_solution(spec), InfeasibleModelError);
    EXPECT_NO_THROW(oracle_solution(with(spec, 0.1, 1.0)));
}

TEST(Oracle, MarsroverDefaultLiesBetweenRoutes) {
    const GridWorld world(default_spec("marsrover4x4"));
    const auto fast = evaluate_policy(world.model(), route_policy(world, false));
    const auto safe = evaluate_policy(world.model(), route_policy(world, true));
    const auto sol = oracle_solution(world.spec());
    EXPECT_GT(fast.loss[1], 0.2);
    EXPECT_LE(safe.loss[1], 0.2);
    EXPECT_LT(fast.loss[0], sol.loss - 1e-6);
    EXPECT_LT(sol.loss, safe.loss[0] - 1e-6);
    const auto at_opt = evaluate_policy(world.model(), sol.policy);
    EXPECT_NEAR(at_opt.loss[0], sol.loss, 1e-8);
    EXPECT_LE(at_opt.loss[1], 0.2 + 1e-8);
}

TEST(Oracle, OptimalPolicyMatchesSimulation) {
    const GridWorld world(default_spec("box6x6"));
    const auto sol = oracle_solution(world.spec());
    Rng rng(4);
    const auto sim = oracle::simulate(world.model(), sol.policy, 1000000, rng);
    EXPECT_LE(std::abs(sim.mean[0] - sol.loss), 3.0 * sim.se[0] + 1e-9);
    EXPECT_LE(sim.mean[1], 0.6 + 3.0 * sim.se[1]);
}

TEST(SpecFile, JsonRoundTrip) {
    for (const auto& name : default_spec_names()) {
        const auto spec = default_spec(name);
        const auto back = grid_spec_from_json(nlohmann::json::parse(to_json(spec).dump()));
        EXPECT_EQ(compile(back).transitions.data(), compile(spec).transitions.data()) << name;
        EXPECT_EQ(back.threshold, spec.threshold);
        EXPECT_EQ(back.name, spec.name);
    }
}

TEST(SpecFile, RejectsBrokenDocuments) {
    auto doc = to_json(default_spec("marsrover4x4"));
    doc["variant"] = "maze";
    EXPECT_THROW(grid_spec_from_json(doc), FormatError);
    doc = to_json(default_spec("marsrover4x4"));
    doc.erase("threshold");
    EXPECT_THROW(grid_spec_from_json(doc), FormatError);
    doc = to_json(default_spec("marsrover4x4"));
    doc["start"] = nlohmann::json::array({1});
    EXPECT_THROW(grid_spec_from_json(doc), FormatError);
}
