#include "cmdp/agents.hpp"

#include <algorithm>
#include <cmath>

namespace cmdp::agents {

BaselineEstimates::BaselineEstimates(int n_states, int n_actions, int n_components)
    : n_components_(n_components),
      counts_(n_states, n_actions),
      reward_sum_(size_t(n_states) * n_actions, 0.0),
      cost_sum_(size_t(n_components) * n_states * n_actions, 0.0) {}

void BaselineEstimates::record(const Transition& tr) {
    counts_.add(tr.state, tr.action, tr.next);
    const size_t sa = size_t(tr.state) * n_actions() + tr.action;
    reward_sum_[sa] += 1.0 - tr.costs[0];
    for (int i = 0; i < n_components_; ++i)
        cost_sum_[size_t(i) * n_states() * n_actions() + sa] += tr.costs[i];
}

double BaselineEstimates::mean_reward(int s, int a) const {
    const size_t sa = size_t(s) * n_actions() + a;
    return reward_sum_[sa] / double(std::max(1LL, counts_.visits(s, a)));
}

double BaselineEstimates::mean_cost(int i, int s, int a) const {
    const size_t sa = size_t(s) * n_actions() + a;
    return cost_sum_[size_t(i) * n_states() * n_actions() + sa] /
           double(std::max(1LL, counts_.visits(s, a)));
}

double BaselineEstimates::bonus(int s, int a, double t, double delta, double scale) const {
    return scale * confidence_radius(counts_.visits(s, a), t, delta, n_states(), n_actions());
}

Cmdp estimated_model(const BaselineEstimates& est, const std::vector<double>& thresholds,
                     double reward_bonus_sign, double cost_bonus_sign, const BonusParams& bonus) {
    const int S = est.n_states();
    const int A = est.n_actions();
    Cmdp model;
    model.transitions = est.empirical_kernel();
    model.costs = CostTable(est.n_components(), S, A);
    model.thresholds = thresholds;
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            const double b = est.bonus(s, a, bonus.t, bonus.delta, bonus.scale);
            const double reward = std::clamp(est.mean_reward(s, a) + reward_bonus_sign * b, 0.0, 1.0);
            model.costs(0, s, a) = 1.0 - reward;
            for (int i = 1; i < est.n_components(); ++i)
                model.costs(i, s, a) =
                    std::clamp(est.mean_cost(i, s, a) + cost_bonus_sign * b, 0.0, 1.0);
        }
    return model;
}

namespace {

BaselinePlan to_plan(const PlanOutcome& outcome, int S, int A, const char* who) {
    BaselinePlan plan;
    plan.status = outcome.status;
    switch (outcome.status) {
    case PlanStatus::Optimal:
        plan.policy = policy_from_occupancy(*outcome.occupancy);
        plan.objective = outcome.objective;
        break;
    case PlanStatus::Infeasible: plan.policy = StationaryPolicy::uniform(S, A); break;
    case PlanStatus::NumericalFailure:
        throw PlannerFailure(std::string(who) + ": LP failed: " + outcome.message);
    }
    return plan;
}

double resolve_delta(const BaselineConfig& c) {
    return c.delta > 0.0 ? c.delta : 1.0 / double(std::max(1LL, c.horizon));
}

}  // namespace

BaselinePlan conrl_plan(const BaselineEstimates& est, const std::vector<double>& thresholds,
                        const BonusParams& bonus) {
    return to_plan(solve_cmdp_lp(estimated_model(est, thresholds, +1.0, -1.0, bonus)),
                   est.n_states(), est.n_actions(), "conrl");
}

BaselinePlan cucrl_plan(const BaselineEstimates& est, const std::vector<double>& thresholds,
                        const BonusParams& bonus) {
    return to_plan(solve_cmdp_lp(estimated_model(est, thresholds, +1.0, +1.0, bonus)),
                   est.n_states(), est.n_actions(), "cucrl");
}

BaselinePlan ucrlcmdp_plan(const BaselineEstimates& est, const std::vector<double>& thresholds,
                           const BonusParams& bonus) {
    const int S = est.n_states();
    const int A = est.n_actions();
    ConfidenceSet set;
    set.center = est.empirical_kernel();
    set.radii.resize(size_t(S) * A);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a)
            set.radii[size_t(s) * A + a] = est.bonus(s, a, bonus.t, bonus.delta, bonus.scale);
    const Cmdp empirical = estimated_model(est, thresholds, 0.0, 0.0, bonus);
    return to_plan(solve_extended_lp(set, empirical.costs, thresholds), S, A, "ucrlcmdp");
}

// ConRL -------------------------------------------------------------------

ConRl::ConRl(BaselineConfig config)
    : config_(std::move(config)),
      est_(config_.n_states, config_.n_actions, int(config_.thresholds.size()) + 1) {}

void ConRl::replan() {
    snapshot_ = est_.counts().pairs();
    const auto plan =
        conrl_plan(est_, config_.thresholds, {double(t_), resolve_delta(config_), config_.bonus_scale});
    policy_ = plan.policy;
    fallback_ = plan.status == PlanStatus::Infeasible;
    open_episode(fallback_);
}

void ConRl::start(int, Rng&) {
    t_ = 1;
    episodes_.clear();
    replan();
}

void ConRl::observe(const Transition& tr, Rng&) {
    est_.record(tr);
    ++t_;
    const size_t j = size_t(tr.state) * config_.n_actions + tr.action;
    const long long before = snapshot_[j];
    if (est_.counts().pairs()[j] - before < std::max(1LL, before)) return;
    close_episode(false, true);
    replan();
}

// C-UCRL ------------------------------------------------------------------

CUcrl::CUcrl(BaselineConfig config)
    : config_(std::move(config)),
      est_(config_.n_states, config_.n_actions, int(config_.thresholds.size()) + 1) {}

void CUcrl::start(int, Rng&) {
    t_ = 1;
    episodes_.clear();
    episode_start_ = 1;
    exploring_ = true;
    fallback_ = false;
    policy_ = StationaryPolicy::uniform(config_.n_states, config_.n_actions);
    open_episode(false);
}

void CUcrl::observe(const Transition& tr, Rng&) {
    est_.record(tr);
    ++t_;
    const long long h = std::max(1LL, config_.h);
    const long long k = episode_index();
    const long long offset = t_ - episode_start_;
    if (offset >= k * h) {
        close_episode(true, false);
        episode_start_ = t_;
        exploring_ = true;
        fallback_ = false;
        policy_ = StationaryPolicy::uniform(config_.n_states, config_.n_actions);
        open_episode(false);
    } else if (exploring_ && offset >= h) {
        const auto plan = cucrl_plan(est_, config_.thresholds,
                                     {double(t_), resolve_delta(config_), config_.bonus_scale});
        policy_ = plan.policy;
        fallback_ = plan.status == PlanStatus::Infeasible;
        exploring_ = false;
        episodes_.back().fallback = fallback_;
    }
}

// UCRL-CMDP ---------------------------------------------------------------

long long ucrlcmdp_period(long long horizon, double alpha) {
    return std::max(1LL, (long long)std::ceil(std::pow(double(std::max(1LL, horizon)), alpha) - 1e-9));
}

UcrlCmdp::UcrlCmdp(BaselineConfig config)
    : config_(std::move(config)),
      est_(config_.n_states, config_.n_actions, int(config_.thresholds.size()) + 1),
      period_(ucrlcmdp_period(config_.horizon, config_.alpha)) {}

void UcrlCmdp::replan() {
    episode_start_ = t_;
    const auto plan = ucrlcmdp_plan(est_, config_.thresholds,
                                    {double(t_), resolve_delta(config_), config_.bonus_scale});
    policy_ = plan.policy;
    fallback_ = plan.status == PlanStatus::Infeasible;
    open_episode(fallback_);
}

void UcrlCmdp::start(int, Rng&) {
    t_ = 1;
    episodes_.clear();
    replan();
}

void UcrlCmdp::observe(const Transition& tr, Rng&) {
    est_.record(tr);
    ++t_;
    if (t_ - episode_start_ < period_) return;
    close_episode(true, false);
    replan();
}

}  // namespace cmdp::agents
