#include "cmdp/agents.hpp"

#include <algorithm>

namespace cmdp::agents {

int Agent::act(int state, Rng& rng) { return sample_index(policy_.row(state), rng); }

void Agent::open_episode(bool fallback) {
    EpisodeRecord rec;
    rec.index = episodes_.empty() ? 1 : episodes_.back().index + 1;
    rec.start = t_;
    rec.fallback = fallback;
    episodes_.push_back(rec);
}

void Agent::close_episode(bool by_length, bool by_doubling) {
    if (episodes_.empty()) return;
    auto& rec = episodes_.back();
    rec.length = t_ - rec.start;
    rec.ended_by_length = by_length;
    rec.ended_by_doubling = by_doubling;
}

bool psconrl_should_stop(long long t, long long episode_start, long long prev_length,
                         const TransitionCounts& counts, std::span<const long long> snapshot) {
    if (t - episode_start >= prev_length + 1) return true;
    const auto& pairs = counts.pairs();
    for (size_t j = 0; j < pairs.size(); ++j)
        if (pairs[j] >= 2 * std::max(1LL, snapshot[j])) return true;
    return false;
}

PsConRl::PsConRl(CostTable costs, std::vector<double> thresholds, double prior)
    : costs_(std::move(costs)),
      thresholds_(std::move(thresholds)),
      posterior_(costs_.n_states(), costs_.n_actions(), prior) {}

void PsConRl::start(int /*initial_state*/, Rng& rng) {
    t_ = 1;
    episode_start_ = 0;
    episodes_.clear();
    begin_episode(rng);
}

void PsConRl::begin_episode(Rng& rng) {
    prev_length_ = t_ - episode_start_;
    episode_start_ = t_;
    snapshot_ = posterior_.counts().pairs();

    Cmdp sampled;
    sampled.transitions = posterior_.sample_kernel(rng);
    sampled.costs = costs_;
    sampled.thresholds = thresholds_;
    const auto plan = solve_cmdp_lp(sampled);
    switch (plan.status) {
    case PlanStatus::Optimal:
        policy_ = policy_from_occupancy(*plan.occupancy);
        fallback_active_ = false;
        break;
    case PlanStatus::Infeasible:
        policy_ = StationaryPolicy::uniform(costs_.n_states(), costs_.n_actions());
        fallback_active_ = true;
        break;
    case PlanStatus::NumericalFailure:
        throw PlannerFailure("psconrl: LP failed at t=" + std::to_string(t_) + ": " + plan.message);
    }
    sampled_ = std::move(sampled.transitions);
    open_episode(fallback_active_);
}

void PsConRl::observe(const Transition& tr, Rng& rng) {
    posterior_.update(tr.state, tr.action, tr.next);
    ++t_;
    // Only the pair just visited can have crossed its doubling mark.
    const size_t j = size_t(tr.state) * costs_.n_actions() + tr.action;
    const bool by_length = t_ - episode_start_ >= prev_length_ + 1;
    const bool by_doubling = posterior_.counts().pairs()[j] >= 2 * std::max(1LL, snapshot_[j]);
    if (!by_length && !by_doubling) return;
    close_episode(by_length, by_doubling);
    begin_episode(rng);
}

FixedPolicyAgent::FixedPolicyAgent(std::string name, StationaryPolicy policy)
    : name_(std::move(name)), counts_(policy.n_states(), policy.n_actions()) {
    policy_ = std::move(policy);
}

void FixedPolicyAgent::start(int, Rng&) {
    t_ = 1;
    episodes_.clear();
    open_episode(false);
}

void FixedPolicyAgent::observe(const Transition& tr, Rng&) {
    counts_.add(tr.state, tr.action, tr.next);
    ++t_;
}

}  // namespace cmdp::agents
