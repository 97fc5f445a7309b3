#pragma once

#include "cmdp/core.hpp"
#include "cmdp/planner.hpp"
#include "cmdp/posterior.hpp"
#include "cmdp/random.hpp"

#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cmdp::agents {

/// A planner breakdown during learning; runs abort on it rather than
/// treating it as infeasibility.
class PlannerFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Transition {
    int state;
    int action;
    std::span<const double> costs;  // c_0..c_m incurred at (state, action)
    int next;
};

struct EpisodeRecord {
    long long index = 0;   // k, starting at 1
    long long start = 0;   // t_k
    long long length = 0;  // T_k, 0 while the episode is running
    bool fallback = false;
    bool ended_by_length = false;    // schedule / growth criterion
    bool ended_by_doubling = false;  // some N(s,a) doubled
};

/// One learning algorithm. Time starts at t = 1 when start() is called and
/// advances by one with every observe().
class Agent {
public:
    virtual ~Agent() = default;

    virtual std::string name() const = 0;
    virtual void start(int initial_state, Rng& rng) = 0;
    virtual int act(int state, Rng& rng);
    virtual void observe(const Transition& tr, Rng& rng) = 0;

    virtual const TransitionCounts& counts() const = 0;
    virtual bool fallback_active() const { return false; }

    const StationaryPolicy& policy() const { return policy_; }
    long long time() const { return t_; }
    long long episode_index() const { return episodes_.empty() ? 0 : episodes_.back().index; }
    const std::vector<EpisodeRecord>& episodes() const { return episodes_; }

protected:
    void open_episode(bool fallback);
    void close_episode(bool by_length, bool by_doubling);

    StationaryPolicy policy_;
    long long t_ = 1;
    std::vector<EpisodeRecord> episodes_;
};

/// Stop rule of the posterior-sampling learner: the episode has run
/// prev_length + 1 steps, or some pair has doubled its visit count since the
/// episode began (zero counts count as one).
bool psconrl_should_stop(long long t, long long episode_start, long long prev_length,
                         const TransitionCounts& counts, std::span<const long long> snapshot);

/// Posterior sampling with a Dirichlet prior. Costs and thresholds are known;
/// only the kernel is learned.
class PsConRl final : public Agent {
public:
    PsConRl(CostTable costs, std::vector<double> thresholds, double prior = 0.01);

    std::string name() const override { return "psconrl"; }
    void start(int initial_state, Rng& rng) override;
    void observe(const Transition& tr, Rng& rng) override;

    const TransitionCounts& counts() const override { return posterior_.counts(); }
    bool fallback_active() const override { return fallback_active_; }

    /// Samples p_k, plans on it, falls back to the uniform policy when the
    /// sampled model is infeasible. Resets the episode bookkeeping at time().
    void begin_episode(Rng& rng);

    const DirichletPosterior& posterior() const { return posterior_; }
    DirichletPosterior& posterior() { return posterior_; }
    long long episode_start() const { return episode_start_; }
    long long prev_episode_length() const { return prev_length_; }
    const std::vector<long long>& visit_snapshot() const { return snapshot_; }
    const Kernel& sampled_kernel() const { return sampled_; }

private:
    CostTable costs_;
    std::vector<double> thresholds_;
    DirichletPosterior posterior_;
    long long episode_start_ = 0;
    long long prev_length_ = 0;
    std::vector<long long> snapshot_;
    bool fallback_active_ = false;
    Kernel sampled_;
};

/// Empirical rewards (r = 1 - c_0), constraint costs and kernel of the
/// optimism-based baselines.
class BaselineEstimates {
public:
    BaselineEstimates() = default;
    BaselineEstimates(int n_states, int n_actions, int n_components);

    void record(const Transition& tr);

    int n_states() const { return counts_.n_states(); }
    int n_actions() const { return counts_.n_actions(); }
    int n_components() const { return n_components_; }
    const TransitionCounts& counts() const { return counts_; }

    double mean_reward(int s, int a) const;
    double mean_cost(int i, int s, int a) const;
    Kernel empirical_kernel() const { return cmdp::empirical_kernel(counts_); }
    /// scale * confidence_radius(N(s,a), t, delta, S, A)
    double bonus(int s, int a, double t, double delta, double scale) const;

private:
    int n_components_ = 0;
    TransitionCounts counts_;
    std::vector<double> reward_sum_;  // per (s,a)
    std::vector<double> cost_sum_;    // per (i,s,a)
};

struct BonusParams {
    double t = 1.0;
    double delta = 0.05;
    double scale = 1.0;
};

struct BaselinePlan {
    StationaryPolicy policy;  // uniform when the program was infeasible
    PlanStatus status = PlanStatus::NumericalFailure;
    double objective = 0.0;   // optimistic loss when Optimal
};

/// Optimistic reward and optimistic (lowered) constraint costs.
BaselinePlan conrl_plan(const BaselineEstimates& est, const std::vector<double>& thresholds,
                        const BonusParams& bonus);
/// Optimistic reward and pessimistic (raised) constraint costs.
BaselinePlan cucrl_plan(const BaselineEstimates& est, const std::vector<double>& thresholds,
                        const BonusParams& bonus);
/// Empirical costs, kernel chosen optimistically inside the L1 confidence set.
BaselinePlan ucrlcmdp_plan(const BaselineEstimates& est, const std::vector<double>& thresholds,
                           const BonusParams& bonus);

/// Builds the model the OFU baselines plan on from adjusted estimates.
Cmdp estimated_model(const BaselineEstimates& est, const std::vector<double>& thresholds,
                     double reward_bonus_sign, double cost_bonus_sign, const BonusParams& bonus);

struct BaselineConfig {
    int n_states = 0;
    int n_actions = 0;
    std::vector<double> thresholds;
    long long horizon = 1;    // T, used for delta = 1/T and the UCRL-CMDP period
    double delta = 0.0;       // 0 selects 1/horizon
    double bonus_scale = 1.0;
    long long h = 100;        // C-UCRL exploration block
    double alpha = 0.5;       // UCRL-CMDP period exponent
};

/// Doubling epochs: replan when some pair has been visited max(1, N_k)
/// times within the epoch.
class ConRl final : public Agent {
public:
    explicit ConRl(BaselineConfig config);
    std::string name() const override { return "conrl"; }
    void start(int initial_state, Rng& rng) override;
    void observe(const Transition& tr, Rng& rng) override;
    const TransitionCounts& counts() const override { return est_.counts(); }
    bool fallback_active() const override { return fallback_; }
    const BaselineEstimates& estimates() const { return est_; }

private:
    void replan();

    BaselineConfig config_;
    BaselineEstimates est_;
    std::vector<long long> snapshot_;
    bool fallback_ = false;
};

/// Episode k lasts k*h steps: h uniform steps, then (k-1)h on the plan.
class CUcrl final : public Agent {
public:
    explicit CUcrl(BaselineConfig config);
    std::string name() const override { return "cucrl"; }
    void start(int initial_state, Rng& rng) override;
    void observe(const Transition& tr, Rng& rng) override;
    const TransitionCounts& counts() const override { return est_.counts(); }
    bool fallback_active() const override { return fallback_; }
    bool exploring() const { return exploring_; }

private:
    BaselineConfig config_;
    BaselineEstimates est_;
    long long episode_start_ = 1;
    bool exploring_ = true;
    bool fallback_ = false;
};

/// Fixed-length episodes of ceil(T^alpha) steps planned with the extended LP.
class UcrlCmdp final : public Agent {
public:
    explicit UcrlCmdp(BaselineConfig config);
    std::string name() const override { return "ucrlcmdp"; }
    void start(int initial_state, Rng& rng) override;
    void observe(const Transition& tr, Rng& rng) override;
    const TransitionCounts& counts() const override { return est_.counts(); }
    bool fallback_active() const override { return fallback_; }
    long long period() const { return period_; }

private:
    void replan();

    BaselineConfig config_;
    BaselineEstimates est_;
    long long period_ = 1;
    long long episode_start_ = 1;
    bool fallback_ = false;
};

/// ceil(horizon^alpha), at least 1.
long long ucrlcmdp_period(long long horizon, double alpha);

/// Executes a fixed stationary policy; used for the oracle and uniform
/// reference curves.
class FixedPolicyAgent final : public Agent {
public:
    FixedPolicyAgent(std::string name, StationaryPolicy policy);
    std::string name() const override { return name_; }
    void start(int initial_state, Rng& rng) override;
    void observe(const Transition& tr, Rng& rng) override;
    const TransitionCounts& counts() const override { return counts_; }

private:
    std::string name_;
    TransitionCounts counts_;
};

}  // namespace cmdp::agents
