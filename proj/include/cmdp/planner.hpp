#pragma once

#include "cmdp/core.hpp"
#include "cmdp/lp.hpp"

#include <optional>
#include <string>
#include <vector>

namespace cmdp {

/// Long-run state-action visitation frequencies, mu(s, a).
class OccupancyMeasure {
public:
    OccupancyMeasure() = default;
    OccupancyMeasure(int n_states, int n_actions);

    int n_states() const { return n_states_; }
    int n_actions() const { return n_actions_; }

    double& operator()(int s, int a) { return mu_[size_t(s) * n_actions_ + a]; }
    double operator()(int s, int a) const { return mu_[size_t(s) * n_actions_ + a]; }

    double total() const;
    double state_mass(int s) const;
    /// sum_{s,a} mu(s, a) c_i(s, a)
    double expected_cost(const CostTable& costs, int component) const;
    /// max_s |sum_a mu(s,a) - sum_{s',a} mu(s',a) p(s|s',a)|
    double flow_residual(const Kernel& kernel) const;

private:
    int n_states_ = 0;
    int n_actions_ = 0;
    std::vector<double> mu_;
};

enum class PlanStatus { Optimal, Infeasible, NumericalFailure };

const char* to_string(PlanStatus status);

struct PlanOutcome {
    PlanStatus status = PlanStatus::NumericalFailure;
    std::optional<OccupancyMeasure> occupancy;  // present iff Optimal
    double objective = 0.0;                     // sum mu c_0 when Optimal
    double phase1_objective = 0.0;              // > 0 certifies infeasibility
    std::string message;
};

/// Tolerances an Optimal plan is checked against before it is returned.
namespace plan_tol {
inline constexpr double kOccupancy = 1e-7;
}

/// Occupancy-measure LP: min sum mu c_0 s.t. sum mu c_i <= tau_i, flow
/// conservation under the model kernel, mu >= 0, sum mu = 1.
PlanOutcome solve_cmdp_lp(const Cmdp& model, const lp::Solver& solver = lp::default_solver());

/// pi(a|s) = mu(s,a) / sum_a' mu(s,a'); states without mass get the uniform row.
StationaryPolicy policy_from_occupancy(const OccupancyMeasure& mu);

/// L1 ball of plausible kernels around an empirical center.
struct ConfidenceSet {
    Kernel center;
    std::vector<double> radii;  // indexed s * A + a

    double radius(int s, int a) const { return radii[size_t(s) * center.n_actions() + a]; }
};

/// Joint optimization over occupancy and a candidate kernel inside the
/// confidence set, linearized through z(s,a,s') = mu(s,a) p'(s'|s,a). The
/// reported objective is the loss sum mu c_0, so maximizing the reward
/// 1 - c_0 is the same program. The candidate kernel rows are returned in
/// `optimistic_kernel` when Optimal (rows without mass copy the center).
struct ExtendedPlanOutcome : PlanOutcome {
    std::optional<Kernel> optimistic_kernel;
};

ExtendedPlanOutcome solve_extended_lp(const ConfidenceSet& set, const CostTable& costs,
                                      const std::vector<double>& thresholds,
                                      const lp::Solver& solver = lp::default_solver());

/// sqrt(14 S log(2 A t / delta) / max(1, N)).
double confidence_radius(long long n_visits, double t, double delta, int n_states, int n_actions);

}  // namespace cmdp
