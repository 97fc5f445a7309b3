#pragma once

#include <Eigen/Dense>

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cmdp {

/// Tolerances shared by every module.
namespace tol {
inline constexpr double kResidual = 1e-8;  // linear-algebra residuals
inline constexpr double kSimplex = 1e-9;   // probability-simplex membership
inline constexpr double kRank = 1e-10;     // pivot threshold for singularity tests
}  // namespace tol

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Thrown when a policy evaluation needs a single recurrent class (or an
/// irreducible aperiodic chain) and the induced chain does not have one.
class NonUnichainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense S x A x S transition tensor, row (s, a) is p(.|s, a).
class Kernel {
public:
    Kernel() = default;
    Kernel(int n_states, int n_actions);

    static Kernel uniform(int n_states, int n_actions);

    int n_states() const { return n_states_; }
    int n_actions() const { return n_actions_; }

    double& operator()(int s, int a, int next) { return data_[offset(s, a) + next]; }
    double operator()(int s, int a, int next) const { return data_[offset(s, a) + next]; }

    std::span<double> row(int s, int a) { return {data_.data() + offset(s, a), size_t(n_states_)}; }
    std::span<const double> row(int s, int a) const {
        return {data_.data() + offset(s, a), size_t(n_states_)};
    }

    const std::vector<double>& data() const { return data_; }

private:
    size_t offset(int s, int a) const { return (size_t(s) * n_actions_ + a) * n_states_; }

    int n_states_ = 0;
    int n_actions_ = 0;
    std::vector<double> data_;
};

/// Cost components c_0..c_m, each an S x A table.
class CostTable {
public:
    CostTable() = default;
    CostTable(int n_components, int n_states, int n_actions);

    int n_components() const { return n_components_; }
    int n_states() const { return n_states_; }
    int n_actions() const { return n_actions_; }

    double& operator()(int i, int s, int a) { return data_[offset(i, s, a)]; }
    double operator()(int i, int s, int a) const { return data_[offset(i, s, a)]; }

    const std::vector<double>& data() const { return data_; }

private:
    size_t offset(int i, int s, int a) const {
        return (size_t(i) * n_states_ + s) * n_actions_ + a;
    }

    int n_components_ = 0;
    int n_states_ = 0;
    int n_actions_ = 0;
    std::vector<double> data_;
};

/// Finite constrained MDP: minimize c_0 subject to J(c_i) <= thresholds[i-1].
struct Cmdp {
    Kernel transitions;
    CostTable costs;                 // n_components = n_constraints + 1
    std::vector<double> thresholds;  // one per constraint
    int initial_state = 0;

    int n_states() const { return transitions.n_states(); }
    int n_actions() const { return transitions.n_actions(); }
    int n_constraints() const { return costs.n_components() - 1; }
};

struct Violation {
    std::string field;
    std::vector<int> index;
    std::string message;
};

/// Every broken invariant of `model`; empty when the model is well formed.
std::vector<Violation> validate(const Cmdp& model);

std::string describe(const Violation& v);

/// pi(a|s) as an S x A row-stochastic table.
class StationaryPolicy {
public:
    StationaryPolicy() = default;
    StationaryPolicy(int n_states, int n_actions);

    static StationaryPolicy uniform(int n_states, int n_actions);
    static StationaryPolicy deterministic(std::span<const int> actions, int n_actions);

    int n_states() const { return n_states_; }
    int n_actions() const { return n_actions_; }

    double& operator()(int s, int a) { return probs_[size_t(s) * n_actions_ + a]; }
    double operator()(int s, int a) const { return probs_[size_t(s) * n_actions_ + a]; }

    std::span<const double> row(int s) const {
        return {probs_.data() + size_t(s) * n_actions_, size_t(n_actions_)};
    }

    /// True when every row is a distribution within tol::kSimplex.
    bool is_valid() const;

    bool operator==(const StationaryPolicy&) const = default;

private:
    int n_states_ = 0;
    int n_actions_ = 0;
    std::vector<double> probs_;
};

struct PolicyEvaluation {
    std::vector<double> loss;  // J per cost component
    std::vector<Vector> bias;  // per component, min over states is 0
    Vector stationary;         // q
};

enum class ChainHandling {
    RequireUnichain,  // throw NonUnichainError on a multichain policy
    CesaroFallback,   // use the Cesaro limit matrix; loss is read at initial_state
};

/// P_pi(s, s') = sum_a pi(a|s) p(s'|s, a).
Matrix induced_chain(const Cmdp& model, const StationaryPolicy& policy);

/// Average cost, min-normalized bias and stationary distribution of every
/// cost component.
PolicyEvaluation evaluate_policy(const Cmdp& model, const StationaryPolicy& policy,
                                 ChainHandling handling = ChainHandling::RequireUnichain);

/// Sensitivity of the average cost of component `component` to a kernel
/// change. The bound is ||v_a||_inf * max_{s,a} ||p_b(.|s,a) - p_a(.|s,a)||_1,
/// where v_a is the bias under model_a. Both chains must be irreducible and
/// aperiodic.
struct PerturbationGap {
    double gap = 0.0;
    double bound = 0.0;
};

PerturbationGap loss_perturbation_gap(const Cmdp& model_a, const Cmdp& model_b,
                                      const StationaryPolicy& policy, int component);

/// max over ordered pairs of the expected first-passage time; +inf when some
/// target cannot be reached from some state.
double estimate_hitting_time(const Cmdp& model, const StationaryPolicy& policy);

bool is_irreducible(const Matrix& chain);
/// Period of an irreducible chain (1 means aperiodic).
int chain_period(const Matrix& chain);

struct Diagnostics {
    double span = 0.0;  // max over constraint components of max_s v(s; c_i)
    double hitting_time_estimate = 0.0;
};

Diagnostics diagnose(const Cmdp& model, const StationaryPolicy& policy);

}  // namespace cmdp
