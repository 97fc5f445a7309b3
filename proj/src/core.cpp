#include "cmdp/core.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <sstream>

namespace cmdp {

Kernel::Kernel(int n_states, int n_actions)
    : n_states_(n_states), n_actions_(n_actions),
      data_(size_t(n_states) * n_actions * n_states, 0.0) {}

Kernel Kernel::uniform(int n_states, int n_actions) {
    Kernel k(n_states, n_actions);
    std::fill(k.data_.begin(), k.data_.end(), 1.0 / n_states);
    return k;
}

CostTable::CostTable(int n_components, int n_states, int n_actions)
    : n_components_(n_components), n_states_(n_states), n_actions_(n_actions),
      data_(size_t(n_components) * n_states * n_actions, 0.0) {}

StationaryPolicy::StationaryPolicy(int n_states, int n_actions)
    : n_states_(n_states), n_actions_(n_actions), probs_(size_t(n_states) * n_actions, 0.0) {}

StationaryPolicy StationaryPolicy::uniform(int n_states, int n_actions) {
    StationaryPolicy p(n_states, n_actions);
    std::fill(p.probs_.begin(), p.probs_.end(), 1.0 / n_actions);
    return p;
}

StationaryPolicy StationaryPolicy::deterministic(std::span<const int> actions, int n_actions) {
    StationaryPolicy p(int(actions.size()), n_actions);
    for (size_t s = 0; s < actions.size(); ++s) {
        if (actions[s] < 0 || actions[s] >= n_actions)
            throw std::out_of_range("deterministic policy: action index out of range");
        p(int(s), actions[s]) = 1.0;
    }
    return p;
}

bool StationaryPolicy::is_valid() const {
    for (int s = 0; s < n_states_; ++s) {
        double total = 0.0;
        for (double x : row(s)) {
            if (!(x >= 0.0)) return false;
            total += x;
        }
        if (std::abs(total - 1.0) > tol::kSimplex) return false;
    }
    return n_states_ > 0 && n_actions_ > 0;
}

std::string describe(const Violation& v) {
    std::ostringstream out;
    out << v.field;
    if (!v.index.empty()) {
        out << "[";
        for (size_t i = 0; i < v.index.size(); ++i) out << (i ? "," : "") << v.index[i];
        out << "]";
    }
    out << ": " << v.message;
    return out.str();
}

std::vector<Violation> validate(const Cmdp& model) {
    std::vector<Violation> out;
    const int S = model.n_states();
    const int A = model.n_actions();
    if (S <= 0) out.push_back({"n_states", {}, "must be positive"});
    if (A <= 0) out.push_back({"n_actions", {}, "must be positive"});
    if (!out.empty()) return out;

    if (model.costs.n_components() < 1)
        out.push_back({"costs", {}, "need at least the main cost component"});
    if (model.costs.n_states() != S || model.costs.n_actions() != A)
        out.push_back({"costs", {}, "shape does not match the transition kernel"});
    if (int(model.thresholds.size()) != model.n_constraints())
        out.push_back({"thresholds", {}, "one threshold per constraint component expected"});
    if (model.initial_state < 0 || model.initial_state >= S)
        out.push_back({"initial_state", {model.initial_state}, "out of range"});
    if (!out.empty()) return out;

    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
            double total = 0.0;
            for (int next = 0; next < S; ++next) {
                const double p = model.transitions(s, a, next);
                if (!(p >= 0.0))
                    out.push_back({"transitions", {s, a, next}, "negative probability"});
                total += p;
            }
            if (!(std::abs(total - 1.0) <= tol::kSimplex))
                out.push_back({"transitions", {s, a}, "row sums to " + std::to_string(total)});
        }
    }
    for (int i = 0; i < model.costs.n_components(); ++i)
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) {
                const double c = model.costs(i, s, a);
                if (!(c >= 0.0 && c <= 1.0))
                    out.push_back({"costs", {i, s, a}, "cost outside [0,1]"});
            }
    for (size_t i = 0; i < model.thresholds.size(); ++i) {
        const double t = model.thresholds[i];
        if (!(t >= 0.0 && t <= 1.0))
            out.push_back({"thresholds", {int(i)}, "threshold outside [0,1]"});
    }
    return out;
}

Matrix induced_chain(const Cmdp& model, const StationaryPolicy& policy) {
    const int S = model.n_states();
    const int A = model.n_actions();
    Matrix P = Matrix::Zero(S, S);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            const double w = policy(s, a);
            if (w == 0.0) continue;
            const auto row = model.transitions.row(s, a);
            for (int next = 0; next < S; ++next) P(s, next) += w * row[next];
        }
    return P;
}

namespace {

Vector policy_cost(const Cmdp& model, const StationaryPolicy& policy, int component) {
    const int S = model.n_states();
    Vector c = Vector::Zero(S);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < model.n_actions(); ++a)
            c(s) += policy(s, a) * model.costs(component, s, a);
    return c;
}

void min_normalize(Vector& v) { v.array() -= v.minCoeff(); }

// Stationary distribution from the lazy chain (P + I)/2, which shares the
// stationary distribution of P but is aperiodic. The balance equations with
// the last one replaced by sum(q) = 1 are nonsingular iff the chain is unichain.
bool solve_stationary(const Matrix& P, Vector& q) {
    const int S = int(P.rows());
    const Matrix lazy = 0.5 * (P + Matrix::Identity(S, S));
    Matrix M = Matrix::Identity(S, S) - lazy.transpose();
    M.row(S - 1).setOnes();
    Vector rhs = Vector::Zero(S);
    rhs(S - 1) = 1.0;
    Eigen::FullPivLU<Matrix> lu(M);
    lu.setThreshold(tol::kRank);
    if (lu.rank() < S) return false;
    q = lu.solve(rhs);
    return true;
}

Matrix cesaro_limit(const Matrix& P) {
    const int S = int(P.rows());
    Matrix L = 0.5 * (P + Matrix::Identity(S, S));
    for (int k = 0; k < 200; ++k) {
        Matrix next = L * L;
        const double change = (next - L).cwiseAbs().maxCoeff();
        L = std::move(next);
        if (change < 1e-15) break;
    }
    return L;
}

}  // namespace

PolicyEvaluation evaluate_policy(const Cmdp& model, const StationaryPolicy& policy,
                                 ChainHandling handling) {
    const int S = model.n_states();
    const int components = model.costs.n_components();
    const Matrix P = induced_chain(model, policy);

    PolicyEvaluation out;
    out.loss.resize(components);
    out.bias.resize(components);

    Vector q;
    if (solve_stationary(P, q)) {
        q = q.cwiseMax(0.0);
        q /= q.sum();
        out.stationary = q;

        int pin = 0;
        q.maxCoeff(&pin);
        Matrix M = Matrix::Identity(S, S) - P;
        M.row(pin).setZero();
        M(pin, pin) = 1.0;
        Eigen::PartialPivLU<Matrix> lu(M);
        for (int i = 0; i < components; ++i) {
            const Vector c = policy_cost(model, policy, i);
            const double J = q.dot(c);
            Vector rhs = c.array() - J;
            rhs(pin) = 0.0;
            Vector v = lu.solve(rhs);
            min_normalize(v);
            out.loss[i] = J;
            out.bias[i] = std::move(v);
        }
        return out;
    }

    if (handling == ChainHandling::RequireUnichain)
        throw NonUnichainError("evaluate_policy: induced chain has more than one recurrent class");

    // Multichain: gain g = P* c depends on the start; bias from the deviation
    // matrix (I - P + P*)^-1 (I - P*).
    const Matrix Pstar = cesaro_limit(P);
    const Matrix I = Matrix::Identity(S, S);
    Eigen::PartialPivLU<Matrix> lu(I - P + Pstar);
    out.stationary = Pstar.row(model.initial_state).transpose();
    for (int i = 0; i < components; ++i) {
        const Vector c = policy_cost(model, policy, i);
        const Vector gain = Pstar * c;
        Vector v = lu.solve(c - gain);
        min_normalize(v);
        out.loss[i] = gain(model.initial_state);
        out.bias[i] = std::move(v);
    }
    return out;
}

bool is_irreducible(const Matrix& chain) {
    const int S = int(chain.rows());
    auto reaches_all = [&](bool forward) {
        std::vector<char> seen(S, 0);
        std::deque<int> queue{0};
        seen[0] = 1;
        int count = 1;
        while (!queue.empty()) {
            const int u = queue.front();
            queue.pop_front();
            for (int v = 0; v < S; ++v) {
                const double w = forward ? chain(u, v) : chain(v, u);
                if (w > 0.0 && !seen[v]) {
                    seen[v] = 1;
                    ++count;
                    queue.push_back(v);
                }
            }
        }
        return count == S;
    };
    return reaches_all(true) && reaches_all(false);
}

int chain_period(const Matrix& chain) {
    const int S = int(chain.rows());
    std::vector<int> level(S, -1);
    std::deque<int> queue{0};
    level[0] = 0;
    int period = 0;
    while (!queue.empty()) {
        const int u = queue.front();
        queue.pop_front();
        for (int v = 0; v < S; ++v) {
            if (!(chain(u, v) > 0.0)) continue;
            if (level[v] < 0) {
                level[v] = level[u] + 1;
                queue.push_back(v);
            } else {
                period = std::gcd(period, std::abs(level[u] + 1 - level[v]));
            }
        }
    }
    return period;
}

PerturbationGap loss_perturbation_gap(const Cmdp& model_a, const Cmdp& model_b,
                                      const StationaryPolicy& policy, int component) {
    if (model_a.n_states() != model_b.n_states() || model_a.n_actions() != model_b.n_actions() ||
        model_a.costs.data() != model_b.costs.data())
        throw std::invalid_argument("loss_perturbation_gap: models must share S, A and costs");
    if (component < 0 || component >= model_a.costs.n_components())
        throw std::out_of_range("loss_perturbation_gap: component out of range");

    for (const Cmdp* m : {&model_a, &model_b}) {
        const Matrix P = induced_chain(*m, policy);
        if (!is_irreducible(P) || chain_period(P) != 1)
            throw NonUnichainError("loss_perturbation_gap: chain is not irreducible and aperiodic");
    }

    const auto eval_a = evaluate_policy(model_a, policy);
    const auto eval_b = evaluate_policy(model_b, policy);

    double max_l1 = 0.0;
    for (int s = 0; s < model_a.n_states(); ++s)
        for (int a = 0; a < model_a.n_actions(); ++a) {
            double l1 = 0.0;
            for (int next = 0; next < model_a.n_states(); ++next)
                l1 += std::abs(model_b.transitions(s, a, next) - model_a.transitions(s, a, next));
            max_l1 = std::max(max_l1, l1);
        }

    return {eval_b.loss[component] - eval_a.loss[component],
            eval_a.bias[component].cwiseAbs().maxCoeff() * max_l1};
}

double estimate_hitting_time(const Cmdp& model, const StationaryPolicy& policy) {
    const Matrix P = induced_chain(model, policy);
    const int S = int(P.rows());
    Vector q;
    if (!solve_stationary(P, q))
        throw NonUnichainError("estimate_hitting_time: induced chain is not unichain");

    double worst = 0.0;
    for (int target = 0; target < S; ++target) {
        // Reverse reachability: every state must be able to reach the target.
        std::vector<char> seen(S, 0);
        std::deque<int> queue{target};
        seen[target] = 1;
        int count = 1;
        while (!queue.empty()) {
            const int v = queue.front();
            queue.pop_front();
            for (int u = 0; u < S; ++u)
                if (P(u, v) > 0.0 && !seen[u]) {
                    seen[u] = 1;
                    ++count;
                    queue.push_back(u);
                }
        }
        if (count < S) return std::numeric_limits<double>::infinity();
        if (S == 1) continue;

        // h(i) = 1 + sum_{x != target} P(i, x) h(x) over i != target.
        std::vector<int> others;
        for (int s = 0; s < S; ++s)
            if (s != target) others.push_back(s);
        const int n = S - 1;
        Matrix M(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                M(i, j) = (i == j ? 1.0 : 0.0) - P(others[i], others[j]);
        const Vector h = Eigen::PartialPivLU<Matrix>(M).solve(Vector::Ones(n));
        worst = std::max(worst, h.maxCoeff());
    }
    return worst;
}

Diagnostics diagnose(const Cmdp& model, const StationaryPolicy& policy) {
    Diagnostics d;
    const auto eval = evaluate_policy(model, policy);
    for (int i = 1; i < model.costs.n_components(); ++i)
        d.span = std::max(d.span, eval.bias[i].maxCoeff());
    d.hitting_time_estimate = estimate_hitting_time(model, policy);
    return d;
}

}  // namespace cmdp
