#include "cmdp/planner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cmdp {

OccupancyMeasure::OccupancyMeasure(int n_states, int n_actions)
    : n_states_(n_states), n_actions_(n_actions), mu_(size_t(n_states) * n_actions, 0.0) {}

double OccupancyMeasure::total() const { return std::accumulate(mu_.begin(), mu_.end(), 0.0); }

double OccupancyMeasure::state_mass(int s) const {
    double m = 0.0;
    for (int a = 0; a < n_actions_; ++a) m += (*this)(s, a);
    return m;
}

double OccupancyMeasure::expected_cost(const CostTable& costs, int component) const {
    double total = 0.0;
    for (int s = 0; s < n_states_; ++s)
        for (int a = 0; a < n_actions_; ++a) total += (*this)(s, a) * costs(component, s, a);
    return total;
}

double OccupancyMeasure::flow_residual(const Kernel& kernel) const {
    std::vector<double> inflow(n_states_, 0.0);
    for (int s = 0; s < n_states_; ++s)
        for (int a = 0; a < n_actions_; ++a) {
            const double w = (*this)(s, a);
            if (w == 0.0) continue;
            const auto row = kernel.row(s, a);
            for (int next = 0; next < n_states_; ++next) inflow[next] += w * row[next];
        }
    double worst = 0.0;
    for (int s = 0; s < n_states_; ++s) worst = std::max(worst, std::abs(state_mass(s) - inflow[s]));
    return worst;
}

const char* to_string(PlanStatus status) {
    switch (status) {
    case PlanStatus::Optimal: return "Optimal";
    case PlanStatus::Infeasible: return "Infeasible";
    case PlanStatus::NumericalFailure: return "NumericalFailure";
    }
    return "Unknown";
}

namespace {

void add_cost_rows(lp::Problem& prog, const CostTable& costs, const std::vector<double>& thresholds,
                   int S, int A) {
    for (int i = 1; i < costs.n_components(); ++i) {
        std::vector<lp::Term> terms;
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a)
                if (costs(i, s, a) != 0.0) terms.push_back({s * A + a, costs(i, s, a)});
        prog.add_row(std::move(terms), lp::Sense::LessEqual, thresholds[i - 1]);
    }
}

void add_normalization_row(lp::Problem& prog, int S, int A) {
    std::vector<lp::Term> terms;
    for (int j = 0; j < S * A; ++j) terms.push_back({j, 1.0});
    prog.add_row(std::move(terms), lp::Sense::Equal, 1.0);
}

// Shared post-processing: status mapping and the occupancy invariants.
template <class Outcome>
bool finish(Outcome& out, const lp::Solution& sol, int S, int A, const CostTable& costs,
            const std::vector<double>& thresholds) {
    out.phase1_objective = sol.phase1_objective;
    out.message = sol.message;
    switch (sol.status) {
    case lp::Status::Infeasible: out.status = PlanStatus::Infeasible; return false;
    case lp::Status::Unbounded:
    case lp::Status::NumericalFailure: out.status = PlanStatus::NumericalFailure; return false;
    case lp::Status::Optimal: break;
    }
    OccupancyMeasure mu(S, A);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) mu(s, a) = sol.x[size_t(s) * A + a];

    if (std::abs(mu.total() - 1.0) > plan_tol::kOccupancy) {
        out.status = PlanStatus::NumericalFailure;
        out.message = "occupancy does not sum to one";
        return false;
    }
    for (int i = 1; i < costs.n_components(); ++i)
        if (mu.expected_cost(costs, i) > thresholds[i - 1] + plan_tol::kOccupancy) {
            out.status = PlanStatus::NumericalFailure;
            out.message = "occupancy violates cost constraint " + std::to_string(i);
            return false;
        }
    out.status = PlanStatus::Optimal;
    out.objective = mu.expected_cost(costs, 0);
    out.occupancy = std::move(mu);
    return true;
}

}  // namespace

PlanOutcome solve_cmdp_lp(const Cmdp& model, const lp::Solver& solver) {
    const int S = model.n_states();
    const int A = model.n_actions();

    lp::Problem prog;
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) prog.add_column(model.costs(0, s, a));
    add_cost_rows(prog, model.costs, model.thresholds, S, A);

    // Flow conservation; the last state's row is implied by the others plus
    // normalization, so it is left out.
    std::vector<double> coeff(size_t(S) * A);
    for (int target = 0; target + 1 < S; ++target) {
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a)
                coeff[size_t(s) * A + a] =
                    (s == target ? 1.0 : 0.0) - model.transitions(s, a, target);
        std::vector<lp::Term> terms;
        for (int j = 0; j < S * A; ++j)
            if (coeff[j] != 0.0) terms.push_back({j, coeff[j]});
        prog.add_row(std::move(terms), lp::Sense::Equal, 0.0);
    }
    add_normalization_row(prog, S, A);

    PlanOutcome out;
    const auto sol = solver.solve(prog, lp::Options{});
    if (finish(out, sol, S, A, model.costs, model.thresholds) &&
        out.occupancy->flow_residual(model.transitions) > plan_tol::kOccupancy) {
        out.status = PlanStatus::NumericalFailure;
        out.message = "occupancy violates flow conservation";
        out.occupancy.reset();
    }
    return out;
}

StationaryPolicy policy_from_occupancy(const OccupancyMeasure& mu) {
    const int S = mu.n_states();
    const int A = mu.n_actions();
    StationaryPolicy pi(S, A);
    for (int s = 0; s < S; ++s) {
        double mass = 0.0;
        for (int a = 0; a < A; ++a) mass += std::max(0.0, mu(s, a));
        for (int a = 0; a < A; ++a)
            pi(s, a) = mass > 1e-12 ? std::max(0.0, mu(s, a)) / mass : 1.0 / A;
    }
    return pi;
}

ExtendedPlanOutcome solve_extended_lp(const ConfidenceSet& set, const CostTable& costs,
                                      const std::vector<double>& thresholds,
                                      const lp::Solver& solver) {
    const Kernel& center = set.center;
    const int S = center.n_states();
    const int A = center.n_actions();

    // Columns: mu(s,a); for each pair with a positive radius the flow
    // z(s,a,.) it sends to every next state; for pairs whose ball does not
    // cover the whole simplex also the deficit e(s,a,s') >= mu p(s') - z(s')
    // on the support of the center row. Rows of z and mu p both sum to mu, so
    // ||z - mu p||_1 = 2 sum e and the budget reads sum e <= (beta / 2) mu.
    lp::Problem prog;
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) prog.add_column(costs(0, s, a));

    std::vector<int> z_base(size_t(S) * A, -1);
    std::vector<std::vector<std::pair<int, int>>> deficit_cols(size_t(S) * A);  // (next, column)
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            const size_t sa = size_t(s) * A + a;
            const double radius = set.radius(s, a);
            if (!(radius > 0.0)) continue;
            z_base[sa] = prog.n_columns();
            for (int next = 0; next < S; ++next) prog.add_column(0.0);
            if (radius >= 2.0) continue;
            for (int next = 0; next < S; ++next)
                if (center(s, a, next) > 0.0) deficit_cols[sa].push_back({next, prog.add_column(0.0)});
        }

    add_cost_rows(prog, costs, thresholds, S, A);

    for (int target = 0; target + 1 < S; ++target) {
        std::vector<lp::Term> terms;
        for (int a = 0; a < A; ++a) terms.push_back({target * A + a, 1.0});
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) {
                const size_t sa = size_t(s) * A + a;
                if (z_base[sa] >= 0) terms.push_back({z_base[sa] + target, -1.0});
                else if (center(s, a, target) != 0.0) terms.push_back({int(sa), -center(s, a, target)});
            }
        prog.add_row(std::move(terms), lp::Sense::Equal, 0.0);
    }
    add_normalization_row(prog, S, A);

    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            const size_t sa = size_t(s) * A + a;
            if (z_base[sa] < 0) continue;
            std::vector<lp::Term> mass{{int(sa), -1.0}};
            for (int next = 0; next < S; ++next) mass.push_back({z_base[sa] + next, 1.0});
            prog.add_row(std::move(mass), lp::Sense::Equal, 0.0);
            if (deficit_cols[sa].empty()) continue;
            std::vector<lp::Term> budget{{int(sa), -set.radius(s, a) / 2.0}};
            for (auto [next, col] : deficit_cols[sa]) {
                budget.push_back({col, 1.0});
                // mu p(next) - z(next) - e(next) <= 0
                prog.add_row({{int(sa), center(s, a, next)}, {z_base[sa] + next, -1.0}, {col, -1.0}},
                             lp::Sense::LessEqual, 0.0);
            }
            prog.add_row(std::move(budget), lp::Sense::LessEqual, 0.0);
        }

    ExtendedPlanOutcome out;
    const auto sol = solver.solve(prog, lp::Options{});
    if (!finish(out, sol, S, A, costs, thresholds)) return out;

    const auto& mu = *out.occupancy;
    Kernel candidate = center;
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            const size_t sa = size_t(s) * A + a;
            if (z_base[sa] < 0 || mu(s, a) <= 1e-12) continue;
            double total = 0.0;
            for (int next = 0; next < S; ++next) total += std::max(0.0, sol.x[z_base[sa] + next]);
            if (!(total > 0.0)) continue;
            for (int next = 0; next < S; ++next)
                candidate(s, a, next) = std::max(0.0, sol.x[z_base[sa] + next]) / total;
        }
    if (mu.flow_residual(candidate) > plan_tol::kOccupancy) {
        out.status = PlanStatus::NumericalFailure;
        out.message = "occupancy violates flow conservation under the candidate kernel";
        out.occupancy.reset();
        return out;
    }
    out.optimistic_kernel = std::move(candidate);
    return out;
}

double confidence_radius(long long n_visits, double t, double delta, int n_states, int n_actions) {
    const double n = std::max<long long>(1, n_visits);
    return std::sqrt(14.0 * n_states * std::log(2.0 * n_actions * t / delta) / n);
}

}  // namespace cmdp
