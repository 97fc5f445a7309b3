#pragma once

#include <span>
#include <string>
#include <vector>

/// Narrow linear-programming interface: build rows and columns, solve, read
/// back status and solution. Every problem is `min c'x` with x >= 0.
namespace cmdp::lp {

enum class Sense { LessEqual, GreaterEqual, Equal };

enum class Status { Optimal, Infeasible, Unbounded, NumericalFailure };

const char* to_string(Status status);

struct Term {
    int column;
    double coefficient;
};

class Problem {
public:
    /// Adds a nonnegative column and returns its index.
    int add_column(double cost);
    /// Terms referring to the same column are summed.
    int add_row(std::vector<Term> terms, Sense sense, double rhs);

    int n_columns() const { return int(costs_.size()); }
    int n_rows() const { return int(rows_.size()); }

    double cost(int column) const { return costs_[column]; }
    std::span<const Term> terms(int row) const { return rows_[row].terms; }
    Sense sense(int row) const { return rows_[row].sense; }
    double rhs(int row) const { return rows_[row].rhs; }

    double objective(std::span<const double> x) const;
    /// Largest violation over all rows and nonnegativity bounds.
    double max_violation(std::span<const double> x) const;

private:
    struct Row {
        std::vector<Term> terms;
        Sense sense;
        double rhs;
    };
    std::vector<double> costs_;
    std::vector<Row> rows_;
};

struct Options {
    double feasibility_tol = 1e-7;
    double optimality_tol = 1e-7;
    double pivot_tol = 1e-9;
    long max_iterations = 0;  // 0 picks a bound from the problem size
};

struct Solution {
    Status status = Status::NumericalFailure;
    std::vector<double> x;          // filled when Optimal
    double objective = 0.0;
    double phase1_objective = 0.0;  // sum of artificials at the end of phase 1
    long iterations = 0;
    std::string message;
};

class Solver {
public:
    virtual ~Solver() = default;
    virtual Solution solve(const Problem& problem, const Options& options) const = 0;
};

/// Two-phase primal simplex on a dense tableau. Dantzig pricing with a Harris
/// ratio test. Stalls are broken by a temporary rhs shift, then Bland's rule.
/// The tableau is refactored from the original rows when it drifts, and a few
/// dual pivots clean up basic values that come out slightly negative.
class DenseSimplex final : public Solver {
public:
    Solution solve(const Problem& problem, const Options& options) const override;
};

const Solver& default_solver();

}  // namespace cmdp::lp
