#include "cmdp/lp.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace cmdp::lp {

const char* to_string(Status status) {
    switch (status) {
    case Status::Optimal: return "Optimal";
    case Status::Infeasible: return "Infeasible";
    case Status::Unbounded: return "Unbounded";
    case Status::NumericalFailure: return "NumericalFailure";
    }
    return "Unknown";
}

int Problem::add_column(double cost) {
    costs_.push_back(cost);
    return int(costs_.size()) - 1;
}

int Problem::add_row(std::vector<Term> terms, Sense sense, double rhs) {
    for (const auto& t : terms)
        if (t.column < 0 || t.column >= n_columns())
            throw std::out_of_range("lp::Problem::add_row: column index out of range");
    rows_.push_back({std::move(terms), sense, rhs});
    return int(rows_.size()) - 1;
}

double Problem::objective(std::span<const double> x) const {
    double z = 0.0;
    for (int j = 0; j < n_columns(); ++j) z += costs_[j] * x[j];
    return z;
}

double Problem::max_violation(std::span<const double> x) const {
    double worst = 0.0;
    for (double v : x) worst = std::max(worst, -v);
    for (const auto& row : rows_) {
        double lhs = 0.0;
        for (const auto& t : row.terms) lhs += t.coefficient * x[t.column];
        const double diff = lhs - row.rhs;
        switch (row.sense) {
        case Sense::LessEqual: worst = std::max(worst, diff); break;
        case Sense::GreaterEqual: worst = std::max(worst, -diff); break;
        case Sense::Equal: worst = std::max(worst, std::abs(diff)); break;
        }
    }
    return worst;
}

namespace {

constexpr double kHarris = 1e-9;
constexpr double kDropTol = 1e-13;
constexpr int kStallLimit = 50;
constexpr int kCheckEvery = 50;
constexpr double kDriftTol = 1e-10;

enum class Outcome { Optimal, Unbounded, IterationLimit };

using SparseMatrix = Eigen::SparseMatrix<double>;

// Submatrix of `a` made of the given rows (all when empty) and columns.
SparseMatrix gather(const SparseMatrix& a, const std::vector<int>& rows, const std::vector<int>& cols) {
    std::vector<int> position(a.rows(), rows.empty() ? 0 : -1);
    if (rows.empty())
        for (int i = 0; i < a.rows(); ++i) position[i] = i;
    else
        for (size_t p = 0; p < rows.size(); ++p) position[rows[p]] = int(p);
    std::vector<Eigen::Triplet<double>> entries;
    for (size_t c = 0; c < cols.size(); ++c)
        for (SparseMatrix::InnerIterator it(a, cols[c]); it; ++it)
            if (position[it.row()] >= 0) entries.emplace_back(position[it.row()], int(c), it.value());
    SparseMatrix out(rows.empty() ? a.rows() : Eigen::Index(rows.size()), Eigen::Index(cols.size()));
    out.setFromTriplets(entries.begin(), entries.end());
    return out;
}

// Sparse LU of a square basis matrix.
class BasisFactor {
public:
    explicit BasisFactor(const SparseMatrix& B) {
        lu_.analyzePattern(B);
        lu_.factorize(B);
    }
    bool ok() const { return lu_.info() == Eigen::Success; }
    template <class Rhs>
    Eigen::MatrixXd solve(const Rhs& rhs) {
        return lu_.solve(rhs);
    }

private:
    Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu_;
};

class Tableau {
public:
    Tableau(int rows, int columns)
        : rows_(rows), width_(columns + 1), data_(size_t(rows + 1) * width_, 0.0),
          basis_(rows, -1) {
        nonzeros_.reserve(width_);
    }

    int rows() const { return rows_; }
    int columns() const { return width_ - 1; }

    double* row(int i) { return data_.data() + size_t(i) * width_; }
    const double* row(int i) const { return data_.data() + size_t(i) * width_; }
    double& at(int i, int j) { return row(i)[j]; }
    double at(int i, int j) const { return row(i)[j]; }
    double& rhs(int i) { return row(i)[width_ - 1]; }
    double rhs(int i) const { return row(i)[width_ - 1]; }

    // Objective row is stored below the constraint rows: reduced costs, and
    // minus the current objective value in the rhs slot.
    double* objective_row() { return row(rows_); }
    double objective_value() const { return -rhs(rows_); }

    int& basis(int i) { return basis_[i]; }
    int basis(int i) const { return basis_[i]; }

    void pivot(int r, int q) {
        double* pr = row(r);
        const double inv = 1.0 / pr[q];
        nonzeros_.clear();
        for (int j = 0; j < width_; ++j) {
            if (pr[j] == 0.0) continue;
            pr[j] *= inv;
            nonzeros_.push_back(j);
        }
        pr[q] = 1.0;
        for (int i = 0; i <= rows_; ++i) {
            if (i == r) continue;
            double* pi = row(i);
            const double f = pi[q];
            if (f == 0.0) continue;
            for (int j : nonzeros_) {
                double v = pi[j] - f * pr[j];
                pi[j] = std::abs(v) < kDropTol ? 0.0 : v;
            }
            pi[q] = 0.0;
            if (i < rows_ && pi[width_ - 1] < 0.0 && pi[width_ - 1] > -kHarris) pi[width_ - 1] = 0.0;
        }
        basis_[r] = q;
    }

private:
    int rows_;
    int width_;
    std::vector<double> data_;
    std::vector<int> basis_;
    std::vector<int> nonzeros_;
};

// `stalled` is offered the first chance to break a degenerate stall (it
// returns true when it changed the tableau); Bland pricing is the fallback.
template <class Allowed, class Maintain, class Stalled>
Outcome run_simplex(Tableau& T, Allowed allowed, Maintain maintain, Stalled stalled, const Options& opt,
                    long max_iterations, long& iterations) {
    const int m = T.rows();
    const int n = T.columns();
    double best = T.objective_value();
    int stall = 0;
    bool bland = false;

    while (true) {
        if (iterations >= max_iterations) return Outcome::IterationLimit;
        const double* d = T.objective_row();

        int q = -1;
        if (!bland) {
            double most = -opt.optimality_tol;
            for (int j = 0; j < n; ++j)
                if (d[j] < most && allowed(j)) {
                    most = d[j];
                    q = j;
                }
        } else {
            for (int j = 0; j < n; ++j)
                if (d[j] < -opt.optimality_tol && allowed(j)) {
                    q = j;
                    break;
                }
        }
        if (q < 0) return Outcome::Optimal;

        // Harris two-pass ratio test; among the near-tied rows the largest
        // pivot element wins, in both pricing modes.
        double theta_max = std::numeric_limits<double>::infinity();
        for (int i = 0; i < m; ++i) {
            const double a = T.at(i, q);
            if (a > opt.pivot_tol) theta_max = std::min(theta_max, (std::max(T.rhs(i), 0.0) + kHarris) / a);
        }
        if (!std::isfinite(theta_max)) return Outcome::Unbounded;
        int r = -1;
        double best_a = 0.0;
        for (int i = 0; i < m; ++i) {
            const double a = T.at(i, q);
            if (a > opt.pivot_tol && std::max(T.rhs(i), 0.0) / a <= theta_max && a > best_a) {
                best_a = a;
                r = i;
            }
        }

        T.pivot(r, q);
        ++iterations;
        if (iterations % kCheckEvery == 0) maintain();

        const double z = T.objective_value();
        if (z < best - 1e-12 * (1.0 + std::abs(best))) {
            best = z;
            stall = 0;
            bland = false;
        } else if (++stall > kStallLimit) {
            if (!bland && stalled()) {
                stall = 0;
                best = T.objective_value();
            } else {
                bland = true;
            }
        }
    }
}

}  // namespace

Solution DenseSimplex::solve(const Problem& problem, const Options& opt) const {
    const int n = problem.n_columns();
    const int m = problem.n_rows();

    // Standard form: rows with b >= 0, one slack per inequality, one artificial
    // per row that has no ready-made basic slack.
    std::vector<double> sign(m, 1.0);
    std::vector<Sense> sense(m);
    std::vector<int> slack_col(m, -1), art_col(m, -1);
    int n_slack = 0;
    for (int i = 0; i < m; ++i) {
        Sense s = problem.sense(i);
        if (problem.rhs(i) < 0.0) {
            sign[i] = -1.0;
            if (s == Sense::LessEqual) s = Sense::GreaterEqual;
            else if (s == Sense::GreaterEqual) s = Sense::LessEqual;
        }
        sense[i] = s;
        if (s != Sense::Equal) slack_col[i] = n + n_slack++;
    }
    int n_art = 0;
    for (int i = 0; i < m; ++i)
        if (sense[i] != Sense::LessEqual) art_col[i] = n + n_slack + n_art++;
    const int total = n + n_slack + n_art;
    const int first_art = n + n_slack;
    auto is_art = [first_art](int j) { return j >= first_art; };

    Tableau T(m, total);
    for (int i = 0; i < m; ++i) {
        for (const auto& t : problem.terms(i)) T.at(i, t.column) += sign[i] * t.coefficient;
        if (slack_col[i] >= 0) T.at(i, slack_col[i]) = sense[i] == Sense::LessEqual ? 1.0 : -1.0;
        if (art_col[i] >= 0) T.at(i, art_col[i]) = 1.0;
        T.rhs(i) = sign[i] * problem.rhs(i);
        T.basis(i) = art_col[i] >= 0 ? art_col[i] : slack_col[i];
    }
    // Standard-form copy for the final basis refinement.
    Eigen::MatrixXd A0(m, total);
    Eigen::VectorXd b0(m);
    Eigen::VectorXd b_cur;  // b0 plus the anti-degeneracy shift while one is active
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < total; ++j) A0(i, j) = T.at(i, j);
        b0(i) = T.rhs(i);
    }
    const SparseMatrix A0s = A0.sparseView();
    b_cur = b0;
    bool shifted = false;

    Solution sol;
    std::vector<char> redundant(m, 0);
    int phase = 1;
    auto phase_cost = [&](int j) {
        if (phase == 1) return is_art(j) ? 1.0 : 0.0;
        return j < n ? problem.cost(j) : 0.0;
    };
    auto drift = [&] {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(total);
        for (int i = 0; i < m; ++i) x(T.basis(i)) = T.rhs(i);
        return (A0s * x - b_cur).cwiseAbs().maxCoeff();
    };
    // Rebuilds the tableau as B^-1 [A | b] from the original rows. Mid-run the
    // basic values are clamped at zero so the primal ratio test stays sound;
    // `exact` keeps their signs for the dual clean-up.
    auto reinvert = [&](bool exact) {
        std::vector<int> cols(m);
        for (int c = 0; c < m; ++c) cols[c] = T.basis(c);
        BasisFactor lu(gather(A0s, {}, cols));
        if (!lu.ok()) return;
        const Eigen::MatrixXd X = lu.solve(A0);
        const Eigen::VectorXd xb = lu.solve(b_cur);
        if (!X.allFinite() || !xb.allFinite()) return;
        double* d = T.objective_row();
        for (int j = 0; j < total; ++j) d[j] = phase_cost(j);
        d[total] = 0.0;
        for (int i = 0; i < m; ++i) {
            double* ri = T.row(i);
            for (int j = 0; j < total; ++j) ri[j] = std::abs(X(i, j)) < kDropTol ? 0.0 : X(i, j);
            ri[total] = xb(i) < 0.0 && (!exact || xb(i) > -kHarris) ? 0.0 : xb(i);
            if (redundant[i]) {
                std::fill(ri, ri + first_art, 0.0);
                ri[total] = 0.0;
            }
            for (int j = 0; j < total; ++j) ri[j] = j == T.basis(i) ? 1.0 : ri[j];
            const double cb = phase_cost(T.basis(i));
            if (cb == 0.0) continue;
            for (int j = 0; j <= total; ++j) d[j] -= cb * ri[j];
        }
        for (int i = 0; i < m; ++i) d[T.basis(i)] = 0.0;
    };
    auto maintain = [&] {
        if (drift() > kDriftTol) reinvert(false);
    };
    auto allowed = [&](int j) { return !is_art(j); };
    // Raises every basic value by a small distinct amount so degenerate
    // vertices split apart; b_cur follows so the tableau stays consistent.
    // Undone before optimality is reported.
    std::mt19937_64 shift_rng(0x5eed);
    auto shift = [&] {
        if (shifted) return false;
        std::uniform_real_distribution<double> u(0.5, 1.0);
        double* d = T.objective_row();
        for (int i = 0; i < m; ++i) {
            if (redundant[i]) continue;
            const double delta = 1e-7 * (1.0 + std::abs(T.rhs(i))) * u(shift_rng);
            T.rhs(i) += delta;
            d[total] -= phase_cost(T.basis(i)) * delta;
            for (SparseMatrix::InnerIterator it(A0s, T.basis(i)); it; ++it) b_cur(it.row()) += it.value() * delta;
        }
        shifted = true;
        return true;
    };
    // Dual simplex pivots on rows whose basic value went negative after a
    // refactoring. Returns false when some row admits no entering column.
    auto dual_repair = [&](long max_iterations) {
        for (int k = 0; k < m + 50 && sol.iterations < max_iterations; ++k) {
            int r = -1;
            double worst = -kHarris;
            for (int i = 0; i < m; ++i)
                if (!redundant[i] && T.rhs(i) < worst) {
                    worst = T.rhs(i);
                    r = i;
                }
            if (r < 0) return true;
            const double* d = T.objective_row();
            int q = -1;
            double best_ratio = std::numeric_limits<double>::infinity(), best_a = 0.0;
            for (int j = 0; j < total; ++j) {
                const double a = T.at(r, j);
                if (a >= -opt.pivot_tol || !allowed(j)) continue;
                const double ratio = std::max(d[j], 0.0) / -a;
                if (ratio < best_ratio - 1e-12 || (ratio <= best_ratio + 1e-12 && -a > best_a)) {
                    best_ratio = ratio;
                    best_a = -a;
                    q = j;
                }
            }
            if (q < 0) return false;
            T.pivot(r, q);
            ++sol.iterations;
        }
        return true;
    };
    auto negative_basics = [&] {
        for (int i = 0; i < m; ++i)
            if (!redundant[i] && T.rhs(i) < -kHarris) return true;
        return false;
    };
    // Runs to optimality, refactoring and resuming if the final tableau drifted
    // or the refactored basis turned out slightly infeasible.
    auto optimize = [&](long max_iterations) {
        Outcome outcome = Outcome::Optimal;
        for (int attempt = 0; attempt < 5; ++attempt) {
            outcome = run_simplex(T, allowed, maintain, shift, opt, max_iterations, sol.iterations);
            if (shifted) {
                b_cur = b0;
                shifted = false;
                reinvert(true);
            }
            if (outcome != Outcome::Optimal) break;
            if (drift() > kDriftTol) reinvert(true);
            if (!negative_basics()) break;
            if (!dual_repair(max_iterations)) break;
            reinvert(false);
        }
        return outcome;
    };

    const long max_iterations =
        opt.max_iterations > 0 ? opt.max_iterations : 50L * (m + total) + 1000;

    if (n_art > 0) {
        double* d = T.objective_row();
        for (int i = 0; i < m; ++i) {
            if (!is_art(T.basis(i))) continue;
            const double* ri = T.row(i);
            for (int j = 0; j <= total; ++j) d[j] -= ri[j];
        }
        for (int j = first_art; j < total; ++j) d[j] = 0.0;

        const auto outcome = optimize(max_iterations);
        if (outcome == Outcome::IterationLimit) {
            sol.status = Status::NumericalFailure;
            sol.message = "iteration limit in phase 1";
            return sol;
        }
        sol.phase1_objective = std::max(0.0, T.objective_value());
        if (outcome == Outcome::Unbounded) {
            sol.status = Status::NumericalFailure;
            sol.message = "phase 1 reported unbounded";
            return sol;
        }
        if (sol.phase1_objective > opt.feasibility_tol) {
            sol.status = Status::Infeasible;
            sol.message = "phase 1 optimum " + std::to_string(sol.phase1_objective);
            return sol;
        }

        // Pivot remaining artificials out of the basis; rows where that is
        // impossible are linear combinations of the others.
        for (int i = 0; i < m; ++i) {
            if (!is_art(T.basis(i))) continue;
            int best = -1;
            double best_abs = 1e-7;
            for (int j = 0; j < first_art; ++j)
                if (std::abs(T.at(i, j)) > best_abs) {
                    best_abs = std::abs(T.at(i, j));
                    best = j;
                }
            if (best < 0) {
                redundant[i] = 1;
                std::fill(T.row(i), T.row(i) + first_art, 0.0);
                T.rhs(i) = 0.0;
                continue;
            }
            T.rhs(i) = 0.0;
            T.pivot(i, best);
            ++sol.iterations;
        }
        for (int i = 0; i < m; ++i)
            if (T.rhs(i) < 0.0) T.rhs(i) = 0.0;
    }

    // Phase 2 reduced costs.
    phase = 2;
    {
        double* d = T.objective_row();
        std::fill(d, d + total + 1, 0.0);
        for (int j = 0; j < n; ++j) d[j] = problem.cost(j);
        for (int i = 0; i < m; ++i) {
            const int bj = T.basis(i);
            const double cb = bj < n ? problem.cost(bj) : 0.0;
            if (cb == 0.0) continue;
            const double* ri = T.row(i);
            for (int j = 0; j <= total; ++j) d[j] -= cb * ri[j];
        }
        for (int i = 0; i < m; ++i) d[T.basis(i)] = 0.0;
    }
    if (drift() > kDriftTol) reinvert(false);
    const auto outcome = optimize(max_iterations);
    if (outcome == Outcome::IterationLimit) {
        sol.status = Status::NumericalFailure;
        sol.message = "iteration limit in phase 2";
        return sol;
    }
    if (outcome == Outcome::Unbounded) {
        sol.status = Status::Unbounded;
        sol.message = "objective unbounded below";
        return sol;
    }

    std::vector<double> x(n, 0.0);
    for (int i = 0; i < m; ++i)
        if (T.basis(i) < n) x[T.basis(i)] = std::max(0.0, T.rhs(i));

    // Re-solve B x_B = b on the final basis to shed accumulated tableau error.
    std::vector<int> active;
    bool clean = true;
    for (int i = 0; i < m; ++i) {
        if (redundant[i]) continue;
        if (is_art(T.basis(i))) clean = false;
        active.push_back(i);
    }
    if (clean && !active.empty()) {
        const int k = int(active.size());
        std::vector<int> cols(k);
        Eigen::VectorXd b(k);
        for (int p = 0; p < k; ++p) {
            b(p) = b0(active[p]);
            cols[p] = T.basis(active[p]);
        }
        const SparseMatrix B = gather(A0s, active, cols);
        BasisFactor lu(B);
        const Eigen::VectorXd xb = lu.ok() ? Eigen::VectorXd(lu.solve(b)) : Eigen::VectorXd();
        const bool finite = lu.ok() && xb.allFinite();
        if (finite && xb.size() == k && xb.minCoeff() >= -kHarris && (B * xb - b).cwiseAbs().maxCoeff() < 1e-10) {
            std::vector<double> refined(n, 0.0);
            for (int c = 0; c < k; ++c) {
                const int j = T.basis(active[c]);
                if (j < n) refined[j] = std::max(0.0, xb(c));
            }
            if (problem.max_violation(refined) <= problem.max_violation(x)) x = std::move(refined);
        }
    }

    double scale = 1.0;
    for (int i = 0; i < m; ++i) scale = std::max(scale, std::abs(problem.rhs(i)));
    const double violation = problem.max_violation(x);
    if (!(violation <= opt.feasibility_tol * scale)) {
        sol.status = Status::NumericalFailure;
        sol.message = "final point violates constraints by " + std::to_string(violation);
        return sol;
    }

    sol.status = Status::Optimal;
    sol.objective = problem.objective(x);
    sol.x = std::move(x);
    return sol;
}

const Solver& default_solver() {
    static const DenseSimplex solver;
    return solver;
}

}  // namespace cmdp::lp
