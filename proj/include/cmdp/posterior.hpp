#pragma once

#include "cmdp/core.hpp"
#include "cmdp/random.hpp"

#include <json.hpp>

#include <cstdint>
#include <vector>

namespace cmdp {

/// N(s, a, s') and the marginal N(s, a).
class TransitionCounts {
public:
    TransitionCounts() = default;
    TransitionCounts(int n_states, int n_actions);

    int n_states() const { return n_states_; }
    int n_actions() const { return n_actions_; }

    void add(int s, int a, int next, long long n = 1);

    long long operator()(int s, int a, int next) const {
        return triples_[(size_t(s) * n_actions_ + a) * n_states_ + next];
    }
    long long visits(int s, int a) const { return pairs_[size_t(s) * n_actions_ + a]; }
    long long total() const { return total_; }

    const std::vector<long long>& triples() const { return triples_; }
    const std::vector<long long>& pairs() const { return pairs_; }

    bool operator==(const TransitionCounts&) const = default;

private:
    int n_states_ = 0;
    int n_actions_ = 0;
    long long total_ = 0;
    std::vector<long long> triples_;
    std::vector<long long> pairs_;
};

/// Independent Dirichlet posterior over p(.|s, a) for every pair. The
/// parameters are always prior + counts.
class DirichletPosterior {
public:
    DirichletPosterior() = default;
    DirichletPosterior(int n_states, int n_actions, double prior = 0.01);
    /// Per-entry prior laid out like Kernel::data(); every entry must be > 0.
    DirichletPosterior(int n_states, int n_actions, std::vector<double> prior_alpha);

    int n_states() const { return counts_.n_states(); }
    int n_actions() const { return counts_.n_actions(); }

    /// Conjugate update after observing s --a--> next.
    void update(int s, int a, int next);

    double alpha(int s, int a, int next) const { return prior_[index(s, a, next)] + double(counts_(s, a, next)); }
    double prior_alpha(int s, int a, int next) const { return prior_[index(s, a, next)]; }
    const TransitionCounts& counts() const { return counts_; }

    /// Each row drawn independently from Dirichlet(alpha(s, a, .)).
    Kernel sample_kernel(Rng& rng) const;
    Kernel sample_kernel(std::uint64_t seed) const;

    /// N(s,a,s') / N(s,a); unvisited pairs get the uniform row.
    Kernel empirical_kernel() const;

    nlohmann::json snapshot() const;
    static DirichletPosterior from_snapshot(const nlohmann::json& doc);

private:
    size_t index(int s, int a, int next) const {
        return (size_t(s) * n_actions() + a) * n_states() + next;
    }

    std::vector<double> prior_;
    TransitionCounts counts_;
};

Kernel empirical_kernel(const TransitionCounts& counts);

}  // namespace cmdp
