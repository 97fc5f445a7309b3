#include "cmdp/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cmdp {

double uniform_open0(Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    return 1.0 - unit(rng);
}

int sample_index(std::span<const double> probs, Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double u = unit(rng);
    double acc = 0.0;
    int last = 0;
    for (size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        acc += probs[i];
        last = int(i);
        if (u < acc) return int(i);
    }
    return last;
}

void sample_dirichlet(std::span<const double> alpha, Rng& rng, std::span<double> out) {
    double max_log = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < alpha.size(); ++i) {
        // Gamma(a) = Gamma(a + 1) * U^(1/a) for a < 1, kept as a logarithm.
        const double a = alpha[i];
        double log_g;
        if (a >= 1.0) {
            std::gamma_distribution<double> gamma(a, 1.0);
            log_g = std::log(gamma(rng));
        } else {
            std::gamma_distribution<double> gamma(a + 1.0, 1.0);
            log_g = std::log(gamma(rng)) + std::log(uniform_open0(rng)) / a;
        }
        out[i] = log_g;
        max_log = std::max(max_log, log_g);
    }
    double total = 0.0;
    for (double& v : out) total += (v = std::exp(v - max_log));
    for (double& v : out) v /= total;
}

TransitionCounts::TransitionCounts(int n_states, int n_actions)
    : n_states_(n_states), n_actions_(n_actions),
      triples_(size_t(n_states) * n_actions * n_states, 0), pairs_(size_t(n_states) * n_actions, 0) {}

void TransitionCounts::add(int s, int a, int next, long long n) {
    if (s < 0 || s >= n_states_ || a < 0 || a >= n_actions_ || next < 0 || next >= n_states_)
        throw std::out_of_range("TransitionCounts::add: index out of range");
    triples_[(size_t(s) * n_actions_ + a) * n_states_ + next] += n;
    pairs_[size_t(s) * n_actions_ + a] += n;
    total_ += n;
}

DirichletPosterior::DirichletPosterior(int n_states, int n_actions, double prior)
    : DirichletPosterior(n_states, n_actions,
                         std::vector<double>(size_t(n_states) * n_actions * n_states, prior)) {}

DirichletPosterior::DirichletPosterior(int n_states, int n_actions, std::vector<double> prior_alpha)
    : prior_(std::move(prior_alpha)), counts_(n_states, n_actions) {
    if (n_states <= 0 || n_actions <= 0)
        throw std::invalid_argument("DirichletPosterior: dimensions must be positive");
    if (prior_.size() != size_t(n_states) * n_actions * n_states)
        throw std::invalid_argument("DirichletPosterior: prior has the wrong shape");
    for (double a : prior_)
        if (!(a > 0.0) || !std::isfinite(a))
            throw std::invalid_argument("DirichletPosterior: prior parameters must be positive");
}

void DirichletPosterior::update(int s, int a, int next) { counts_.add(s, a, next); }

Kernel DirichletPosterior::sample_kernel(Rng& rng) const {
    const int S = n_states();
    const int A = n_actions();
    Kernel k(S, A);
    std::vector<double> alpha(S);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            for (int next = 0; next < S; ++next) alpha[next] = this->alpha(s, a, next);
            sample_dirichlet(alpha, rng, k.row(s, a));
        }
    return k;
}

Kernel DirichletPosterior::sample_kernel(std::uint64_t seed) const {
    Rng rng(seed);
    return sample_kernel(rng);
}

Kernel empirical_kernel(const TransitionCounts& counts) {
    const int S = counts.n_states();
    const int A = counts.n_actions();
    Kernel k(S, A);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            const long long n = counts.visits(s, a);
            for (int next = 0; next < S; ++next)
                k(s, a, next) = n == 0 ? 1.0 / S : double(counts(s, a, next)) / double(n);
        }
    return k;
}

Kernel DirichletPosterior::empirical_kernel() const { return cmdp::empirical_kernel(counts_); }

nlohmann::json DirichletPosterior::snapshot() const {
    return {{"n_states", n_states()},
            {"n_actions", n_actions()},
            {"prior_alpha", prior_},
            {"counts", counts_.triples()}};
}

DirichletPosterior DirichletPosterior::from_snapshot(const nlohmann::json& doc) {
    const int S = doc.at("n_states").get<int>();
    const int A = doc.at("n_actions").get<int>();
    DirichletPosterior post(S, A, doc.at("prior_alpha").get<std::vector<double>>());
    const auto counts = doc.at("counts").get<std::vector<long long>>();
    if (counts.size() != size_t(S) * A * S)
        throw std::invalid_argument("posterior snapshot: counts have the wrong shape");
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a)
            for (int next = 0; next < S; ++next) {
                const long long n = counts[(size_t(s) * A + a) * S + next];
                if (n < 0) throw std::invalid_argument("posterior snapshot: negative count");
                if (n > 0) post.counts_.add(s, a, next, n);
            }
    return post;
}

}  // namespace cmdp
