#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace cmdp {

/// Every stochastic draw of a run (actions, posterior samples, environment
/// slips) comes from one of these, seeded per run.
using Rng = std::mt19937_64;

/// Uniform on (0, 1].
double uniform_open0(Rng& rng);

/// Index drawn from a probability vector by inverse CDF with one uniform.
int sample_index(std::span<const double> probs, Rng& rng);

/// One Dirichlet(alpha) draw written into `out`. Works in log space so tiny
/// concentration parameters cannot underflow the whole row to zero.
void sample_dirichlet(std::span<const double> alpha, Rng& rng, std::span<double> out);

}  // namespace cmdp
