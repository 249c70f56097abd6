#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vqgb/rng.hpp"

namespace vqgb {

// Distribution over codebook indices; entries >= 0 and sum to 1 (within 1e-12).
using IndexDistribution = std::vector<double>;

// Row-stochastic matrix of per-sample index distributions.
using CategoricalPosterior = std::vector<IndexDistribution>;

bool is_distribution(std::span<const double> p, double tol = 1e-12);

struct Codebook {
  std::size_t dz = 0;
  std::vector<std::vector<double>> entries;  // K vectors of length dz

  std::size_t size() const { return entries.size(); }
  void validate() const;  // throws std::invalid_argument

  // Max pairwise Euclidean distance among entries; a valid latent diameter.
  double latent_diameter() const;
};

double squared_distance(std::span<const double> a, std::span<const double> b);

// Index of the nearest codebook entry; ties broken toward the lowest index.
std::size_t nearest_index(std::span<const double> z, const Codebook& cb);

// One-hot at the nearest entry.
IndexDistribution deterministic_posterior(std::span<const double> z, const Codebook& cb);

// probs_k proportional to exp(-beta * ||z - e_k||^2), max-subtracted softmax.
// beta = 0 gives the uniform distribution.
IndexDistribution stochastic_posterior(std::span<const double> z, const Codebook& cb,
                                       double beta);

// Softmax over -beta * d2; shared by the posterior and the training loss.
IndexDistribution posterior_from_sq_distances(std::span<const double> d2, double beta);

// softmax((logits + g) / tau) for fixed Gumbel noise g; differentiable in logits.
std::vector<double> gumbel_softmax_from_noise(std::span<const double> logits,
                                              std::span<const double> noise, double tau);

// Draws fresh Gumbel(0,1) noise. tau must be positive.
std::vector<double> gumbel_softmax_sample(std::span<const double> logits, double tau,
                                          Rng& rng);

// Forward result of hard quantization. The training-time gradient contract:
// the upstream gradient at the code passes to z unchanged (identity Jacobian);
// the codebook itself receives gradients only through the auxiliary losses below.
struct QuantizeResult {
  std::size_t index = 0;
  std::vector<double> code;
};

QuantizeResult quantize_straight_through(std::span<const double> z, const Codebook& cb);

// ||stop(z) - e_j||^2: gradient 2(e_j - z) w.r.t. the selected entry.
double codebook_loss(std::span<const double> z, std::span<const double> code);

// 0.25 ||z - stop(e_j)||^2: gradient 0.5(z - e_j) w.r.t. z.
double commitment_loss(std::span<const double> z, std::span<const double> code);

}  // namespace vqgb
