#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vqgb/model.hpp"
#include "vqgb/rng.hpp"

namespace vqgb {

struct EmpiricalMeasure {
  std::vector<std::vector<double>> points;
  std::vector<double> weights;

  std::size_t size() const { return points.size(); }
  void validate() const;  // weights nonnegative, summing to 1 within 1e-12

  static EmpiricalMeasure uniform(std::vector<std::vector<double>> pts);
};

// Minimum-cost square assignment (Jonker-Volgenant style); returns the total
// cost and, when rowsol is non-null, the column matched to each row.
double solve_assignment(const std::vector<std::vector<double>>& cost,
                        std::vector<std::size_t>* rowsol = nullptr);

// Exact 2-Wasserstein distance between small empirical measures under squared
// Euclidean ground cost. Equal-size uniform measures go through the
// assignment solver; the general case runs an exact successive-shortest-path
// transportation solve. Combined support is limited to 2000 points.
double w2_exact(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

// m i.i.d. draws of J ~ prior pushed through the decoder, clamped to the box.
EmpiricalMeasure sample_generated(const ModelParams& params, const PriorVector& prior,
                                  std::size_t m, Rng& rng);

struct GenerationBoundCheck {
  double w2_squared = 0.0;
  double rhs = 0.0;
  bool holds = false;
};

// Measures W2^2 between a holdout sample of the data distribution and
// freshly generated samples, and compares it against the data-generation
// bound assembled from the training losses and the KL to the sampling prior.
GenerationBoundCheck validate_generation_bound(const ModelParams& params,
                                               const PriorVector& prior,
                                               std::span<const std::vector<double>> train_set,
                                               std::span<const std::vector<double>> holdout,
                                               double Delta, std::size_t n,
                                               PosteriorMode mode, std::size_t num_generated,
                                               Rng& rng);

}  // namespace vqgb
