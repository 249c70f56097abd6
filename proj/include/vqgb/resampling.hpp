#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "vqgb/model.hpp"
#include "vqgb/rng.hpp"

namespace vqgb {

// n rows of paired data points; column u of row m is selected for training
// when the corresponding bit is u.
struct Supersample {
  std::vector<std::array<std::vector<double>, 2>> rows;
  std::size_t size() const { return rows.size(); }
};

// One bit per supersample row.
using UIndex = std::vector<int>;

// Permutation of [2n]; the first n slots form the test half, the rest the
// training half.
struct PermutationSplit {
  std::vector<std::size_t> perm;

  std::size_t half() const { return perm.size() / 2; }
  std::span<const std::size_t> test_half() const {
    return {perm.data(), half()};
  }
  std::span<const std::size_t> train_half() const {
    return {perm.data() + half(), half()};
  }
};

// Randomly pairs an even-sized dataset into n rows; every point used once.
Supersample make_supersample(std::span<const std::vector<double>> points, Rng& rng);

UIndex sample_u(std::size_t n, Rng& rng);

struct SplitResult {
  std::vector<std::vector<double>> train;
  std::vector<std::vector<double>> test;
};

// train_m = row m column u_m; test_m = the other column.
SplitResult split_by_u(const Supersample& ss, const UIndex& u);

// Uniform random permutation of [two_n] via Fisher-Yates.
PermutationSplit sample_permutation(std::size_t two_n, Rng& rng);

struct GapEstimate {
  double train_loss = 0.0;
  double test_loss = 0.0;
  double signed_gap() const { return test_loss - train_loss; }
  double absolute() const { return std::abs(test_loss - train_loss); }
};

// Mean l0 over each half, as exact K-way expectations with decoder outputs
// clamped to the data box. params are expected to have been trained on
// split_by_u(ss, u).train.
GapEstimate estimate_gap(const ModelParams& params, const Supersample& ss, const UIndex& u,
                         PosteriorMode mode);

// Exact enumeration of all (2n)! permutations for 2n <= 8: returns the
// marginal index distribution of every slot under the permutation-averaged
// prior. All slots come out identical (the 1/(2n) mixture of per-point
// posteriors); callers can check that with slot_marginal_max_tv.
std::vector<IndexDistribution> permutation_prior_bruteforce(
    std::span<const std::vector<double>> points, const ModelParams& params,
    PosteriorMode mode);

double slot_marginal_max_tv(std::span<const IndexDistribution> marginals);

}  // namespace vqgb
