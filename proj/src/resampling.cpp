#include "vqgb/resampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "vqgb/trainer.hpp"

namespace vqgb {

Supersample make_supersample(std::span<const std::vector<double>> points, Rng& rng) {
  if (points.empty() || points.size() % 2 != 0) {
    throw std::invalid_argument("make_supersample: need a nonempty, even-sized dataset");
  }
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);

  Supersample ss;
  ss.rows.resize(points.size() / 2);
  for (std::size_t m = 0; m < ss.rows.size(); ++m) {
    ss.rows[m][0] = points[order[2 * m]];
    ss.rows[m][1] = points[order[2 * m + 1]];
  }
  return ss;
}

UIndex sample_u(std::size_t n, Rng& rng) {
  UIndex u(n);
  for (int& b : u) b = rng.coin() ? 1 : 0;
  return u;
}

SplitResult split_by_u(const Supersample& ss, const UIndex& u) {
  if (u.size() != ss.size()) throw std::invalid_argument("split_by_u: length mismatch");
  SplitResult r;
  r.train.reserve(ss.size());
  r.test.reserve(ss.size());
  for (std::size_t m = 0; m < ss.size(); ++m) {
    const int bit = u[m] ? 1 : 0;
    r.train.push_back(ss.rows[m][bit]);
    r.test.push_back(ss.rows[m][1 - bit]);
  }
  return r;
}

PermutationSplit sample_permutation(std::size_t two_n, Rng& rng) {
  if (two_n == 0 || two_n % 2 != 0) {
    throw std::invalid_argument("sample_permutation: two_n must be even and positive");
  }
  PermutationSplit p;
  p.perm.resize(two_n);
  std::iota(p.perm.begin(), p.perm.end(), 0);
  rng.shuffle(p.perm);
  return p;
}

GapEstimate estimate_gap(const ModelParams& params, const Supersample& ss, const UIndex& u,
                         PosteriorMode mode) {
  const SplitResult split = split_by_u(ss, u);
  GapEstimate g;
  g.train_loss = mean_l0(params, split.train, mode, /*clamp_to_box=*/true);
  g.test_loss = mean_l0(params, split.test, mode, /*clamp_to_box=*/true);
  return g;
}

std::vector<IndexDistribution> permutation_prior_bruteforce(
    std::span<const std::vector<double>> points, const ModelParams& params,
    PosteriorMode mode) {
  const std::size_t two_n = points.size();
  if (two_n == 0 || two_n % 2 != 0) {
    throw std::invalid_argument("permutation_prior_bruteforce: need an even point count");
  }
  if (two_n > 8) {
    throw std::invalid_argument("permutation_prior_bruteforce: 2n must be <= 8");
  }

  // Per-point posteriors, computed once.
  std::vector<IndexDistribution> post;
  post.reserve(two_n);
  for (const auto& x : points) post.push_back(posterior_at(params, x, mode));
  const std::size_t K = post.front().size();

  std::vector<IndexDistribution> marginal(two_n, IndexDistribution(K, 0.0));
  std::vector<std::size_t> perm(two_n);
  std::iota(perm.begin(), perm.end(), 0);

  std::size_t count = 0;
  do {
    // Slot m of the reordered sample carries the posterior of point perm[m].
    for (std::size_t m = 0; m < two_n; ++m) {
      const auto& q = post[perm[m]];
      for (std::size_t k = 0; k < K; ++k) marginal[m][k] += q[k];
    }
    ++count;
  } while (std::next_permutation(perm.begin(), perm.end()));

  for (auto& row : marginal) {
    for (double& v : row) v /= static_cast<double>(count);
  }
  return marginal;
}

double slot_marginal_max_tv(std::span<const IndexDistribution> marginals) {
  double worst = 0.0;
  for (std::size_t a = 0; a < marginals.size(); ++a) {
    for (std::size_t b = a + 1; b < marginals.size(); ++b) {
      double tv = 0.0;
      for (std::size_t k = 0; k < marginals[a].size(); ++k) {
        tv += std::abs(marginals[a][k] - marginals[b][k]);
      }
      worst = std::max(worst, 0.5 * tv);
    }
  }
  return worst;
}

}  // namespace vqgb
