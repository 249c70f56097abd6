#include "vqgb/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "vqgb/bounds.hpp"
#include "vqgb/infotools.hpp"

namespace vqgb {

namespace {

constexpr std::size_t kMaxSupportPoints = 2000;
constexpr double kMassEps = 1e-15;

// Exact min-cost transportation via successive shortest augmenting paths with
// node potentials (reduced costs stay nonnegative, so plain Dijkstra applies).
double solve_transportation(const std::vector<std::vector<double>>& cost,
                            std::vector<double> supply, std::vector<double> demand) {
  const std::size_t a = supply.size();
  const std::size_t b = demand.size();
  const std::size_t total = a + b;  // sources first, then sinks
  const double inf = std::numeric_limits<double>::infinity();

  std::vector<std::vector<double>> flow(a, std::vector<double>(b, 0.0));
  std::vector<double> phi(total, 0.0);

  double remaining = 0.0;
  for (double s : supply) remaining += s;

  std::vector<double> dist(total);
  std::vector<int> parent(total);
  std::vector<char> settled(total);

  const std::size_t max_rounds = 16 * total * total + 64;
  std::size_t rounds = 0;
  while (remaining > kMassEps) {
    if (++rounds > max_rounds) {
      throw std::runtime_error("w2_exact: transportation solver failed to converge");
    }

    std::fill(dist.begin(), dist.end(), inf);
    std::fill(parent.begin(), parent.end(), -1);
    std::fill(settled.begin(), settled.end(), 0);
    for (std::size_t i = 0; i < a; ++i) {
      if (supply[i] > kMassEps) dist[i] = 0.0;
    }

    std::size_t target = total;
    while (true) {
      std::size_t best = total;
      double best_d = inf;
      for (std::size_t v = 0; v < total; ++v) {
        if (!settled[v] && dist[v] < best_d) {
          best_d = dist[v];
          best = v;
        }
      }
      if (best == total) break;  // nothing reachable
      settled[best] = 1;
      if (best >= a && demand[best - a] > kMassEps) {
        target = best;
        break;
      }

      if (best < a) {
        const std::size_t i = best;
        for (std::size_t j = 0; j < b; ++j) {
          const double rc = std::max(0.0, cost[i][j] + phi[i] - phi[a + j]);
          if (dist[i] + rc < dist[a + j]) {
            dist[a + j] = dist[i] + rc;
            parent[a + j] = static_cast<int>(i);
          }
        }
      } else {
        const std::size_t j = best - a;
        for (std::size_t i = 0; i < a; ++i) {
          if (flow[i][j] <= kMassEps) continue;
          const double rc = std::max(0.0, -(cost[i][j] + phi[i] - phi[a + j]));
          if (dist[a + j] + rc < dist[i]) {
            dist[i] = dist[a + j] + rc;
            parent[i] = static_cast<int>(a + j);
          }
        }
      }
    }

    if (target == total) {
      throw std::runtime_error("w2_exact: no augmenting path (mass mismatch)");
    }

    const double reach = dist[target];
    for (std::size_t v = 0; v < total; ++v) phi[v] += std::min(dist[v], reach);

    // Bottleneck along the path.
    double delta = demand[target - a];
    for (int v = static_cast<int>(target); parent[v] >= 0; v = parent[v]) {
      const int u = parent[v];
      if (u < static_cast<int>(a) && v >= static_cast<int>(a)) {
        // forward arc u -> v
      } else {
        delta = std::min(delta, flow[v][u - static_cast<int>(a)]);
      }
    }
    {
      int v = static_cast<int>(target);
      while (parent[v] >= 0) v = parent[v];
      delta = std::min(delta, supply[v]);
    }

    for (int v = static_cast<int>(target); parent[v] >= 0; v = parent[v]) {
      const int u = parent[v];
      if (u < static_cast<int>(a) && v >= static_cast<int>(a)) {
        flow[u][v - static_cast<int>(a)] += delta;
      } else {
        flow[v][u - static_cast<int>(a)] -= delta;
      }
    }
    {
      int v = static_cast<int>(target);
      while (parent[v] >= 0) v = parent[v];
      supply[v] -= delta;
    }
    demand[target - a] -= delta;
    remaining -= delta;
  }

  double total_cost = 0.0;
  for (std::size_t i = 0; i < a; ++i) {
    for (std::size_t j = 0; j < b; ++j) total_cost += flow[i][j] * cost[i][j];
  }
  return total_cost;
}

}  // namespace

void EmpiricalMeasure::validate() const {
  if (points.size() != weights.size() || points.empty()) {
    throw std::invalid_argument("EmpiricalMeasure: need matching nonempty points/weights");
  }
  // Kahan summation: the invariant must hold for large uniform supports.
  double sum = 0.0, comp = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("EmpiricalMeasure: negative weight");
    const double y = w - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw std::invalid_argument("EmpiricalMeasure: weights must sum to 1");
  }
}

EmpiricalMeasure EmpiricalMeasure::uniform(std::vector<std::vector<double>> pts) {
  EmpiricalMeasure m;
  const double w = 1.0 / static_cast<double>(pts.size());
  m.weights.assign(pts.size(), w);
  m.points = std::move(pts);
  return m;
}

double solve_assignment(const std::vector<std::vector<double>>& cost,
                        std::vector<std::size_t>* rowsol) {
  const std::size_t n = cost.size();
  if (n == 0) throw std::invalid_argument("solve_assignment: empty cost matrix");
  for (const auto& row : cost) {
    if (row.size() != n) throw std::invalid_argument("solve_assignment: matrix not square");
  }
  const double inf = std::numeric_limits<double>::infinity();

  // 1-indexed potentials/assignment, the classic O(n^3) formulation.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      std::size_t j1 = 0;
      double delta = inf;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  if (rowsol) {
    rowsol->assign(n, 0);
    for (std::size_t j = 1; j <= n; ++j) {
      if (p[j]) (*rowsol)[p[j] - 1] = j - 1;
    }
  }
  double total = 0.0;
  for (std::size_t j = 1; j <= n; ++j) {
    if (p[j]) total += cost[p[j] - 1][j - 1];
  }
  return total;
}

double w2_exact(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  mu.validate();
  nu.validate();
  if (mu.size() + nu.size() > kMaxSupportPoints) {
    throw std::invalid_argument("w2_exact: combined support exceeds 2000 points");
  }
  const std::size_t dim = mu.points.front().size();
  for (const auto& p : nu.points) {
    if (p.size() != dim) throw std::invalid_argument("w2_exact: dimension mismatch");
  }

  std::vector<std::vector<double>> cost(mu.size(), std::vector<double>(nu.size()));
  for (std::size_t i = 0; i < mu.size(); ++i) {
    for (std::size_t j = 0; j < nu.size(); ++j) {
      cost[i][j] = squared_distance(mu.points[i], nu.points[j]);
    }
  }

  const auto is_uniform = [](const EmpiricalMeasure& m) {
    const double w = 1.0 / static_cast<double>(m.size());
    for (double x : m.weights) {
      if (std::abs(x - w) > 1e-12) return false;
    }
    return true;
  };

  double transport_cost;
  if (mu.size() == nu.size() && is_uniform(mu) && is_uniform(nu)) {
    transport_cost = solve_assignment(cost) / static_cast<double>(mu.size());
  } else {
    transport_cost = solve_transportation(cost, mu.weights, nu.weights);
  }
  return std::sqrt(std::max(transport_cost, 0.0));
}

EmpiricalMeasure sample_generated(const ModelParams& params, const PriorVector& prior,
                                  std::size_t m, Rng& rng) {
  if (m == 0) throw std::invalid_argument("sample_generated: m must be >= 1");
  if (prior.size() != params.codebook.size()) {
    throw std::invalid_argument("sample_generated: prior width mismatch");
  }

  // Decode each code once; draws then only pick indices.
  std::vector<std::vector<double>> decoded(prior.size());
  for (std::size_t k = 0; k < prior.size(); ++k) {
    decoded[k] = decode(params, params.codebook.entries[k], /*clamp_to_box=*/true);
  }

  std::vector<double> cdf(prior.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < prior.size(); ++k) {
    acc += prior[k];
    cdf[k] = acc;
  }

  EmpiricalMeasure out;
  out.points.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double r = rng.uniform() * acc;
    const std::size_t k = static_cast<std::size_t>(
        std::lower_bound(cdf.begin(), cdf.end(), r) - cdf.begin());
    out.points.push_back(decoded[std::min(k, prior.size() - 1)]);
  }
  out.weights.assign(m, 1.0 / static_cast<double>(m));
  return out;
}

GenerationBoundCheck validate_generation_bound(const ModelParams& params,
                                               const PriorVector& prior,
                                               std::span<const std::vector<double>> train_set,
                                               std::span<const std::vector<double>> holdout,
                                               double Delta, std::size_t n,
                                               PosteriorMode mode, std::size_t num_generated,
                                               Rng& rng) {
  if (train_set.empty() || holdout.empty()) {
    throw std::invalid_argument("validate_generation_bound: empty point sets");
  }

  double train_loss = 0.0;
  for (const auto& x : train_set) {
    train_loss += reconstruction_loss_l0(params, x, mode, /*clamp_to_box=*/true);
  }
  train_loss /= static_cast<double>(train_set.size());

  const auto post = posterior_matrix(params, train_set, mode);
  const double kl = empirical_kl_term(post, prior);

  BoundInputs b;
  b.n = n;
  b.Delta = Delta;
  b.K = params.codebook.size();
  b.kl_empirical = kl;
  b.train_loss_mean = train_loss;

  GenerationBoundCheck check;
  check.rhs = rhs_wasserstein(b);

  const auto generated = sample_generated(params, prior, num_generated, rng);
  EmpiricalMeasure data = EmpiricalMeasure::uniform(
      std::vector<std::vector<double>>(holdout.begin(), holdout.end()));
  const double w2 = w2_exact(data, generated);
  check.w2_squared = w2 * w2;
  check.holds = check.w2_squared <= check.rhs;
  return check;
}

}  // namespace vqgb
