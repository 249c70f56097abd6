#include "vqgb/infotools.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <stdexcept>
#include <thread>

namespace vqgb {

namespace {

constexpr double kPriorFloor = 1e-12;

double max_norm_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

double categorical_kl(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("categorical_kl: length mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] <= 0.0) continue;
    if (q[k] < kPriorFloor) return std::numeric_limits<double>::infinity();
    acc += p[k] * (std::log(p[k]) - std::log(q[k]));
  }
  return std::max(acc, 0.0);
}

double empirical_kl_term(const CategoricalPosterior& posteriors, const PriorVector& prior) {
  if (posteriors.empty()) throw std::invalid_argument("empirical_kl_term: empty posterior");
  double acc = 0.0;
  for (const auto& row : posteriors) {
    const double kl = categorical_kl(row, prior);
    if (std::isinf(kl)) return kl;
    acc += kl;
  }
  return acc / static_cast<double>(posteriors.size());
}

PriorVector marginal_prior(const CategoricalPosterior& posteriors) {
  if (posteriors.empty()) throw std::invalid_argument("marginal_prior: empty posterior");
  const std::size_t K = posteriors.front().size();
  PriorVector pi(K, 0.0);
  for (const auto& row : posteriors) {
    if (row.size() != K) throw std::invalid_argument("marginal_prior: width mismatch");
    for (std::size_t k = 0; k < K; ++k) pi[k] += row[k];
  }
  double sum = 0.0;
  for (double v : pi) sum += v;
  for (double& v : pi) v /= sum;
  return pi;
}

double digamma(double x) {
  if (!(x > 0.0)) throw std::invalid_argument("digamma: x must be positive");
  double result = 0.0;
  while (x < 10.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // asymptotic series through the x^-10 Bernoulli term
  result += std::log(x) - 0.5 * inv -
            inv2 * (1.0 / 12.0 -
                    inv2 * (1.0 / 120.0 -
                            inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0))));
  return result;
}

double plugin_discrete_mi(std::span<const long> features, std::span<const int> labels) {
  if (features.empty() || features.size() != labels.size()) {
    throw std::invalid_argument("plugin_discrete_mi: need matching nonempty samples");
  }
  const double n = static_cast<double>(features.size());
  std::map<long, double> pf;
  std::map<int, double> pl;
  std::map<std::pair<long, int>, double> pj;
  for (std::size_t i = 0; i < features.size(); ++i) {
    pf[features[i]] += 1.0;
    pl[labels[i]] += 1.0;
    pj[{features[i], labels[i]}] += 1.0;
  }
  double mi = 0.0;
  for (const auto& [cell, cnt] : pj) {
    const double pxy = cnt / n;
    const double px = pf[cell.first] / n;
    const double py = pl[cell.second] / n;
    mi += pxy * std::log(pxy / (px * py));
  }
  return std::max(mi, 0.0);
}

namespace {

// radius_i = distance to the ki-th nearest same-class point; m_i = number of
// points (any class) within that radius. Returns false on zero radii
// (duplicated features).
bool knn_radii_generic(const std::vector<std::vector<double>>& pts,
                       std::span<const int> labels,
                       const std::map<int, std::size_t>& class_count, std::size_t k,
                       std::vector<double>& radius, std::vector<std::size_t>& m_count,
                       std::vector<std::size_t>& k_used) {
  const std::size_t n = pts.size();
  std::vector<double> same_class;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t nc = class_count.at(labels[i]);
    if (nc < 2) continue;  // singleton class: no within-class neighbor
    const std::size_t ki = std::min(k, nc - 1);

    same_class.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i && labels[j] == labels[i]) {
        same_class.push_back(max_norm_distance(pts[i], pts[j]));
      }
    }
    std::nth_element(same_class.begin(), same_class.begin() + (ki - 1), same_class.end());
    radius[i] = same_class[ki - 1];
    if (radius[i] == 0.0) return false;

    std::size_t m = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i && max_norm_distance(pts[i], pts[j]) <= radius[i]) ++m;
    }
    m_count[i] = m;
    k_used[i] = ki;
  }
  return true;
}

// Sorted-order version for one-dimensional features.
bool knn_radii_1d(const std::vector<std::vector<double>>& pts, std::span<const int> labels,
                  const std::map<int, std::size_t>& class_count, std::size_t k,
                  std::vector<double>& radius, std::vector<std::size_t>& m_count,
                  std::vector<std::size_t>& k_used) {
  const std::size_t n = pts.size();
  std::vector<double> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = pts[i][0];
  std::vector<double> sorted_all = all;
  std::sort(sorted_all.begin(), sorted_all.end());

  std::map<int, std::vector<double>> by_class;
  for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(all[i]);
  for (auto& [c, v] : by_class) std::sort(v.begin(), v.end());

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t nc = class_count.at(labels[i]);
    if (nc < 2) continue;
    const std::size_t ki = std::min(k, nc - 1);
    const auto& cls = by_class.at(labels[i]);
    const double x = all[i];

    // kth smallest |x - y| over same-class y != x, via the sorted window
    const std::size_t pos = static_cast<std::size_t>(
        std::lower_bound(cls.begin(), cls.end(), x) - cls.begin());
    std::vector<double> dists;
    const std::size_t lo = pos > ki + 1 ? pos - ki - 1 : 0;
    const std::size_t hi = std::min(pos + ki + 1, cls.size() - 1);
    bool skipped_self = false;
    for (std::size_t t = lo; t <= hi; ++t) {
      if (!skipped_self && cls[t] == x) {
        skipped_self = true;  // exclude one copy: the point itself
        continue;
      }
      dists.push_back(std::abs(cls[t] - x));
    }
    std::nth_element(dists.begin(), dists.begin() + (ki - 1), dists.end());
    radius[i] = dists[ki - 1];
    if (radius[i] == 0.0) return false;

    // Window [x - r, x + r]; boundary walk keeps the count criterion
    // |x_j - x| <= r identical to the generic path under rounding.
    const double r = radius[i];
    std::size_t lo_idx = static_cast<std::size_t>(
        std::lower_bound(sorted_all.begin(), sorted_all.end(), x - r) - sorted_all.begin());
    std::size_t hi_idx = static_cast<std::size_t>(
        std::upper_bound(sorted_all.begin(), sorted_all.end(), x + r) - sorted_all.begin());
    while (lo_idx > 0 && std::abs(sorted_all[lo_idx - 1] - x) <= r) --lo_idx;
    while (lo_idx < n && std::abs(sorted_all[lo_idx] - x) > r) ++lo_idx;
    while (hi_idx < n && std::abs(sorted_all[hi_idx] - x) <= r) ++hi_idx;
    while (hi_idx > 0 && std::abs(sorted_all[hi_idx - 1] - x) > r) --hi_idx;
    m_count[i] = hi_idx - lo_idx - 1;  // minus self
    k_used[i] = ki;
  }
  return true;
}

}  // namespace

double knn_mi(std::span<const std::vector<double>> features, std::span<const int> labels,
              std::size_t k) {
  if (features.empty() || features.size() != labels.size()) {
    throw std::invalid_argument("knn_mi: need matching nonempty samples");
  }
  if (k == 0) throw std::invalid_argument("knn_mi: k must be >= 1");
  const std::size_t n = features.size();
  const std::size_t dim = features.front().size();
  for (const auto& f : features) {
    if (f.size() != dim) throw std::invalid_argument("knn_mi: feature dimension mismatch");
    for (double v : f) {
      if (!std::isfinite(v)) throw std::invalid_argument("knn_mi: non-finite feature");
    }
  }

  std::map<int, std::size_t> class_count;
  for (int c : labels) class_count[c] += 1;

  std::vector<std::vector<double>> pts(features.begin(), features.end());

  for (int attempt = 0; attempt < 2; ++attempt) {
    std::vector<double> radius(n, 0.0);
    std::vector<std::size_t> m_count(n, 0), k_used(n, 0);
    const bool ok = dim == 1
                        ? knn_radii_1d(pts, labels, class_count, k, radius, m_count, k_used)
                        : knn_radii_generic(pts, labels, class_count, k, radius, m_count,
                                            k_used);
    if (ok) {
      double acc = 0.0;
      std::size_t used = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (k_used[i] == 0) continue;
        acc += digamma(static_cast<double>(n)) -
               digamma(static_cast<double>(class_count.at(labels[i]))) +
               digamma(static_cast<double>(k_used[i])) -
               digamma(static_cast<double>(m_count[i]));
        ++used;
      }
      if (used == 0) return 0.0;
      return std::max(acc / static_cast<double>(used), 0.0);
    }

    if (attempt == 0) {
      std::cerr << "knn_mi: duplicated features, applying 1e-10 jitter\n";
      Rng jitter_rng(0x1d657u);
      for (auto& p : pts) {
        for (double& v : p) v += 1e-10 * (jitter_rng.uniform() - 0.5);
      }
    }
  }
  throw std::runtime_error("knn_mi: features still degenerate after jitter");
}

void CmiProtocolConfig::validate() const {
  if (num_u_draws < 2) throw std::invalid_argument("CmiProtocolConfig: num_u_draws >= 2");
  if (knn_k < 1) throw std::invalid_argument("CmiProtocolConfig: knn_k >= 1");
}

double cmi_from_records(std::span<const CmiRecord> records, std::size_t num_codes,
                        CmiFeature feature, CmiPooling pooling, std::size_t knn_k) {
  if (records.empty()) throw std::invalid_argument("cmi_from_records: no records");

  const auto estimate = [&](std::span<const CmiRecord> recs) {
    std::vector<int> labels;
    labels.reserve(recs.size());
    for (const auto& r : recs) labels.push_back(r.u_bit);

    if (feature == CmiFeature::kIndexPair) {
      std::vector<long> symbols;
      symbols.reserve(recs.size());
      for (const auto& r : recs) {
        const long j0 = r.u_bit == 0 ? r.j_train : r.j_test;
        const long j1 = r.u_bit == 0 ? r.j_test : r.j_train;
        symbols.push_back(j0 * static_cast<long>(num_codes) + j1);
      }
      return plugin_discrete_mi(symbols, labels);
    }
    std::vector<std::vector<double>> losses;
    losses.reserve(recs.size());
    for (const auto& r : recs) {
      const double l0 = r.u_bit == 0 ? r.train_loss_row : r.test_loss_row;
      const double l1 = r.u_bit == 0 ? r.test_loss_row : r.train_loss_row;
      losses.push_back({l0, l1});
    }
    return knn_mi(losses, labels, knn_k);
  };

  if (pooling == CmiPooling::kPooled) return estimate(records);

  // Per replica: records are grouped by u_draw.
  std::map<std::size_t, std::vector<CmiRecord>> groups;
  for (const auto& r : records) groups[r.u_draw].push_back(r);
  double acc = 0.0;
  for (const auto& [draw, recs] : groups) acc += estimate(recs);
  return acc / static_cast<double>(groups.size());
}

std::vector<CmiRecord> cmi_records_for_draw(const ModelParams& params,
                                            const Supersample& ss, const UIndex& u,
                                            std::size_t draw_index, PosteriorMode mode) {
  std::vector<CmiRecord> recs;
  recs.reserve(ss.size());
  for (std::size_t m = 0; m < ss.size(); ++m) {
    CmiRecord r;
    r.u_draw = draw_index;
    r.row = m;
    r.u_bit = u[m] ? 1 : 0;
    const auto& train_pt = ss.rows[m][r.u_bit];
    const auto& test_pt = ss.rows[m][1 - r.u_bit];
    const auto q_train = posterior_at(params, train_pt, mode);
    const auto q_test = posterior_at(params, test_pt, mode);
    r.j_train =
        static_cast<int>(std::max_element(q_train.begin(), q_train.end()) - q_train.begin());
    r.j_test =
        static_cast<int>(std::max_element(q_test.begin(), q_test.end()) - q_test.begin());
    r.train_loss_row = reconstruction_loss_l0(params, train_pt, mode, true);
    r.test_loss_row = reconstruction_loss_l0(params, test_pt, mode, true);
    recs.push_back(r);
  }
  return recs;
}

CmiEstimate estimate_cmi_term(const TrainConfig& config, const ArchSpec& arch,
                              const Supersample& ss, const CmiProtocolConfig& protocol) {
  protocol.validate();
  const std::size_t n = ss.size();
  if (n == 0) throw std::invalid_argument("estimate_cmi_term: empty supersample");

  std::vector<std::vector<CmiRecord>> per_draw(protocol.num_u_draws);
  std::vector<std::string> failures(protocol.num_u_draws);

  const auto run_draw = [&](std::size_t draw) {
    try {
      Rng draw_rng(Rng::mix(config.seed, 0xCD1 + draw));
      const UIndex u = sample_u(n, draw_rng);
      const SplitResult split = split_by_u(ss, u);

      TrainConfig tc = config;
      tc.seed = Rng::mix(config.seed, 0x7A11 + draw);
      const TrainResult tr = train(tc, split.train, arch, split.test);

      const PosteriorMode mode = config.mode == TrainMode::kSqStochastic
                                     ? PosteriorMode::kStochastic
                                     : PosteriorMode::kDeterministic;
      per_draw[draw] = cmi_records_for_draw(tr.params, ss, u, draw, mode);
    } catch (const std::exception& e) {
      failures[draw] = e.what();
    }
  };

  std::vector<std::thread> workers;
  workers.reserve(protocol.num_u_draws);
  for (std::size_t draw = 0; draw < protocol.num_u_draws; ++draw) {
    workers.emplace_back(run_draw, draw);
  }
  for (auto& w : workers) w.join();

  CmiEstimate est;
  for (std::size_t draw = 0; draw < protocol.num_u_draws; ++draw) {
    if (!failures[draw].empty()) {
      std::vector<CmiRecord> partial;
      for (const auto& recs : per_draw) partial.insert(partial.end(), recs.begin(), recs.end());
      throw CmiReplicaFailure("estimate_cmi_term: replica " + std::to_string(draw) +
                                  " failed: " + failures[draw],
                              std::move(partial));
    }
    est.records.insert(est.records.end(), per_draw[draw].begin(), per_draw[draw].end());
  }

  est.index_mi = cmi_from_records(est.records, arch.num_codes, CmiFeature::kIndexPair,
                                  protocol.pooling, protocol.knn_k);
  est.loss_mi = cmi_from_records(est.records, arch.num_codes, CmiFeature::kLossPair,
                                 protocol.pooling, protocol.knn_k);
  return est;
}

}  // namespace vqgb
