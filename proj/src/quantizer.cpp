#include "vqgb/quantizer.hpp"

#include <cmath>
#include <stdexcept>

namespace vqgb {

bool is_distribution(std::span<const double> p, double tol) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= tol;
}

void Codebook::validate() const {
  if (entries.empty()) throw std::invalid_argument("Codebook: K must be >= 1");
  for (const auto& e : entries) {
    if (e.size() != dz) throw std::invalid_argument("Codebook: entry dimension mismatch");
    for (double v : e) {
      if (!std::isfinite(v)) throw std::invalid_argument("Codebook: non-finite entry");
    }
  }
}

double Codebook::latent_diameter() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    for (std::size_t j = i + 1; j < entries.size(); ++j) {
      worst = std::max(worst, squared_distance(entries[i], entries[j]));
    }
  }
  return std::sqrt(worst);
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("squared_distance: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

std::size_t nearest_index(std::span<const double> z, const Codebook& cb) {
  if (z.size() != cb.dz) throw std::invalid_argument("nearest_index: latent dimension mismatch");
  std::size_t best = 0;
  double best_d2 = squared_distance(z, cb.entries[0]);
  for (std::size_t k = 1; k < cb.size(); ++k) {
    const double d2 = squared_distance(z, cb.entries[k]);
    if (d2 < best_d2) {  // strict: ties keep the lowest index
      best_d2 = d2;
      best = k;
    }
  }
  return best;
}

IndexDistribution deterministic_posterior(std::span<const double> z, const Codebook& cb) {
  IndexDistribution p(cb.size(), 0.0);
  p[nearest_index(z, cb)] = 1.0;
  return p;
}

IndexDistribution posterior_from_sq_distances(std::span<const double> d2, double beta) {
  if (beta < 0.0) throw std::invalid_argument("posterior: beta must be nonnegative");
  IndexDistribution p(d2.size());
  double best = d2[0];
  for (double v : d2) best = std::min(best, v);
  double sum = 0.0;
  for (std::size_t k = 0; k < d2.size(); ++k) {
    p[k] = std::exp(-beta * (d2[k] - best));
    sum += p[k];
  }
  for (double& v : p) v /= sum;
  return p;
}

IndexDistribution stochastic_posterior(std::span<const double> z, const Codebook& cb,
                                       double beta) {
  if (z.size() != cb.dz) {
    throw std::invalid_argument("stochastic_posterior: latent dimension mismatch");
  }
  std::vector<double> d2(cb.size());
  for (std::size_t k = 0; k < cb.size(); ++k) d2[k] = squared_distance(z, cb.entries[k]);
  return posterior_from_sq_distances(d2, beta);
}

std::vector<double> gumbel_softmax_from_noise(std::span<const double> logits,
                                              std::span<const double> noise, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("gumbel_softmax: tau must be positive");
  if (logits.size() != noise.size()) {
    throw std::invalid_argument("gumbel_softmax: noise length mismatch");
  }
  std::vector<double> s(logits.size());
  double best = -1e300;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    s[k] = (logits[k] + noise[k]) / tau;
    best = std::max(best, s[k]);
  }
  double sum = 0.0;
  for (double& v : s) {
    v = std::exp(v - best);
    sum += v;
  }
  for (double& v : s) v /= sum;
  return s;
}

std::vector<double> gumbel_softmax_sample(std::span<const double> logits, double tau,
                                          Rng& rng) {
  if (tau <= 0.0) throw std::invalid_argument("gumbel_softmax: tau must be positive");
  std::vector<double> noise(logits.size());
  for (double& g : noise) g = rng.gumbel();
  return gumbel_softmax_from_noise(logits, noise, tau);
}

QuantizeResult quantize_straight_through(std::span<const double> z, const Codebook& cb) {
  QuantizeResult r;
  r.index = nearest_index(z, cb);
  r.code = cb.entries[r.index];
  return r;
}

double codebook_loss(std::span<const double> z, std::span<const double> code) {
  return squared_distance(z, code);
}

double commitment_loss(std::span<const double> z, std::span<const double> code) {
  return 0.25 * squared_distance(z, code);
}

}  // namespace vqgb
