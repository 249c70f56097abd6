#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vqgb/nn.hpp"
#include "vqgb/quantizer.hpp"

namespace vqgb {

// Prior over codebook indices; strictly positive after EMA updates.
using PriorVector = std::vector<double>;

enum class PosteriorMode { kDeterministic, kStochastic };

// Full parameter set: encoder phi, decoder theta, codebook, and the two
// log-variances of the Gaussian observation / dequantization models.
struct ModelParams {
  MlpSpec encoder_spec;
  MlpSpec decoder_spec;
  std::vector<double> encoder_params;
  std::vector<double> decoder_params;
  Codebook codebook;
  double log_sigma2 = 0.0;      // decoder observation log-variance
  double log_sigma_psi2 = 0.0;  // dequantization log-variance
  double beta_q = 1.0;          // evaluation-time inverse temperature

  std::size_t dz() const { return codebook.dz; }
  std::size_t data_dim() const { return decoder_spec.output_width(); }
  void validate() const;

  // Flat order: [encoder | decoder | codebook entries row-major | log_sigma2 | log_sigma_psi2].
  std::size_t flat_size() const;
  std::vector<double> to_flat() const;
  void from_flat(std::span<const double> flat);

  struct Block {
    std::string name;
    std::size_t offset;
    std::size_t length;
  };
  std::vector<Block> blocks() const;
};

// Fresh parameters for the given shapes; codebook entries drawn uniform in [0,1]^dz.
ModelParams init_model(const MlpSpec& encoder, const MlpSpec& decoder, std::size_t K,
                       Rng& rng);

std::vector<double> encode(const ModelParams& p, std::span<const double> x);
std::vector<double> decode(const ModelParams& p, std::span<const double> z,
                           bool clamp_to_box = false);

// Posterior over indices for one data point. Stochastic mode uses beta_q.
IndexDistribution posterior_at(const ModelParams& p, std::span<const double> x,
                               PosteriorMode mode);

CategoricalPosterior posterior_matrix(const ModelParams& p,
                                      std::span<const std::vector<double>> points,
                                      PosteriorMode mode);

// l0(w, x) = E_{q(J|.)} ||x - g(e_J)||^2, as an exact K-way sum.
// clamp_to_box clips decoder outputs into [0,1]^d; used for bound terms only.
double reconstruction_loss_l0(const ModelParams& p, std::span<const double> x,
                              PosteriorMode mode, bool clamp_to_box = false);

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;  // flat layout, same as ModelParams::to_flat
};

// Per-sample Gaussian SQ-VAE objective, averaged over the batch:
//   d/2 log(sigma^2) + ||x - g(z_q)||^2 / (2 sigma^2)
//   + sum_k q_k ||f(x) - e_k||^2 / (2 sigma_psi^2) - H(q)
// with q the softmax posterior at inverse temperature 1/(2 sigma_psi^2) and
// z_q the Gumbel-softmax mixture of codebook entries. noise holds one row of
// Gumbel(0,1) draws per batch sample.
//
// With a prior and lambda_mix > 0 the entropy term is replaced by
// (1-lambda)(-H) + lambda KL(q || prior), which reduces to adding
// -lambda sum_k q_k log(prior_k). The prior is treated as constant.
LossAndGrad sqvae_loss_with_noise(const ModelParams& p,
                                  std::span<const std::vector<double>> batch, double tau,
                                  std::span<const std::vector<double>> noise,
                                  const PriorVector* prior = nullptr,
                                  double lambda_mix = 0.0);

// Convenience wrapper drawing fresh noise from rng.
LossAndGrad sqvae_loss(const ModelParams& p, std::span<const std::vector<double>> batch,
                       double tau, Rng& rng, const PriorVector* prior = nullptr,
                       double lambda_mix = 0.0);

// Deterministic-mode training objective: reconstruction through the hard
// quantizer with straight-through encoder gradients, plus codebook and
// commitment terms.
LossAndGrad vq_loss(const ModelParams& p, std::span<const std::vector<double>> batch);

double entropy(std::span<const double> p);            // nats, 0 log 0 = 0
double entropy_of_posteriors(const CategoricalPosterior& post);  // mean entropy

// Mean_n KL(q_n || prior) in nats. Prior entries must be >= 1e-12.
double cdvib_regularizer(const CategoricalPosterior& post, const PriorVector& prior);

// (1 - lambda) * (-mean entropy) + lambda * KL_cdvib.
double mixed_regularizer(const CategoricalPosterior& post, const PriorVector& prior,
                         double lambda_mix);

}  // namespace vqgb
