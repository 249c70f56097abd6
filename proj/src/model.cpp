#include "vqgb/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vqgb {

namespace {

constexpr double kPriorFloor = 1e-12;

double xlogx(double v) { return v > 0.0 ? v * std::log(v) : 0.0; }

void clamp_unit_box(std::vector<double>& v) {
  for (double& x : v) x = std::clamp(x, 0.0, 1.0);
}

}  // namespace

void ModelParams::validate() const {
  encoder_spec.validate();
  decoder_spec.validate();
  codebook.validate();
  if (encoder_spec.output_width() != codebook.dz) {
    throw std::invalid_argument("ModelParams: encoder output width != dz");
  }
  if (decoder_spec.input_width() != codebook.dz) {
    throw std::invalid_argument("ModelParams: decoder input width != dz");
  }
  if (encoder_params.size() != encoder_spec.param_count() ||
      decoder_params.size() != decoder_spec.param_count()) {
    throw std::invalid_argument("ModelParams: parameter vector size mismatch");
  }
}

std::size_t ModelParams::flat_size() const {
  return encoder_params.size() + decoder_params.size() +
         codebook.size() * codebook.dz + 2;
}

std::vector<double> ModelParams::to_flat() const {
  std::vector<double> flat;
  flat.reserve(flat_size());
  flat.insert(flat.end(), encoder_params.begin(), encoder_params.end());
  flat.insert(flat.end(), decoder_params.begin(), decoder_params.end());
  for (const auto& e : codebook.entries) flat.insert(flat.end(), e.begin(), e.end());
  flat.push_back(log_sigma2);
  flat.push_back(log_sigma_psi2);
  return flat;
}

void ModelParams::from_flat(std::span<const double> flat) {
  if (flat.size() != flat_size()) {
    throw std::invalid_argument("ModelParams::from_flat: size mismatch");
  }
  std::size_t off = 0;
  std::copy_n(flat.begin(), encoder_params.size(), encoder_params.begin());
  off += encoder_params.size();
  std::copy_n(flat.begin() + off, decoder_params.size(), decoder_params.begin());
  off += decoder_params.size();
  for (auto& e : codebook.entries) {
    std::copy_n(flat.begin() + off, e.size(), e.begin());
    off += e.size();
  }
  log_sigma2 = flat[off++];
  log_sigma_psi2 = flat[off++];
}

std::vector<ModelParams::Block> ModelParams::blocks() const {
  std::vector<Block> b;
  std::size_t off = 0;
  b.push_back({"encoder", off, encoder_params.size()});
  off += encoder_params.size();
  b.push_back({"decoder", off, decoder_params.size()});
  off += decoder_params.size();
  b.push_back({"codebook", off, codebook.size() * codebook.dz});
  off += codebook.size() * codebook.dz;
  b.push_back({"log_sigma2", off, 1});
  b.push_back({"log_sigma_psi2", off + 1, 1});
  return b;
}

ModelParams init_model(const MlpSpec& encoder, const MlpSpec& decoder, std::size_t K,
                       Rng& rng) {
  if (K == 0) throw std::invalid_argument("init_model: K must be >= 1");
  ModelParams p;
  p.encoder_spec = encoder;
  p.decoder_spec = decoder;
  p.encoder_params = mlp_init_params(encoder, rng);
  p.decoder_params = mlp_init_params(decoder, rng);
  p.codebook.dz = encoder.output_width();
  p.codebook.entries.resize(K);
  for (auto& e : p.codebook.entries) {
    e.resize(p.codebook.dz);
    for (double& v : e) v = rng.uniform();
  }
  p.validate();
  return p;
}

std::vector<double> encode(const ModelParams& p, std::span<const double> x) {
  return mlp_forward(p.encoder_spec, p.encoder_params, x);
}

std::vector<double> decode(const ModelParams& p, std::span<const double> z,
                           bool clamp_to_box) {
  auto out = mlp_forward(p.decoder_spec, p.decoder_params, z);
  if (clamp_to_box) clamp_unit_box(out);
  return out;
}

IndexDistribution posterior_at(const ModelParams& p, std::span<const double> x,
                               PosteriorMode mode) {
  const auto z = encode(p, x);
  if (mode == PosteriorMode::kDeterministic) return deterministic_posterior(z, p.codebook);
  return stochastic_posterior(z, p.codebook, p.beta_q);
}

CategoricalPosterior posterior_matrix(const ModelParams& p,
                                      std::span<const std::vector<double>> points,
                                      PosteriorMode mode) {
  CategoricalPosterior post;
  post.reserve(points.size());
  for (const auto& x : points) post.push_back(posterior_at(p, x, mode));
  return post;
}

double reconstruction_loss_l0(const ModelParams& p, std::span<const double> x,
                              PosteriorMode mode, bool clamp_to_box) {
  const IndexDistribution q = posterior_at(p, x, mode);
  double loss = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    if (q[k] == 0.0) continue;
    const auto xhat = decode(p, p.codebook.entries[k], clamp_to_box);
    loss += q[k] * squared_distance(x, xhat);
  }
  return loss;
}

LossAndGrad sqvae_loss_with_noise(const ModelParams& p,
                                  std::span<const std::vector<double>> batch, double tau,
                                  std::span<const std::vector<double>> noise,
                                  const PriorVector* prior, double lambda_mix) {
  p.validate();
  if (tau <= 0.0) throw std::invalid_argument("sqvae_loss: tau must be positive");
  if (batch.empty()) throw std::invalid_argument("sqvae_loss: empty batch");
  if (noise.size() != batch.size()) {
    throw std::invalid_argument("sqvae_loss: need one noise row per sample");
  }
  if (prior && (lambda_mix < 0.0 || lambda_mix > 1.0)) {
    throw std::invalid_argument("sqvae_loss: lambda_mix must lie in [0,1]");
  }
  if (prior) {
    for (double v : *prior) {
      if (v < kPriorFloor) throw std::invalid_argument("sqvae_loss: prior entry below floor");
    }
  }

  const std::size_t K = p.codebook.size();
  const std::size_t dz = p.dz();
  const std::size_t d = p.data_dim();
  const double sigma2 = std::exp(p.log_sigma2);
  const double beta_eff = 0.5 * std::exp(-p.log_sigma_psi2);  // 1 / (2 sigma_psi^2)

  const auto blocks = p.blocks();
  const std::size_t enc_off = blocks[0].offset;
  const std::size_t dec_off = blocks[1].offset;
  const std::size_t cb_off = blocks[2].offset;
  const std::size_t ls_off = blocks[3].offset;
  const std::size_t lsp_off = blocks[4].offset;

  LossAndGrad out;
  out.grad.assign(p.flat_size(), 0.0);

  double total = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& x = batch[b];
    if (x.size() != d) throw std::invalid_argument("sqvae_loss: sample dimension mismatch");
    if (noise[b].size() != K) throw std::invalid_argument("sqvae_loss: noise width mismatch");

    MlpTape enc_tape;
    const auto z = mlp_forward(p.encoder_spec, p.encoder_params, x, &enc_tape);

    std::vector<double> d2(K);
    std::vector<double> logits(K);
    for (std::size_t k = 0; k < K; ++k) {
      d2[k] = squared_distance(z, p.codebook.entries[k]);
      logits[k] = -beta_eff * d2[k];
    }
    const IndexDistribution q = posterior_from_sq_distances(d2, beta_eff);
    const auto s = gumbel_softmax_from_noise(logits, noise[b], tau);

    std::vector<double> zq(dz, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t i = 0; i < dz; ++i) zq[i] += s[k] * p.codebook.entries[k][i];
    }

    MlpTape dec_tape;
    const auto xhat = mlp_forward(p.decoder_spec, p.decoder_params, zq, &dec_tape);

    double rec = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double r = x[i] - xhat[i];
      rec += r * r;
    }

    double quant = 0.0;   // sum_k q_k d2_k
    double negent = 0.0;  // sum_k q_k log q_k
    for (std::size_t k = 0; k < K; ++k) {
      quant += q[k] * d2[k];
      negent += xlogx(q[k]);
    }
    double cross = 0.0;  // -sum_k q_k log prior_k
    if (prior && lambda_mix > 0.0) {
      for (std::size_t k = 0; k < K; ++k) cross -= q[k] * std::log((*prior)[k]);
    }

    const double term_logvar = 0.5 * static_cast<double>(d) * p.log_sigma2;
    const double term_rec = rec / (2.0 * sigma2);
    const double term_quant = beta_eff * quant;
    const double sample_loss =
        term_logvar + term_rec + term_quant + negent + lambda_mix * cross;
    if (!std::isfinite(sample_loss)) {
      std::string which = !std::isfinite(term_rec)     ? "reconstruction"
                          : !std::isfinite(term_quant) ? "quantization"
                          : !std::isfinite(negent)     ? "entropy"
                                                       : "log-variance";
      throw std::runtime_error("sqvae_loss: non-finite " + which + " term");
    }
    total += sample_loss;

    // Backward. Residual path through the decoder.
    std::vector<double> dl_dxhat(d);
    for (std::size_t i = 0; i < d; ++i) dl_dxhat[i] = -(x[i] - xhat[i]) / sigma2;
    std::vector<double> dl_dzq;
    mlp_backward_accumulate(dec_tape, dl_dxhat,
                            std::span<double>(out.grad.data() + dec_off,
                                              p.decoder_params.size()),
                            &dl_dzq);

    // Gumbel path: z_q = sum_k s_k e_k.
    std::vector<double> v(K);  // dL/ds_k
    double v_dot_s = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      double dot = 0.0;
      for (std::size_t i = 0; i < dz; ++i) dot += dl_dzq[i] * p.codebook.entries[k][i];
      v[k] = dot;
      v_dot_s += dot * s[k];
      double* eg = out.grad.data() + cb_off + k * dz;
      for (std::size_t i = 0; i < dz; ++i) eg[i] += s[k] * dl_dzq[i];
    }

    // Upstream on q: quantization term + entropy (+ optional prior cross term).
    // Contracted against the softmax Jacobian via q_k (c_k - <c, q>), with the
    // q log q piece folded in safely for q_k = 0.
    std::vector<double> qc(K);  // q_k * c_k
    double c_dot_q = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      double ck_linear = beta_eff * d2[k] + 1.0;
      if (prior && lambda_mix > 0.0) ck_linear -= lambda_mix * std::log((*prior)[k]);
      qc[k] = q[k] * ck_linear + xlogx(q[k]);
      c_dot_q += qc[k];
    }

    std::vector<double> dl_dlogits(K);
    double dl_dbeta = quant;  // direct term: beta_eff * sum q d2
    for (std::size_t k = 0; k < K; ++k) {
      const double gumbel_part = s[k] * (v[k] - v_dot_s) / tau;
      const double q_part = qc[k] - q[k] * c_dot_q;
      dl_dlogits[k] = gumbel_part + q_part;
      dl_dbeta -= dl_dlogits[k] * d2[k];  // logits_k = -beta_eff * d2_k
    }

    // Distance path into z and the codebook.
    std::vector<double> dl_dz(dz, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      const double dl_dd2 = beta_eff * (q[k] - dl_dlogits[k]);
      if (dl_dd2 == 0.0) continue;
      double* eg = out.grad.data() + cb_off + k * dz;
      for (std::size_t i = 0; i < dz; ++i) {
        const double diff = z[i] - p.codebook.entries[k][i];
        dl_dz[i] += dl_dd2 * 2.0 * diff;
        eg[i] -= dl_dd2 * 2.0 * diff;
      }
    }
    mlp_backward_accumulate(enc_tape, dl_dz,
                            std::span<double>(out.grad.data() + enc_off,
                                              p.encoder_params.size()),
                            nullptr);

    out.grad[ls_off] += 0.5 * static_cast<double>(d) - rec / (2.0 * sigma2);
    out.grad[lsp_off] += dl_dbeta * (-beta_eff);  // beta_eff = exp(-lsp)/2
  }

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  out.loss = total * inv_b;
  for (double& g : out.grad) g *= inv_b;
  return out;
}

LossAndGrad sqvae_loss(const ModelParams& p, std::span<const std::vector<double>> batch,
                       double tau, Rng& rng, const PriorVector* prior, double lambda_mix) {
  std::vector<std::vector<double>> noise(batch.size());
  for (auto& row : noise) {
    row.resize(p.codebook.size());
    for (double& g : row) g = rng.gumbel();
  }
  return sqvae_loss_with_noise(p, batch, tau, noise, prior, lambda_mix);
}

LossAndGrad vq_loss(const ModelParams& p, std::span<const std::vector<double>> batch) {
  p.validate();
  if (batch.empty()) throw std::invalid_argument("vq_loss: empty batch");

  const std::size_t dz = p.dz();
  const std::size_t d = p.data_dim();
  const auto blocks = p.blocks();
  const std::size_t enc_off = blocks[0].offset;
  const std::size_t dec_off = blocks[1].offset;
  const std::size_t cb_off = blocks[2].offset;

  LossAndGrad out;
  out.grad.assign(p.flat_size(), 0.0);

  double total = 0.0;
  for (const auto& x : batch) {
    if (x.size() != d) throw std::invalid_argument("vq_loss: sample dimension mismatch");

    MlpTape enc_tape;
    const auto z = mlp_forward(p.encoder_spec, p.encoder_params, x, &enc_tape);
    const auto quantized = quantize_straight_through(z, p.codebook);
    const auto& code = quantized.code;

    MlpTape dec_tape;
    const auto xhat = mlp_forward(p.decoder_spec, p.decoder_params, code, &dec_tape);

    double rec = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double r = x[i] - xhat[i];
      rec += r * r;
    }
    total += rec + codebook_loss(z, code) + commitment_loss(z, code);

    std::vector<double> dl_dxhat(d);
    for (std::size_t i = 0; i < d; ++i) dl_dxhat[i] = -2.0 * (x[i] - xhat[i]);
    std::vector<double> dl_dcode;
    mlp_backward_accumulate(dec_tape, dl_dxhat,
                            std::span<double>(out.grad.data() + dec_off,
                                              p.decoder_params.size()),
                            &dl_dcode);

    // Straight-through: the reconstruction gradient at the code flows to z
    // unchanged; the commitment term adds 0.5 (z - e).
    std::vector<double> dl_dz(dz);
    double* eg = out.grad.data() + cb_off + quantized.index * dz;
    for (std::size_t i = 0; i < dz; ++i) {
      const double diff = z[i] - code[i];
      dl_dz[i] = dl_dcode[i] + 0.5 * diff;
      eg[i] += -2.0 * diff;  // codebook loss pulls the entry toward stop(z)
    }
    mlp_backward_accumulate(enc_tape, dl_dz,
                            std::span<double>(out.grad.data() + enc_off,
                                              p.encoder_params.size()),
                            nullptr);
  }

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  out.loss = total * inv_b;
  for (double& g : out.grad) g *= inv_b;
  return out;
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) h -= xlogx(v);
  return h;
}

double entropy_of_posteriors(const CategoricalPosterior& post) {
  if (post.empty()) throw std::invalid_argument("entropy_of_posteriors: empty posterior");
  double acc = 0.0;
  for (const auto& row : post) acc += entropy(row);
  return acc / static_cast<double>(post.size());
}

double cdvib_regularizer(const CategoricalPosterior& post, const PriorVector& prior) {
  if (post.empty()) throw std::invalid_argument("cdvib_regularizer: empty posterior");
  for (double v : prior) {
    if (v < kPriorFloor) {
      throw std::invalid_argument("cdvib_regularizer: prior entry below 1e-12 floor");
    }
  }
  double acc = 0.0;
  for (const auto& row : post) {
    if (row.size() != prior.size()) {
      throw std::invalid_argument("cdvib_regularizer: prior width mismatch");
    }
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (row[k] > 0.0) acc += row[k] * (std::log(row[k]) - std::log(prior[k]));
    }
  }
  return acc / static_cast<double>(post.size());
}

double mixed_regularizer(const CategoricalPosterior& post, const PriorVector& prior,
                         double lambda_mix) {
  if (lambda_mix < 0.0 || lambda_mix > 1.0) {
    throw std::invalid_argument("mixed_regularizer: lambda_mix must lie in [0,1]");
  }
  return (1.0 - lambda_mix) * (-entropy_of_posteriors(post)) +
         lambda_mix * cdvib_regularizer(post, prior);
}

}  // namespace vqgb
