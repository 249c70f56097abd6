#include "vqgb/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vqgb {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
constexpr double kDivergenceLimit = 1e12;
constexpr double kPriorFloor = 1e-12;

}  // namespace

void TrainConfig::validate(std::size_t n) const {
  if (batch_size == 0 || batch_size > n) {
    throw std::invalid_argument("TrainConfig: batch_size must lie in [1, n]");
  }
  if (!(lr > 0.0) || !std::isfinite(lr)) {
    throw std::invalid_argument("TrainConfig: lr must be positive and finite");
  }
  if (!(anneal_rate >= 0.0) || !std::isfinite(anneal_rate)) {
    throw std::invalid_argument("TrainConfig: anneal_rate must be nonnegative");
  }
  if (alpha_ema < 0.0 || alpha_ema > 1.0) {
    throw std::invalid_argument("TrainConfig: alpha_ema must lie in [0,1]");
  }
  if (lambda_mix < 0.0 || lambda_mix > 1.0) {
    throw std::invalid_argument("TrainConfig: lambda_mix must lie in [0,1]");
  }
}

void TrainHistory::write_csv(std::ostream& os) const {
  os << "epoch,train_loss,val_loss,tau,lr\n";
  for (std::size_t e = 0; e < epochs(); ++e) {
    os << e << ',' << train_loss[e] << ',' << val_loss[e] << ',' << tau[e] << ',' << lr[e]
       << '\n';
  }
}

void adam_step(std::vector<double>& params, std::span<const double> grads,
               AdamState& state, double lr,
               const std::vector<ModelParams::Block>* blocks) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("adam_step: gradient size mismatch");
  }
  if (state.m.size() != params.size()) state = AdamState(params.size());

  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (std::isfinite(grads[i])) continue;
    std::string where = "index " + std::to_string(i);
    if (blocks) {
      for (const auto& b : *blocks) {
        if (i >= b.offset && i < b.offset + b.length) {
          where = b.name;
          break;
        }
      }
    }
    throw std::runtime_error("adam_step: non-finite gradient in " + where);
  }

  state.t += 1;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = kAdamBeta1 * state.m[i] + (1.0 - kAdamBeta1) * grads[i];
    state.v[i] = kAdamBeta2 * state.v[i] + (1.0 - kAdamBeta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
  }
}

double anneal_temperature(std::size_t step, double rate) {
  if (!(rate >= 0.0)) throw std::invalid_argument("anneal_temperature: rate must be >= 0");
  return std::exp(-rate * static_cast<double>(step));
}

PriorVector update_prior_ema(const PriorVector& pi, const CategoricalPosterior& batch_post,
                             double alpha) {
  if (alpha < 0.0 || alpha > 1.0) {
    throw std::invalid_argument("update_prior_ema: alpha must lie in [0,1]");
  }
  if (batch_post.empty()) throw std::invalid_argument("update_prior_ema: empty batch");

  const std::size_t K = pi.size();
  std::vector<double> phat(K, 0.0);
  for (const auto& row : batch_post) {
    if (row.size() != K) throw std::invalid_argument("update_prior_ema: width mismatch");
    for (std::size_t k = 0; k < K; ++k) phat[k] += row[k];
  }
  for (double& v : phat) v /= static_cast<double>(batch_post.size());

  PriorVector out(K);
  double sum = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    out[k] = std::max((1.0 - alpha) * pi[k] + alpha * phat[k], kPriorFloor);
    sum += out[k];
  }
  for (double& v : out) v /= sum;
  return out;
}

double mean_l0(const ModelParams& params, std::span<const std::vector<double>> points,
               PosteriorMode mode, bool clamp_to_box) {
  if (points.empty()) throw std::invalid_argument("mean_l0: empty point set");
  double acc = 0.0;
  for (const auto& x : points) acc += reconstruction_loss_l0(params, x, mode, clamp_to_box);
  return acc / static_cast<double>(points.size());
}

TrainResult train(const TrainConfig& config, std::span<const std::vector<double>> data,
                  const ArchSpec& arch, std::span<const std::vector<double>> val) {
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  config.validate(data.size());

  Rng rng(config.seed);
  TrainResult result;
  result.params = init_model(arch.encoder, arch.decoder, arch.num_codes, rng);
  const std::size_t K = arch.num_codes;
  result.prior.assign(K, 1.0 / static_cast<double>(K));

  // Seed the codebook on the encoded data manifold so every entry starts
  // with traffic; entries left in dead regions tend never to be selected.
  for (std::size_t k = 0; k < K; ++k) {
    result.params.codebook.entries[k] = encode(result.params, data[rng.index(data.size())]);
  }

  if (val.empty()) val = data;

  const PosteriorMode eval_mode = config.mode == TrainMode::kSqStochastic
                                      ? PosteriorMode::kStochastic
                                      : PosteriorMode::kDeterministic;

  std::vector<double> flat = result.params.to_flat();
  const auto blocks = result.params.blocks();
  AdamState adam(flat.size());

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  double lr = config.lr;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t epochs_since_improvement = 0;
  std::size_t global_step = 0;

  std::vector<std::vector<double>> batch;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);

    double epoch_loss = 0.0;
    std::size_t num_batches = 0;
    double current_tau = anneal_temperature(global_step, config.anneal_rate);

    for (std::size_t start = 0; start < data.size(); start += config.batch_size) {
      const std::size_t stop = std::min(start + config.batch_size, data.size());
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(data[order[i]]);

      current_tau = anneal_temperature(global_step, config.anneal_rate);
      result.params.from_flat(flat);

      LossAndGrad lg;
      try {
        if (config.mode == TrainMode::kSqStochastic) {
          const PriorVector* prior = config.lambda_mix > 0.0 ? &result.prior : nullptr;
          lg = sqvae_loss(result.params, batch, current_tau, rng, prior, config.lambda_mix);
        } else {
          lg = vq_loss(result.params, batch);
        }
      } catch (const std::runtime_error& e) {
        throw TrainingDiverged("train: loss diverged at epoch " + std::to_string(epoch) +
                                   " (" + e.what() + ")",
                               result.history);
      }

      if (!std::isfinite(lg.loss) || lg.loss > kDivergenceLimit) {
        throw TrainingDiverged("train: loss diverged at epoch " + std::to_string(epoch),
                               result.history);
      }

      adam_step(flat, lg.grad, adam, lr, &blocks);
      ++global_step;
      epoch_loss += lg.loss;
      ++num_batches;

      if (config.lambda_mix > 0.0) {
        result.params.from_flat(flat);
        result.params.beta_q = 0.5 * std::exp(-result.params.log_sigma_psi2);
        const auto post = posterior_matrix(result.params, batch, PosteriorMode::kStochastic);
        result.prior = update_prior_ema(result.prior, post, config.alpha_ema);
      }
    }

    result.params.from_flat(flat);
    result.params.beta_q = 0.5 * std::exp(-result.params.log_sigma_psi2);

    const double vloss = mean_l0(result.params, val, eval_mode);
    result.history.train_loss.push_back(epoch_loss / static_cast<double>(num_batches));
    result.history.val_loss.push_back(vloss);
    result.history.tau.push_back(current_tau);
    result.history.lr.push_back(lr);
    result.history.prior.push_back(result.prior);

    if (vloss < best_val) {
      best_val = vloss;
      epochs_since_improvement = 0;
    } else {
      ++epochs_since_improvement;
      if (epochs_since_improvement >= config.lr_halve_patience_epochs) {
        lr *= 0.5;
        epochs_since_improvement = 0;
      }
    }
  }

  result.params.from_flat(flat);
  result.params.beta_q = 0.5 * std::exp(-result.params.log_sigma_psi2);
  return result;
}

}  // namespace vqgb
