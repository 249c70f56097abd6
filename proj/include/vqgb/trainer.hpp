#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "vqgb/model.hpp"

namespace vqgb {

enum class TrainMode { kSqStochastic, kVqDeterministic };

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::size_t lr_halve_patience_epochs = 3;
  double anneal_rate = 1e-5;
  double alpha_ema = 0.9;
  double lambda_mix = 0.0;
  TrainMode mode = TrainMode::kSqStochastic;
  std::uint64_t seed = 0;

  void validate(std::size_t n) const;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<double> tau;
  std::vector<double> lr;
  std::vector<PriorVector> prior;

  std::size_t epochs() const { return train_loss.size(); }
  // Columns: epoch,train_loss,val_loss,tau,lr
  void write_csv(std::ostream& os) const;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t t = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// Standard bias-corrected Adam update (beta1=0.9, beta2=0.999, eps=1e-8),
// applied in place. blocks, when given, names the offending block on
// non-finite gradients.
void adam_step(std::vector<double>& params, std::span<const double> grads,
               AdamState& state, double lr,
               const std::vector<ModelParams::Block>* blocks = nullptr);

// tau = exp(-rate * step); rate 0 disables annealing.
double anneal_temperature(std::size_t step, double rate);

// pi <- (1 - alpha) pi + alpha * column-mean(batch_post), floored at 1e-12 and
// renormalized.
PriorVector update_prior_ema(const PriorVector& pi, const CategoricalPosterior& batch_post,
                             double alpha);

struct ArchSpec {
  MlpSpec encoder;
  MlpSpec decoder;
  std::size_t num_codes = 1;
};

struct TrainResult {
  ModelParams params;
  PriorVector prior;
  TrainHistory history;
};

// Thrown when the loss explodes; carries whatever history accumulated.
struct TrainingDiverged : std::runtime_error {
  TrainHistory history;
  TrainingDiverged(const std::string& msg, TrainHistory h)
      : std::runtime_error(msg), history(std::move(h)) {}
};

// Runs the full optimization loop: per-epoch shuffling, Adam, temperature
// annealing, patience-based learning-rate halving against the validation
// loss, and per-batch EMA prior updates when lambda_mix > 0. Deterministic
// given config.seed. val empty means validate on the training data.
TrainResult train(const TrainConfig& config, std::span<const std::vector<double>> data,
                  const ArchSpec& arch, std::span<const std::vector<double>> val = {});

// Mean l0 over a point set; the validation metric (deterministic).
double mean_l0(const ModelParams& params, std::span<const std::vector<double>> points,
               PosteriorMode mode, bool clamp_to_box = false);

}  // namespace vqgb
