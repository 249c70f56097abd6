#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vqgb/model.hpp"
#include "vqgb/resampling.hpp"
#include "vqgb/trainer.hpp"

namespace vqgb {

// KL(p || q) in nats; 0 log 0 = 0. Returns +infinity when q has mass below
// 1e-12 where p has support -- an infinite-KL signal, not an error.
double categorical_kl(std::span<const double> p, std::span<const double> q);

// Mean over rows of KL(row || prior); the empirical KL bound term per sample.
double empirical_kl_term(const CategoricalPosterior& posteriors, const PriorVector& prior);

// Column mean of the posterior rows, renormalized: the empirical realization
// of the KL-optimal marginal prior.
PriorVector marginal_prior(const CategoricalPosterior& posteriors);

double digamma(double x);

// Frequency plug-in estimate of I(feature; label) for discrete pairs.
double plugin_discrete_mi(std::span<const long> features, std::span<const int> labels);

// Mixed continuous/discrete k-NN estimate of I(feature; label) with max-norm
// distances. Duplicated features get a deterministic 1e-10-scale jitter (with
// a warning on stderr). Clamped below at 0.
double knn_mi(std::span<const std::vector<double>> features, std::span<const int> labels,
              std::size_t k);

enum class CmiPooling { kPerSeed, kPooled };

struct CmiProtocolConfig {
  std::size_t num_u_draws = 5;
  std::size_t knn_k = 3;
  CmiPooling pooling = CmiPooling::kPooled;

  void validate() const;
};

// One supersample row under one U draw, after retraining on that draw's
// training half. Index and loss values are stored by role (train/test); the
// estimators reorder them by column using the bit.
struct CmiRecord {
  std::size_t u_draw = 0;
  std::size_t row = 0;
  int j_train = 0;
  int j_test = 0;
  int u_bit = 0;
  double train_loss_row = 0.0;
  double test_loss_row = 0.0;
};

enum class CmiFeature { kIndexPair, kLossPair };

// Per-row records for one trained replica: argmax indices and clamped l0
// values at the training and held-out points of every supersample row.
std::vector<CmiRecord> cmi_records_for_draw(const ModelParams& params,
                                            const Supersample& ss, const UIndex& u,
                                            std::size_t draw_index, PosteriorMode mode);

// MI of the column-ordered feature against the selection bit. kPerSeed
// averages one estimate per retrained replica; kPooled estimates once over
// all records.
double cmi_from_records(std::span<const CmiRecord> records, std::size_t num_codes,
                        CmiFeature feature, CmiPooling pooling, std::size_t knn_k);

struct CmiEstimate {
  double index_mi = 0.0;  // plug-in, index-pair features
  double loss_mi = 0.0;   // k-NN, loss-pair features
  std::vector<CmiRecord> records;
};

// Raised when a retraining replica fails; carries whatever records the other
// replicas produced so callers can persist them.
struct CmiReplicaFailure : std::runtime_error {
  std::vector<CmiRecord> partial_records;
  CmiReplicaFailure(const std::string& msg, std::vector<CmiRecord> records)
      : std::runtime_error(msg), partial_records(std::move(records)) {}
};

// Retrains once per U draw (replicas run concurrently), records per-row
// outcomes, and aggregates per protocol.pooling. Estimates are per sample and
// directly comparable to the bound's per-n CMI term.
CmiEstimate estimate_cmi_term(const TrainConfig& config, const ArchSpec& arch,
                              const Supersample& ss, const CmiProtocolConfig& protocol);

}  // namespace vqgb
