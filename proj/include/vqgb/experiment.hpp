#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vqgb/bounds.hpp"
#include "vqgb/datasets.hpp"
#include "vqgb/infotools.hpp"
#include "vqgb/trainer.hpp"

namespace vqgb {

// Flat key-value configuration: one "key = value" per line, '#' comments.
class KeyValueConfig {
 public:
  static KeyValueConfig load(const std::string& path);
  static KeyValueConfig parse(const std::string& text);

  void set(const std::string& key, const std::string& value);
  // "key=value" as passed to --override.
  void apply_override(const std::string& assignment);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  std::vector<std::size_t> get_size_list(const std::string& key,
                                         std::vector<std::size_t> fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// Everything a batch run needs: data generator, architecture, training
// schedule, resampling protocol, grids, and output location.
struct ExperimentConfig {
  // dataset
  std::size_t data_dim = 2;
  std::size_t data_components = 4;
  double data_spread = 0.08;
  std::string data_idx_path;  // when set, sample from this IDX file instead

  // architecture
  std::size_t dz = 2;
  std::size_t num_codes = 8;
  std::vector<std::size_t> encoder_hidden = {16};
  std::size_t decoder_width = 16;
  std::size_t decoder_depth = 2;
  Activation activation = Activation::kTanh;
  Activation decoder_activation = Activation::kTanh;

  TrainConfig train;
  CmiProtocolConfig protocol;

  // sweep grids
  std::vector<std::size_t> n_grid = {64, 128, 256, 512};
  std::vector<std::size_t> k_grid = {8};
  std::vector<std::size_t> depth_grid = {2};
  std::size_t num_seeds = 10;

  // bound inputs that are user-supplied
  std::size_t natarajan_dim = 4;
  double delta_cover = 0.01;
  std::optional<double> log_covering_number;  // parametric helper when unset

  // generation-quality protocol
  std::size_t holdout_size = 1000;
  std::size_t generated_size = 1000;

  std::uint64_t master_seed = 1;
  std::size_t jobs = 0;  // 0 means hardware concurrency
  std::string out_dir = "out";

  static ExperimentConfig from_kv(const KeyValueConfig& kv);
  void write_kv(std::ostream& os) const;

  ArchSpec make_arch(std::size_t K, std::size_t depth) const;
  BoundedDataset make_dataset(std::size_t count, std::uint64_t seed) const;
};

// d_phi * d_z * log(L0 / delta); the parametric covering-number stand-in.
double parametric_log_covering(std::size_t d_phi, std::size_t d_z, double L0, double delta);

// Runs fn(0..count-1) on up to jobs worker threads.
void parallel_for(std::size_t count, std::size_t jobs,
                  const std::function<void(std::size_t)>& fn);

// Writes content to path via a temp file + rename.
void write_file_atomic(const std::string& path, const std::string& content);

// JSON round-trip of trained parameters.
void save_model(const std::string& path, const ModelParams& params,
                const PriorVector& prior);
std::pair<ModelParams, PriorVector> load_model(const std::string& path);

// Batch entry points. Each writes CSV artifacts under cfg.out_dir and returns
// a process exit code (0 ok, 2 when a bound violation was flagged).
int run_train(const ExperimentConfig& cfg);
int run_gap(const ExperimentConfig& cfg);        // base-cell gap protocol
int run_sweep(const ExperimentConfig& cfg);      // full (n, K, depth) grids
int run_cmi(const ExperimentConfig& cfg);
int run_bound_report(const ExperimentConfig& cfg);
int run_genquality(const ExperimentConfig& cfg);
int run_prior_ab(const ExperimentConfig& cfg);
int run_oracle(const ExperimentConfig& cfg);

}  // namespace vqgb
