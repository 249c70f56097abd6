#include "vqgb/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "vqgb/resampling.hpp"
#include "vqgb/transport.hpp"

namespace vqgb {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

PosteriorMode eval_mode(const TrainConfig& tc) {
  return tc.mode == TrainMode::kSqStochastic ? PosteriorMode::kStochastic
                                             : PosteriorMode::kDeterministic;
}

void write_csv(const ExperimentConfig& cfg, const std::string& name,
               const std::string& content) {
  std::filesystem::create_directories(cfg.out_dir);
  write_file_atomic((std::filesystem::path(cfg.out_dir) / name).string(), content);
}

void append_cmi_record_rows(std::ostringstream& os, std::size_t n, std::size_t K,
                            std::size_t seed, std::span<const CmiRecord> records) {
  for (const auto& r : records) {
    os << n << ',' << K << ',' << seed << ',' << r.u_draw << ',' << r.row << ','
       << r.j_train << ',' << r.u_bit << ',' << fmt(r.test_loss_row) << ','
       << fmt(r.train_loss_row) << ',' << r.j_test << '\n';
  }
}

constexpr const char* kCmiRecordHeader =
    "n,K,seed,u_draw,row,j_index,u_bit,test_loss_row,train_loss_row,j_index_test\n";

// One (n, K, depth, seed) sweep cell: supersample, one training per U draw,
// gap and KL terms per draw, CMI records pooled across draws.
struct GapCell {
  std::size_t n = 0, K = 0, depth = 0, seed = 0;

  struct DrawRow {
    std::size_t u_draw = 0;
    double train_loss = 0.0, test_loss = 0.0, gap = 0.0;
    double kl_uniform = 0.0, kl_marginal = 0.0;
  };
  std::vector<DrawRow> rows;
  std::vector<CmiRecord> records;
  double cmi_index = 0.0;
  double cmi_loss = 0.0;
  std::string error;
};

GapCell run_gap_cell(const ExperimentConfig& cfg, std::size_t n, std::size_t K,
                     std::size_t depth, std::size_t seed) {
  GapCell cell;
  cell.n = n;
  cell.K = K;
  cell.depth = depth;
  cell.seed = seed;
  try {
    const std::uint64_t cell_seed =
        Rng::mix(cfg.master_seed, (n * 131 + K) * 1009 + depth * 31 + seed);
    const BoundedDataset ds = cfg.make_dataset(2 * n, cell_seed);
    Rng pair_rng(Rng::mix(cell_seed, 0x9a12));
    const Supersample ss = make_supersample(ds.points, pair_rng);
    const ArchSpec arch = cfg.make_arch(K, depth);
    const PriorVector uniform(K, 1.0 / static_cast<double>(K));

    for (std::size_t draw = 0; draw < cfg.protocol.num_u_draws; ++draw) {
      Rng u_rng(Rng::mix(cell_seed, 0xCD1 + draw));
      const UIndex u = sample_u(n, u_rng);
      const SplitResult split = split_by_u(ss, u);

      TrainConfig tc = cfg.train;
      tc.seed = Rng::mix(cell_seed, 0x7A11 + draw);
      const TrainResult tr = train(tc, split.train, arch, split.test);
      const PosteriorMode mode = eval_mode(cfg.train);

      GapCell::DrawRow row;
      row.u_draw = draw;
      const GapEstimate gap = estimate_gap(tr.params, ss, u, mode);
      row.train_loss = gap.train_loss;
      row.test_loss = gap.test_loss;
      row.gap = gap.absolute();

      const CategoricalPosterior post = posterior_matrix(tr.params, split.train, mode);
      row.kl_uniform = empirical_kl_term(post, uniform);
      row.kl_marginal = empirical_kl_term(post, marginal_prior(post));
      cell.rows.push_back(row);

      const auto recs = cmi_records_for_draw(tr.params, ss, u, draw, mode);
      cell.records.insert(cell.records.end(), recs.begin(), recs.end());
    }

    cell.cmi_index = cmi_from_records(cell.records, K, CmiFeature::kIndexPair,
                                      cfg.protocol.pooling, cfg.protocol.knn_k);
    cell.cmi_loss = cmi_from_records(cell.records, K, CmiFeature::kLossPair,
                                     cfg.protocol.pooling, cfg.protocol.knn_k);
  } catch (const std::exception& e) {
    cell.error = e.what();
  }
  return cell;
}

int run_sweep_grids(const ExperimentConfig& cfg, std::span<const std::size_t> n_grid,
                    std::span<const std::size_t> k_grid,
                    std::span<const std::size_t> depth_grid) {
  struct CellKey {
    std::size_t n, K, depth, seed;
  };
  std::vector<CellKey> keys;
  for (std::size_t n : n_grid) {
    for (std::size_t K : k_grid) {
      for (std::size_t depth : depth_grid) {
        for (std::size_t seed = 0; seed < cfg.num_seeds; ++seed) {
          keys.push_back({n, K, depth, seed});
        }
      }
    }
  }

  std::vector<GapCell> cells(keys.size());
  parallel_for(keys.size(), cfg.jobs, [&](std::size_t i) {
    const auto& k = keys[i];
    cells[i] = run_gap_cell(cfg, k.n, k.K, k.depth, k.seed);
  });

  std::ostringstream gap_csv;
  gap_csv << "n,K,dz,seed,u_draw,train_loss,test_loss,gap,depth,kl_uniform,kl_marginal\n";
  std::ostringstream rec_csv;
  rec_csv << kCmiRecordHeader;
  std::ostringstream cell_csv;
  cell_csv << "n,K,depth,seed,cmi_index,cmi_loss,error\n";

  for (const auto& cell : cells) {
    for (const auto& row : cell.rows) {
      gap_csv << cell.n << ',' << cell.K << ',' << cfg.dz << ',' << cell.seed << ','
              << row.u_draw << ',' << fmt(row.train_loss) << ',' << fmt(row.test_loss)
              << ',' << fmt(row.gap) << ',' << cell.depth << ',' << fmt(row.kl_uniform)
              << ',' << fmt(row.kl_marginal) << '\n';
    }
    append_cmi_record_rows(rec_csv, cell.n, cell.K, cell.seed, cell.records);
    cell_csv << cell.n << ',' << cell.K << ',' << cell.depth << ',' << cell.seed << ','
             << fmt(cell.cmi_index) << ',' << fmt(cell.cmi_loss) << ','
             << cell.error << '\n';
    if (!cell.error.empty()) {
      std::cerr << "sweep cell (n=" << cell.n << ",K=" << cell.K << ",depth=" << cell.depth
                << ",seed=" << cell.seed << ") failed: " << cell.error << '\n';
    }
  }

  // Aggregates per grid point.
  std::ostringstream agg;
  agg << "n,K,depth,seeds,gap_mean,gap_std,train_loss_mean,train_loss_std,"
         "kl_uniform_mean,kl_marginal_mean,cmi_index_mean,cmi_index_std,"
         "cmi_loss_mean,cmi_loss_std\n";
  for (std::size_t n : n_grid) {
    for (std::size_t K : k_grid) {
      for (std::size_t depth : depth_grid) {
        std::vector<double> gaps, trains, klu, klm, cmi_i, cmi_l;
        for (const auto& cell : cells) {
          if (cell.n != n || cell.K != K || cell.depth != depth || !cell.error.empty()) {
            continue;
          }
          for (const auto& row : cell.rows) {
            gaps.push_back(row.gap);
            trains.push_back(row.train_loss);
            klu.push_back(row.kl_uniform);
            klm.push_back(row.kl_marginal);
          }
          cmi_i.push_back(cell.cmi_index);
          cmi_l.push_back(cell.cmi_loss);
        }
        if (gaps.empty()) continue;
        agg << n << ',' << K << ',' << depth << ',' << cmi_i.size() << ','
            << fmt(mean_of(gaps)) << ',' << fmt(std_of(gaps)) << ','
            << fmt(mean_of(trains)) << ',' << fmt(std_of(trains)) << ','
            << fmt(mean_of(klu)) << ',' << fmt(mean_of(klm)) << ','
            << fmt(mean_of(cmi_i)) << ',' << fmt(std_of(cmi_i)) << ','
            << fmt(mean_of(cmi_l)) << ',' << fmt(std_of(cmi_l)) << '\n';
      }
    }
  }

  write_csv(cfg, "gap.csv", gap_csv.str());
  write_csv(cfg, "cmi_records.csv", rec_csv.str());
  write_csv(cfg, "cmi_cells.csv", cell_csv.str());
  write_csv(cfg, "gap_aggregate.csv", agg.str());
  return 0;
}

}  // namespace

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  return parse(buf.str());
}

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
  KeyValueConfig kv;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config: line " + std::to_string(lineno) +
                               " is not key = value");
    }
    kv.set(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
  }
  return kv;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  if (key.empty()) throw std::runtime_error("config: empty key");
  values_[key] = value;
}

void KeyValueConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw std::runtime_error("override must look like key=value: " + assignment);
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

bool KeyValueConfig::has(const std::string& key) const { return values_.count(key) > 0; }

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : std::stod(it->second);
}

std::size_t KeyValueConfig::get_size(const std::string& key, std::size_t fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : static_cast<std::size_t>(std::stoull(it->second));
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : std::stoull(it->second);
}

std::vector<std::size_t> KeyValueConfig::get_size_list(
    const std::string& key, std::vector<std::size_t> fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<std::size_t> out;
  std::istringstream is(it->second);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    const std::string t = trim(tok);
    if (!t.empty()) out.push_back(static_cast<std::size_t>(std::stoull(t)));
  }
  if (out.empty()) throw std::runtime_error("config: empty list for " + key);
  return out;
}

ExperimentConfig ExperimentConfig::from_kv(const KeyValueConfig& kv) {
  ExperimentConfig cfg;
  cfg.data_dim = kv.get_size("data.dim", cfg.data_dim);
  cfg.data_components = kv.get_size("data.components", cfg.data_components);
  cfg.data_spread = kv.get_double("data.spread", cfg.data_spread);
  cfg.data_idx_path = kv.get_string("data.idx_path", cfg.data_idx_path);
  if (!cfg.data_idx_path.empty()) {
    // dimensionality comes from the file header
    cfg.data_dim = load_idx(cfg.data_idx_path).dim;
  }

  cfg.dz = kv.get_size("arch.dz", cfg.dz);
  cfg.num_codes = kv.get_size("arch.num_codes", cfg.num_codes);
  cfg.encoder_hidden = kv.get_size_list("arch.encoder_hidden", cfg.encoder_hidden);
  cfg.decoder_width = kv.get_size("arch.decoder_width", cfg.decoder_width);
  cfg.decoder_depth = kv.get_size("arch.decoder_depth", cfg.decoder_depth);
  const auto parse_activation = [&](const std::string& key, Activation fallback) {
    const std::string a = kv.get_string(key, "");
    if (a.empty()) return fallback;
    if (a == "tanh") return Activation::kTanh;
    if (a == "relu") return Activation::kRelu;
    if (a == "identity") return Activation::kIdentity;
    throw std::runtime_error("config: unknown activation " + a);
  };
  cfg.activation = parse_activation("arch.activation", cfg.activation);
  cfg.decoder_activation = parse_activation("arch.decoder_activation", cfg.activation);

  cfg.train.epochs = kv.get_size("train.epochs", cfg.train.epochs);
  cfg.train.batch_size = kv.get_size("train.batch_size", cfg.train.batch_size);
  cfg.train.lr = kv.get_double("train.lr", cfg.train.lr);
  cfg.train.lr_halve_patience_epochs =
      kv.get_size("train.patience", cfg.train.lr_halve_patience_epochs);
  cfg.train.anneal_rate = kv.get_double("train.anneal_rate", cfg.train.anneal_rate);
  cfg.train.alpha_ema = kv.get_double("train.alpha_ema", cfg.train.alpha_ema);
  cfg.train.lambda_mix = kv.get_double("train.lambda_mix", cfg.train.lambda_mix);
  const std::string mode = kv.get_string("train.mode", "sq");
  if (mode == "sq" || mode == "sq_stochastic") {
    cfg.train.mode = TrainMode::kSqStochastic;
  } else if (mode == "vq" || mode == "vq_deterministic") {
    cfg.train.mode = TrainMode::kVqDeterministic;
  } else {
    throw std::runtime_error("config: unknown train.mode " + mode);
  }

  cfg.protocol.num_u_draws = kv.get_size("protocol.num_u_draws", cfg.protocol.num_u_draws);
  cfg.protocol.knn_k = kv.get_size("protocol.knn_k", cfg.protocol.knn_k);
  const std::string pooling = kv.get_string("protocol.pooling", "pooled");
  if (pooling == "pooled") {
    cfg.protocol.pooling = CmiPooling::kPooled;
  } else if (pooling == "per_seed") {
    cfg.protocol.pooling = CmiPooling::kPerSeed;
  } else {
    throw std::runtime_error("config: unknown protocol.pooling " + pooling);
  }

  cfg.n_grid = kv.get_size_list("sweep.n_grid", cfg.n_grid);
  cfg.k_grid = kv.get_size_list("sweep.k_grid", cfg.k_grid);
  cfg.depth_grid = kv.get_size_list("sweep.depth_grid", cfg.depth_grid);
  cfg.num_seeds = kv.get_size("sweep.num_seeds", cfg.num_seeds);

  cfg.natarajan_dim = kv.get_size("bounds.natarajan_dim", cfg.natarajan_dim);
  cfg.delta_cover = kv.get_double("bounds.delta_cover", cfg.delta_cover);
  if (kv.has("bounds.log_covering_number")) {
    cfg.log_covering_number = kv.get_double("bounds.log_covering_number", 0.0);
  }

  cfg.holdout_size = kv.get_size("gen.holdout_size", cfg.holdout_size);
  cfg.generated_size = kv.get_size("gen.generated_size", cfg.generated_size);

  cfg.master_seed = kv.get_u64("seed", cfg.master_seed);
  cfg.jobs = kv.get_size("jobs", cfg.jobs);
  cfg.out_dir = kv.get_string("out", cfg.out_dir);
  cfg.train.seed = cfg.master_seed;
  return cfg;
}

void ExperimentConfig::write_kv(std::ostream& os) const {
  os << "data.dim = " << data_dim << "\ndata.components = " << data_components
     << "\ndata.spread = " << data_spread << "\narch.dz = " << dz
     << "\narch.num_codes = " << num_codes << "\narch.decoder_width = " << decoder_width
     << "\narch.decoder_depth = " << decoder_depth << "\ntrain.epochs = " << train.epochs
     << "\ntrain.batch_size = " << train.batch_size << "\ntrain.lr = " << train.lr
     << "\ntrain.lambda_mix = " << train.lambda_mix << "\nseed = " << master_seed
     << "\nout = " << out_dir << '\n';
}

ArchSpec ExperimentConfig::make_arch(std::size_t K, std::size_t depth) const {
  ArchSpec arch;
  arch.num_codes = K;
  arch.encoder.layer_widths.push_back(data_dim);
  for (std::size_t w : encoder_hidden) arch.encoder.layer_widths.push_back(w);
  arch.encoder.layer_widths.push_back(dz);
  arch.encoder.activation = activation;
  arch.decoder.layer_widths.push_back(dz);
  for (std::size_t l = 0; l < depth; ++l) arch.decoder.layer_widths.push_back(decoder_width);
  arch.decoder.layer_widths.push_back(data_dim);
  arch.decoder.activation = decoder_activation;
  return arch;
}

BoundedDataset ExperimentConfig::make_dataset(std::size_t count, std::uint64_t seed) const {
  Rng rng(seed);
  if (data_idx_path.empty()) {
    return synth_mixture(data_dim, data_components, count, data_spread, rng);
  }
  BoundedDataset full = load_idx(data_idx_path);
  if (full.size() < count) {
    throw std::runtime_error("make_dataset: IDX file holds fewer than the requested points");
  }
  std::vector<std::size_t> order(full.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  BoundedDataset out;
  out.dim = full.dim;
  out.provenance = full.provenance;
  out.points.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.points.push_back(full.points[order[i]]);
  return out;
}

double parametric_log_covering(std::size_t d_phi, std::size_t d_z, double L0, double delta) {
  if (!(delta > 0.0) || !(L0 > 0.0)) {
    throw std::invalid_argument("parametric_log_covering: L0 and delta must be positive");
  }
  return static_cast<double>(d_phi) * static_cast<double>(d_z) * std::log(L0 / delta);
}

void parallel_for(std::size_t count, std::size_t jobs,
                  const std::function<void(std::size_t)>& fn) {
  if (count == 0) return;
  std::size_t workers = jobs == 0 ? std::thread::hardware_concurrency() : jobs;
  if (workers == 0) workers = 1;
  workers = std::min(workers, count);
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + tmp);
    os << content;
  }
  std::filesystem::rename(tmp, path);
}

void save_model(const std::string& path, const ModelParams& params,
                const PriorVector& prior) {
  nlohmann::json j;
  j["encoder_widths"] = params.encoder_spec.layer_widths;
  j["decoder_widths"] = params.decoder_spec.layer_widths;
  j["activation"] = static_cast<int>(params.encoder_spec.activation);
  j["decoder_activation"] = static_cast<int>(params.decoder_spec.activation);
  j["encoder_params"] = params.encoder_params;
  j["decoder_params"] = params.decoder_params;
  j["codebook_dz"] = params.codebook.dz;
  j["codebook"] = params.codebook.entries;
  j["log_sigma2"] = params.log_sigma2;
  j["log_sigma_psi2"] = params.log_sigma_psi2;
  j["beta_q"] = params.beta_q;
  j["prior"] = prior;
  write_file_atomic(path, j.dump(2));
}

std::pair<ModelParams, PriorVector> load_model(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_model: cannot open " + path);
  nlohmann::json j;
  is >> j;
  ModelParams p;
  p.encoder_spec.layer_widths = j.at("encoder_widths").get<std::vector<std::size_t>>();
  p.decoder_spec.layer_widths = j.at("decoder_widths").get<std::vector<std::size_t>>();
  p.encoder_spec.activation = static_cast<Activation>(j.at("activation").get<int>());
  p.decoder_spec.activation = static_cast<Activation>(j.at("decoder_activation").get<int>());
  p.encoder_params = j.at("encoder_params").get<std::vector<double>>();
  p.decoder_params = j.at("decoder_params").get<std::vector<double>>();
  p.codebook.dz = j.at("codebook_dz").get<std::size_t>();
  p.codebook.entries = j.at("codebook").get<std::vector<std::vector<double>>>();
  p.log_sigma2 = j.at("log_sigma2").get<double>();
  p.log_sigma_psi2 = j.at("log_sigma_psi2").get<double>();
  p.beta_q = j.at("beta_q").get<double>();
  p.validate();
  return {std::move(p), j.at("prior").get<PriorVector>()};
}

int run_train(const ExperimentConfig& cfg) {
  const std::size_t n = cfg.n_grid.front();
  const BoundedDataset ds = cfg.make_dataset(n, Rng::mix(cfg.master_seed, 0xDA7A));
  const ArchSpec arch = cfg.make_arch(cfg.num_codes, cfg.decoder_depth);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.master_seed;
  const TrainResult tr = train(tc, ds.points, arch);

  std::ostringstream hist;
  tr.history.write_csv(hist);
  write_csv(cfg, "history.csv", hist.str());
  std::ostringstream data_csv;
  write_dataset_csv(data_csv, ds);
  write_csv(cfg, "dataset.csv", data_csv.str());
  std::filesystem::create_directories(cfg.out_dir);
  save_model((std::filesystem::path(cfg.out_dir) / "model.json").string(), tr.params,
             tr.prior);
  std::cout << "trained " << n << " samples, final train loss "
            << (tr.history.epochs() ? tr.history.train_loss.back() : 0.0) << '\n';
  return 0;
}

int run_gap(const ExperimentConfig& cfg) {
  const std::vector<std::size_t> n{cfg.n_grid.front()};
  const std::vector<std::size_t> k{cfg.k_grid.front()};
  const std::vector<std::size_t> d{cfg.depth_grid.front()};
  return run_sweep_grids(cfg, n, k, d);
}

int run_sweep(const ExperimentConfig& cfg) {
  return run_sweep_grids(cfg, cfg.n_grid, cfg.k_grid, cfg.depth_grid);
}

int run_cmi(const ExperimentConfig& cfg) {
  const std::size_t n = cfg.n_grid.front();
  const std::size_t K = cfg.k_grid.front();
  const std::uint64_t seed = Rng::mix(cfg.master_seed, 0xC31);
  const BoundedDataset ds = cfg.make_dataset(2 * n, seed);
  Rng pair_rng(Rng::mix(seed, 0x9a12));
  const Supersample ss = make_supersample(ds.points, pair_rng);

  TrainConfig tc = cfg.train;
  tc.seed = cfg.master_seed;
  const ArchSpec arch = cfg.make_arch(K, cfg.decoder_depth);

  std::vector<CmiRecord> records;
  try {
    const CmiEstimate est = estimate_cmi_term(tc, arch, ss, cfg.protocol);
    records = est.records;
    std::ostringstream summary;
    summary << "n,K,pooling,cmi_index,cmi_loss\n";
    for (const CmiPooling pool : {CmiPooling::kPooled, CmiPooling::kPerSeed}) {
      summary << n << ',' << K << ','
              << (pool == CmiPooling::kPooled ? "pooled" : "per_seed") << ','
              << fmt(cmi_from_records(records, K, CmiFeature::kIndexPair, pool,
                                      cfg.protocol.knn_k))
              << ','
              << fmt(cmi_from_records(records, K, CmiFeature::kLossPair, pool,
                                      cfg.protocol.knn_k))
              << '\n';
    }
    write_csv(cfg, "cmi_summary.csv", summary.str());
  } catch (const CmiReplicaFailure& e) {
    records = e.partial_records;
    std::cerr << e.what() << '\n';
    std::ostringstream rec_csv;
    rec_csv << kCmiRecordHeader;
    append_cmi_record_rows(rec_csv, n, K, 0, records);
    write_csv(cfg, "cmi_records.csv", rec_csv.str());
    return 1;
  }

  std::ostringstream rec_csv;
  rec_csv << kCmiRecordHeader;
  append_cmi_record_rows(rec_csv, n, K, 0, records);
  write_csv(cfg, "cmi_records.csv", rec_csv.str());
  return 0;
}

int run_bound_report(const ExperimentConfig& cfg) {
  const std::size_t n = cfg.n_grid.front();
  const std::size_t K = cfg.k_grid.front();
  const ArchSpec arch = cfg.make_arch(K, cfg.decoder_depth);

  std::vector<BoundReport> reports(cfg.num_seeds);
  std::vector<std::string> errors(cfg.num_seeds);

  for (std::size_t seed = 0; seed < cfg.num_seeds; ++seed) {
    try {
      const std::uint64_t cell_seed = Rng::mix(cfg.master_seed, 0xB0 + seed);
      const BoundedDataset ds = cfg.make_dataset(2 * n, cell_seed);
      Rng pair_rng(Rng::mix(cell_seed, 0x9a12));
      const Supersample ss = make_supersample(ds.points, pair_rng);
      Rng u_rng(Rng::mix(cell_seed, 0xCD1));
      const UIndex u = sample_u(n, u_rng);
      const SplitResult split = split_by_u(ss, u);

      TrainConfig tc = cfg.train;
      tc.seed = Rng::mix(cell_seed, 0x7A11);
      const TrainResult tr = train(tc, split.train, arch, split.test);
      const PosteriorMode mode = eval_mode(cfg.train);

      const GapEstimate gap = estimate_gap(tr.params, ss, u, mode);
      const CategoricalPosterior post = posterior_matrix(tr.params, split.train, mode);
      const PriorVector uniform(K, 1.0 / static_cast<double>(K));

      TrainConfig cmi_tc = cfg.train;
      cmi_tc.seed = cell_seed;
      const CmiEstimate cmi = estimate_cmi_term(cmi_tc, arch, ss, cfg.protocol);

      BoundInputs b;
      b.n = n;
      b.Delta = ds.delta();
      b.Delta_z = tr.params.codebook.latent_diameter();
      b.kl_empirical = empirical_kl_term(post, uniform);
      b.kl_cmi = cmi.index_mi;
      b.train_loss_mean = gap.train_loss;
      b.beta_q = tr.params.beta_q;
      b.delta_cover = cfg.delta_cover;
      b.log_covering_number =
          cfg.log_covering_number
              ? *cfg.log_covering_number
              : parametric_log_covering(arch.encoder.param_count(), cfg.dz, 1.0,
                                        cfg.delta_cover);
      b.d_K = cfg.natarajan_dim;
      b.K = K;
      reports[seed] = assemble_bound_report(b, gap.absolute());
    } catch (const std::exception& e) {
      errors[seed] = e.what();
    }
  }

  std::ostringstream csv;
  BoundReport::write_csv_header(csv);
  std::ostringstream text;
  bool violation = false;
  for (std::size_t seed = 0; seed < cfg.num_seeds; ++seed) {
    if (!errors[seed].empty()) {
      std::cerr << "bound report seed " << seed << " failed: " << errors[seed] << '\n';
      continue;
    }
    reports[seed].write_csv_row(csv);
    text << "seed " << seed << ":\n";
    reports[seed].write_text(text);
    if (reports[seed].gap_exceeds_any_rhs()) {
      violation = true;
      text << "  WARNING: measured gap exceeds a bound RHS\n";
    }
    text << '\n';
  }
  write_csv(cfg, "bounds.csv", csv.str());
  write_csv(cfg, "bounds.txt", text.str());
  return violation ? 2 : 0;
}

int run_genquality(const ExperimentConfig& cfg) {
  const std::size_t n = cfg.n_grid.front();
  const std::size_t K = cfg.k_grid.front();
  const ArchSpec arch = cfg.make_arch(K, cfg.decoder_depth);

  struct Row {
    std::size_t seed;
    GenerationBoundCheck check;
    std::string error;
  };
  std::vector<Row> rows(cfg.num_seeds);

  parallel_for(cfg.num_seeds, cfg.jobs, [&](std::size_t seed) {
    rows[seed].seed = seed;
    try {
      const std::uint64_t cell_seed = Rng::mix(cfg.master_seed, 0x6E0 + seed);
      const BoundedDataset train_ds = cfg.make_dataset(n, cell_seed);
      const BoundedDataset holdout =
          cfg.make_dataset(cfg.holdout_size, Rng::mix(cell_seed, 0x401d));

      TrainConfig tc = cfg.train;
      tc.seed = Rng::mix(cell_seed, 0x7A11);
      const TrainResult tr = train(tc, train_ds.points, arch);
      const PosteriorMode mode = eval_mode(cfg.train);

      const PriorVector prior =
          cfg.train.lambda_mix > 0.0
              ? tr.prior
              : marginal_prior(posterior_matrix(tr.params, train_ds.points, mode));

      Rng gen_rng(Rng::mix(cell_seed, 0x93a));
      rows[seed].check = validate_generation_bound(
          tr.params, prior, train_ds.points, holdout.points, train_ds.delta(), n, mode,
          cfg.generated_size, gen_rng);
    } catch (const std::exception& e) {
      rows[seed].error = e.what();
    }
  });

  std::ostringstream csv;
  csv << "seed,n,K,w2sq,rhs,holds\n";
  bool violation = false;
  for (const auto& row : rows) {
    if (!row.error.empty()) {
      std::cerr << "genquality seed " << row.seed << " failed: " << row.error << '\n';
      violation = true;
      continue;
    }
    csv << row.seed << ',' << n << ',' << K << ',' << fmt(row.check.w2_squared) << ','
        << fmt(row.check.rhs) << ',' << (row.check.holds ? 1 : 0) << '\n';
    if (!row.check.holds) violation = true;
  }
  write_csv(cfg, "genquality.csv", csv.str());
  return violation ? 2 : 0;
}

int run_prior_ab(const ExperimentConfig& cfg) {
  if (cfg.num_seeds < 2) throw std::runtime_error("prior-ab: need at least 2 seeds");
  const std::size_t n = cfg.n_grid.front();
  const std::size_t K = cfg.k_grid.front();
  const ArchSpec arch = cfg.make_arch(K, cfg.decoder_depth);

  struct Row {
    double baseline = 0.0, cdvib = 0.0;
    std::string error;
  };
  std::vector<Row> rows(cfg.num_seeds);

  parallel_for(cfg.num_seeds, cfg.jobs, [&](std::size_t seed) {
    try {
      const std::uint64_t cell_seed = Rng::mix(cfg.master_seed, 0xAB + seed);
      const BoundedDataset ds = cfg.make_dataset(2 * n, cell_seed);
      Rng pair_rng(Rng::mix(cell_seed, 0x9a12));
      const Supersample ss = make_supersample(ds.points, pair_rng);
      Rng u_rng(Rng::mix(cell_seed, 0xCD1));
      const UIndex u = sample_u(n, u_rng);
      const SplitResult split = split_by_u(ss, u);

      TrainConfig base_tc = cfg.train;
      base_tc.lambda_mix = 0.0;
      base_tc.seed = Rng::mix(cell_seed, 0x7A11);
      TrainConfig cdvib_tc = base_tc;
      cdvib_tc.lambda_mix = 0.5;
      cdvib_tc.alpha_ema = 0.9;

      const PosteriorMode mode = eval_mode(cfg.train);
      const TrainResult base = train(base_tc, split.train, arch, split.test);
      rows[seed].baseline = mean_l0(base.params, split.test, mode);
      const TrainResult cdvib = train(cdvib_tc, split.train, arch, split.test);
      rows[seed].cdvib = mean_l0(cdvib.params, split.test, mode);
    } catch (const std::exception& e) {
      rows[seed].error = e.what();
    }
  });

  std::ostringstream csv;
  csv << "arm,seed,test_mse\n";
  std::vector<double> base_vals, cdvib_vals;
  for (std::size_t seed = 0; seed < cfg.num_seeds; ++seed) {
    if (!rows[seed].error.empty()) {
      std::cerr << "prior-ab seed " << seed << " failed: " << rows[seed].error << '\n';
      continue;
    }
    csv << "baseline," << seed << ',' << fmt(rows[seed].baseline) << '\n';
    csv << "cdvib," << seed << ',' << fmt(rows[seed].cdvib) << '\n';
    base_vals.push_back(rows[seed].baseline);
    cdvib_vals.push_back(rows[seed].cdvib);
  }

  std::ostringstream summary;
  summary << "arm,mean,std,seeds\n";
  if (!base_vals.empty()) {
    summary << "baseline," << fmt(mean_of(base_vals)) << ',' << fmt(std_of(base_vals))
            << ',' << base_vals.size() << '\n';
    summary << "cdvib," << fmt(mean_of(cdvib_vals)) << ',' << fmt(std_of(cdvib_vals)) << ','
            << cdvib_vals.size() << '\n';
  }
  write_csv(cfg, "prior_ab.csv", csv.str());
  write_csv(cfg, "prior_ab_summary.csv", summary.str());
  std::cout << summary.str();
  return 0;
}

int run_oracle(const ExperimentConfig& cfg) {
  bool ok = true;
  Rng rng(cfg.master_seed);

  // Permutation-prior enumeration on a small random model with 2n = 4.
  {
    MlpSpec enc{{2, 4, 2}, Activation::kTanh};
    MlpSpec dec{{2, 4, 2}, Activation::kTanh};
    ModelParams params = init_model(enc, dec, 3, rng);
    params.beta_q = 4.0;
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < 4; ++i) pts.push_back({rng.uniform(), rng.uniform()});
    const auto marg =
        permutation_prior_bruteforce(pts, params, PosteriorMode::kStochastic);
    IndexDistribution mix(3, 0.0);
    for (const auto& x : pts) {
      const auto q = posterior_at(params, x, PosteriorMode::kStochastic);
      for (std::size_t k = 0; k < 3; ++k) mix[k] += 0.25 * q[k];
    }
    double err = 0.0;
    for (std::size_t k = 0; k < 3; ++k) err = std::max(err, std::abs(marg[0][k] - mix[k]));
    const double tv = slot_marginal_max_tv(marg);
    std::cout << "permutation prior: slot-vs-mixture max err " << fmt(err)
              << ", slot-to-slot max TV " << fmt(tv) << '\n';
    ok = ok && err <= 1e-12 && tv <= 1e-12;
  }

  // Assignment solver against brute-force enumeration, 10 random 4v4 sets.
  {
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<std::vector<double>> a, b;
      for (int i = 0; i < 4; ++i) {
        a.push_back({rng.uniform(), rng.uniform()});
        b.push_back({rng.uniform(), rng.uniform()});
      }
      std::vector<std::vector<double>> cost(4, std::vector<double>(4));
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) cost[i][j] = squared_distance(a[i], b[j]);
      }
      std::vector<std::size_t> perm{0, 1, 2, 3};
      double best = std::numeric_limits<double>::infinity();
      do {
        double c = 0.0;
        for (int i = 0; i < 4; ++i) c += cost[i][perm[i]];
        best = std::min(best, c);
      } while (std::next_permutation(perm.begin(), perm.end()));
      worst = std::max(worst, std::abs(solve_assignment(cost) - best));
    }
    std::cout << "assignment vs enumeration: max deviation " << fmt(worst) << '\n';
    ok = ok && worst <= 1e-9;
  }

  // Marginal prior optimality against random competitors.
  {
    CategoricalPosterior post;
    for (int i = 0; i < 12; ++i) {
      IndexDistribution row(3);
      double sum = 0.0;
      for (double& v : row) {
        v = rng.uniform() + 1e-3;
        sum += v;
      }
      for (double& v : row) v /= sum;
      post.push_back(row);
    }
    const PriorVector star = marginal_prior(post);
    const double best_kl = empirical_kl_term(post, star);
    double margin = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      PriorVector pi(3);
      double sum = 0.0;
      for (double& v : pi) {
        v = rng.uniform() + 1e-3;
        sum += v;
      }
      for (double& v : pi) v /= sum;
      margin = std::min(margin, empirical_kl_term(post, pi) - best_kl);
    }
    std::cout << "marginal prior optimality: worst competitor margin " << fmt(margin)
              << '\n';
    ok = ok && margin >= -1e-9;
  }

  std::cout << (ok ? "oracle suite: all checks passed\n"
                   : "oracle suite: FAILURES detected\n");
  return ok ? 0 : 1;
}

}  // namespace vqgb
