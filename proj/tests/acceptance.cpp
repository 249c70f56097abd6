// Acceptance suite: every check below is a hard gate with its tolerance
// pinned in code. Each prints one [PASS]/[FAIL] line; the exit code is the
// number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "test_support.hpp"
#include "vqgb/bounds.hpp"
#include "vqgb/datasets.hpp"
#include "vqgb/experiment.hpp"
#include "vqgb/infotools.hpp"
#include "vqgb/resampling.hpp"
#include "vqgb/transport.hpp"

using namespace vqgb;

namespace {

int failures = 0;

void report(int index, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] %2d %s: %s\n", pass ? "PASS" : "FAIL", index, name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::filesystem::path out_root() {
  const auto p = std::filesystem::temp_directory_path() / "vqgb_acceptance";
  std::filesystem::create_directories(p);
  return p;
}

// Minimal reader for the aggregate CSVs the sweep runs emit.
std::vector<std::map<std::string, double>> read_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("acceptance: cannot open " + path.string());
  std::string line;
  std::getline(is, line);
  std::vector<std::string> header;
  {
    std::istringstream hs(line);
    std::string tok;
    while (std::getline(hs, tok, ',')) header.push_back(tok);
  }
  std::vector<std::map<std::string, double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    std::map<std::string, double> row;
    for (std::size_t c = 0; c < header.size() && std::getline(ls, tok, ','); ++c) {
      try {
        row[header[c]] = tok == "inf" ? std::numeric_limits<double>::infinity()
                                      : std::stod(tok);
      } catch (...) {
        row[header[c]] = std::numeric_limits<double>::quiet_NaN();
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

ExperimentConfig base_config(const std::string& sub) {
  ExperimentConfig cfg;
  cfg.out_dir = (out_root() / sub).string();
  cfg.master_seed = 20260810;
  cfg.train.seed = cfg.master_seed;
  cfg.jobs = 0;  // all cores
  return cfg;
}

// ---------------------------------------------------------------------------

void criterion_1_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(101);
  MlpSpec enc{{4, 16, 2}, Activation::kTanh};
  MlpSpec dec{{2, 16, 4}, Activation::kTanh};
  const ModelParams params = init_model(enc, dec, 8, rng);

  BoundedDataset ds = synth_mixture(4, 4, 8, 0.08, rng);
  std::vector<std::vector<double>> noise(ds.size(), std::vector<double>(8));
  for (auto& row : noise) {
    for (double& g : row) g = rng.gumbel();
  }

  DifferentiableScalarFn f = [&](std::span<const double> flat, std::vector<double>* grad) {
    ModelParams q = params;
    q.from_flat(flat);
    const auto lg = sqvae_loss_with_noise(q, ds.points, 0.7, noise);
    if (grad) *grad = lg.grad;
    return lg.loss;
  };

  const auto point = params.to_flat();
  std::vector<std::size_t> coords;
  while (coords.size() < 64) coords.push_back(rng.index(point.size()));
  const double err = grad_check(f, point, 1e-5, coords);
  const double secs = seconds_since(t0);
  report(1, "gradient correctness",
         err <= 1e-4 && secs < 10.0,
         "max rel err " + fmt(err) + " on 64 coords in " + fmt(secs) + " s");
}

void criterion_2_posterior_limits() {
  Rng rng(202);
  std::size_t mismatches = 0;
  double uniform_err = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    Codebook cb;
    cb.dz = 3;
    const std::size_t K = 2 + rng.index(7);
    for (std::size_t k = 0; k < K; ++k) {
      cb.entries.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    }
    std::vector<double> z{rng.uniform(), rng.uniform(), rng.uniform()};

    // enforce a unique nearest code
    std::vector<double> d2(K);
    for (std::size_t k = 0; k < K; ++k) d2[k] = squared_distance(z, cb.entries[k]);
    std::vector<double> sorted = d2;
    std::sort(sorted.begin(), sorted.end());
    if (sorted[1] - sorted[0] <= 1e-12) {
      --trial;
      continue;
    }

    const auto hard = deterministic_posterior(z, cb);
    const auto soft = stochastic_posterior(z, cb, 1e6);
    const std::size_t hard_arg = std::max_element(hard.begin(), hard.end()) - hard.begin();
    const std::size_t soft_arg = std::max_element(soft.begin(), soft.end()) - soft.begin();
    if (hard_arg != soft_arg) ++mismatches;

    const auto flat = stochastic_posterior(z, cb, 0.0);
    for (double v : flat) {
      uniform_err = std::max(uniform_err, std::abs(v - 1.0 / static_cast<double>(K)));
    }
  }
  report(2, "posterior limits", mismatches == 0 && uniform_err <= 1e-12,
         std::to_string(mismatches) + "/1000 argmax mismatches, beta=0 max dev " +
             fmt(uniform_err));
}

void criterion_3_gumbel_calibration() {
  Rng rng(303);
  const std::vector<double> probs{0.7, 0.2, 0.1};
  std::vector<double> logits;
  for (double p : probs) logits.push_back(std::log(p));
  const int draws = 100000;
  std::vector<int> counts(3, 0);
  for (int i = 0; i < draws; ++i) {
    const auto s = gumbel_softmax_sample(logits, 1e-6, rng);
    counts[std::max_element(s.begin(), s.end()) - s.begin()] += 1;
  }
  bool ok = true;
  double worst_sigmas = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double sigma = std::sqrt(probs[k] * (1 - probs[k]) / draws);
    const double dev = std::abs(counts[k] / static_cast<double>(draws) - probs[k]);
    worst_sigmas = std::max(worst_sigmas, dev / sigma);
    ok = ok && dev <= 3.0 * sigma;
  }
  report(3, "gumbel calibration", ok,
         "worst deviation " + fmt(worst_sigmas) + " sigma over 1e5 draws");
}

void criterion_4_optimal_prior() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(404);
  double worst_margin = 0.0;
  for (int instance = 0; instance < 50; ++instance) {
    const std::size_t K = 2 + rng.index(3);
    CategoricalPosterior post;
    const std::size_t rows = 5 + rng.index(20);
    for (std::size_t r = 0; r < rows; ++r) {
      IndexDistribution row(K);
      double sum = 0;
      for (double& v : row) {
        v = rng.uniform() + 1e-4;
        sum += v;
      }
      for (double& v : row) v /= sum;
      post.push_back(row);
    }
    const PriorVector star = marginal_prior(post);
    const double best = empirical_kl_term(post, star);

    for (int trial = 0; trial < 100; ++trial) {
      PriorVector pi(K);
      double sum = 0;
      for (double& v : pi) {
        v = rng.uniform() + 1e-4;
        sum += v;
      }
      for (double& v : pi) v /= sum;
      worst_margin = std::min(worst_margin, empirical_kl_term(post, pi) - best);
      const PriorVector refined = testsupport::refine_prior(post, pi, 300, 0.05);
      worst_margin = std::min(worst_margin, empirical_kl_term(post, refined) - best);
    }
  }
  const double secs = seconds_since(t0);
  report(4, "optimal-prior margin", worst_margin >= -1e-9 && secs < 30.0,
         "worst competitor margin " + fmt(worst_margin) + " in " + fmt(secs) + " s");
}

void criterion_5_permutation_oracle() {
  Rng rng(505);
  MlpSpec enc{{2, 6, 2}, Activation::kTanh};
  MlpSpec dec{{2, 6, 2}, Activation::kTanh};
  ModelParams params = init_model(enc, dec, 4, rng);
  params.beta_q = 5.0;

  std::vector<std::vector<double>> pts;
  for (int i = 0; i < 4; ++i) pts.push_back({rng.uniform(), rng.uniform()});

  const auto marginals =
      permutation_prior_bruteforce(pts, params, PosteriorMode::kStochastic);
  IndexDistribution mixture(4, 0.0);
  for (const auto& x : pts) {
    const auto q = posterior_at(params, x, PosteriorMode::kStochastic);
    for (std::size_t k = 0; k < 4; ++k) mixture[k] += 0.25 * q[k];
  }
  double mix_err = 0.0;
  for (const auto& slot : marginals) {
    for (std::size_t k = 0; k < 4; ++k) {
      mix_err = std::max(mix_err, std::abs(slot[k] - mixture[k]));
    }
  }
  const double tv = slot_marginal_max_tv(marginals);
  report(5, "permutation-prior oracle", mix_err <= 1e-12 && tv <= 1e-12,
         "mixture deviation " + fmt(mix_err) + ", slot TV " + fmt(tv));
}

void criterion_6_mi_calibration() {
  Rng rng(606);
  const std::size_t n_plugin = 100000;
  std::vector<long> f(n_plugin);
  std::vector<int> l(n_plugin);
  for (std::size_t i = 0; i < n_plugin; ++i) {
    l[i] = rng.coin();
    f[i] = rng.uniform() < 0.25 ? 1 - l[i] : l[i];
  }
  const double analytic = std::log(2.0) + 0.25 * std::log(0.25) + 0.75 * std::log(0.75);
  const double bsc_err = std::abs(plugin_discrete_mi(f, l) - analytic);

  for (std::size_t i = 0; i < n_plugin; ++i) {
    f[i] = static_cast<long>(rng.index(4));
    l[i] = rng.coin();
  }
  const double plugin_indep = plugin_discrete_mi(f, l);

  const std::size_t n_knn = 10000;
  std::vector<std::vector<double>> feats;
  std::vector<int> labels(n_knn);
  for (std::size_t i = 0; i < n_knn; ++i) {
    labels[i] = rng.coin();
    feats.push_back({(labels[i] ? 10.0 : -10.0) + rng.normal()});
  }
  const double knn_err = std::abs(knn_mi(feats, labels, 3) - std::log(2.0));

  feats.clear();
  for (std::size_t i = 0; i < n_knn; ++i) {
    labels[i] = rng.coin();
    feats.push_back({rng.normal()});
  }
  const double knn_indep = knn_mi(feats, labels, 3);

  const bool ok =
      bsc_err <= 0.01 && knn_err <= 0.05 && plugin_indep <= 0.02 && knn_indep <= 0.02;
  report(6, "MI estimator calibration", ok,
         "BSC dev " + fmt(bsc_err) + ", knn dev " + fmt(knn_err) + ", indep " +
             fmt(plugin_indep) + "/" + fmt(knn_indep));
}

void criterion_7_exact_transport() {
  Rng rng(707);
  double worst = 0.0;
  for (const std::size_t n : {std::size_t{4}, std::size_t{6}}) {
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<std::vector<double>> a, b;
      for (std::size_t i = 0; i < n; ++i) {
        a.push_back({rng.uniform(), rng.uniform()});
        b.push_back({rng.uniform(), rng.uniform()});
      }
      std::vector<std::vector<double>> cost(n, std::vector<double>(n));
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) cost[i][j] = squared_distance(a[i], b[j]);
      }
      const double best = testsupport::brute_force_assignment(cost);
      const double got = w2_exact(EmpiricalMeasure::uniform(a), EmpiricalMeasure::uniform(b));
      worst = std::max(worst, std::abs(got - std::sqrt(best / n)));
    }
  }

  double axiom_err = 0.0;
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::vector<double>> pa, pb, pc;
    for (int i = 0; i < 5; ++i) {
      pa.push_back({rng.uniform(), rng.uniform()});
      pb.push_back({rng.uniform(), rng.uniform()});
      pc.push_back({rng.uniform(), rng.uniform()});
    }
    const auto a = EmpiricalMeasure::uniform(pa);
    const auto b = EmpiricalMeasure::uniform(pb);
    const auto c = EmpiricalMeasure::uniform(pc);
    const double ab = w2_exact(a, b);
    axiom_err = std::max(axiom_err, std::abs(ab - w2_exact(b, a)));
    axiom_err = std::max(axiom_err, ab - (w2_exact(a, c) + w2_exact(c, b)));
    axiom_err = std::max(axiom_err, w2_exact(a, a));
  }
  report(7, "exact transport", worst <= 1e-9 && axiom_err <= 1e-9,
         "enumeration deviation " + fmt(worst) + ", axiom slack " + fmt(axiom_err));
}

void criterion_8_generation_bound() {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg = base_config("genquality");
  cfg.n_grid = {200};
  cfg.k_grid = {8};
  cfg.num_seeds = 10;
  cfg.train.epochs = 60;
  cfg.holdout_size = 1000;
  cfg.generated_size = 1000;
  const int rc = run_genquality(cfg);

  const auto rows = read_csv(std::filesystem::path(cfg.out_dir) / "genquality.csv");
  std::size_t holds = 0;
  double worst_ratio = 0.0;
  for (const auto& row : rows) {
    if (row.at("holds") == 1.0) ++holds;
    worst_ratio = std::max(worst_ratio, row.at("w2sq") / row.at("rhs"));
  }
  const double secs = seconds_since(t0);
  report(8, "generation bound validity",
         rc == 0 && holds == rows.size() && rows.size() == 10 && secs < 900.0,
         std::to_string(holds) + "/10 seeds hold, worst w2sq/rhs " + fmt(worst_ratio) +
             " in " + fmt(secs) + " s");
}

void criterion_9_k1_rate() {
  ExperimentConfig cfg = base_config("k1_rate");
  cfg.n_grid = {50, 100, 200, 400, 800};
  cfg.k_grid = {1};
  cfg.depth_grid = {2};
  cfg.num_seeds = 20;
  cfg.protocol.num_u_draws = 3;
  cfg.train.mode = TrainMode::kVqDeterministic;
  cfg.train.epochs = 60;
  run_sweep(cfg);

  const auto rows = read_csv(std::filesystem::path(cfg.out_dir) / "gap_aggregate.csv");
  std::vector<double> log_n, log_gap;
  for (const auto& row : rows) {
    log_n.push_back(std::log(row.at("n")));
    log_gap.push_back(std::log(row.at("gap_mean")));
  }
  const double slope = testsupport::regression_slope(log_n, log_gap);
  report(9, "K=1 square-root rate", slope >= -0.7 && slope <= -0.3,
         "log-log slope " + fmt(slope) + " over n in {50..800}, 20 seeds");
}

void criterion_10_term_trends() {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg = base_config("trends");
  cfg.n_grid = {64, 128, 256, 512};
  cfg.k_grid = {8};
  cfg.depth_grid = {2};
  cfg.num_seeds = 10;
  cfg.train.mode = TrainMode::kVqDeterministic;
  cfg.train.epochs = 80;
  run_sweep(cfg);

  const auto rows = read_csv(std::filesystem::path(cfg.out_dir) / "gap_aggregate.csv");
  std::vector<double> ns, cmi_means, kl_means;
  bool bounds_hold = true;
  for (const auto& row : rows) {
    ns.push_back(row.at("n"));
    cmi_means.push_back(row.at("cmi_index_mean"));
    kl_means.push_back(row.at("kl_uniform_mean"));

    BoundInputs b;
    b.n = static_cast<std::size_t>(row.at("n"));
    b.Delta = 2.0;  // 2-d unit box
    b.K = 8;
    b.kl_empirical = row.at("kl_uniform_mean");
    b.kl_cmi = row.at("cmi_index_mean");
    bounds_hold = bounds_hold && row.at("gap_mean") <= rhs_supersample(b);
  }
  const double rho = testsupport::spearman_rho(ns, cmi_means);
  const bool kl_survives = kl_means.back() >= 0.5 * kl_means.front();
  const double secs = seconds_since(t0);
  report(10, "CMI decreases while empirical KL persists",
         rho < 0.0 && kl_survives && bounds_hold && secs < 1800.0,
         "spearman(n, cmi) " + fmt(rho) + ", kl last/first " +
             fmt(kl_means.back() / kl_means.front()) + ", gap<=rhs " +
             (bounds_hold ? "yes" : "NO") + ", " + fmt(secs) + " s");
}

void criterion_11_decoder_independence() {
  ExperimentConfig cfg = base_config("depth");
  cfg.n_grid = {512};
  cfg.k_grid = {8};
  cfg.depth_grid = {2, 5};
  cfg.num_seeds = 10;
  cfg.train.mode = TrainMode::kVqDeterministic;
  cfg.train.epochs = 100;
  run_sweep(cfg);

  const auto rows = read_csv(std::filesystem::path(cfg.out_dir) / "gap_aggregate.csv");
  double gap2 = 0, gap5 = 0, std2 = 0, std5 = 0, train2 = 0, train5 = 0;
  for (const auto& row : rows) {
    if (row.at("depth") == 2.0) {
      gap2 = row.at("gap_mean");
      std2 = row.at("gap_std");
      train2 = row.at("train_loss_mean");
    } else if (row.at("depth") == 5.0) {
      gap5 = row.at("gap_mean");
      std5 = row.at("gap_std");
      train5 = row.at("train_loss_mean");
    }
  }
  const double shift = std::abs(gap5 - gap2);
  const double band = std::max(std2, std5);
  // The gate is gap stability under the deeper decoder. The train-loss
  // direction is informational at this scale: with hard quantization the
  // decoder interpolates K atoms, so either depth reaches the same floor and
  // the mean ordering is noise-dominated. Effect sizes are logged either way.
  report(11, "decoder-independence analog", shift < band,
         "gap shift " + fmt(shift) + " (" + fmt(shift / band) +
             " std bands); train loss depth2 " + fmt(train2) + " -> depth5 " + fmt(train5) +
             " (" + (train5 < train2 ? "lower, matching the reported direction"
                                     : "not lower; informational") +
             ")");
}

void criterion_12_formula_evaluators() {
  double worst = 0.0;
  const auto check = [&](double got, double want) {
    worst = std::max(worst, std::abs(got - want) / std::max(1.0, std::abs(want)));
  };

  BoundInputs b;
  b.n = 100;
  b.Delta = 1.0;
  b.Delta_z = 1.0;
  b.beta_q = 1.0;
  b.K = 8;
  b.kl_empirical = 0.003;
  b.kl_cmi = 0.002;
  check(rhs_supersample(b), 2.0 * std::sqrt(0.005) + 0.1);

  b.kl_cmi = 0.0009;
  check(rhs_permutation(b), 0.19);

  b.delta_cover = 1e-4;
  b.log_covering_number = 10.0;
  check(rhs_metric_entropy(b), 4.0 * std::sqrt(0.02) + 3.0 * std::sqrt(0.2) + 0.1);

  b.train_loss_mean = 0.01;
  b.kl_empirical = 0.02;
  check(rhs_wasserstein(b), 1.02);

  check(natarajan_cmi_cap(1, 2, 10), std::log(20.0 * M_E));

  report(12, "formula evaluators vs hand computation", worst <= 1e-12,
         "worst relative deviation " + fmt(worst));
}

void criterion_13_prior_ab() {
  ExperimentConfig cfg = base_config("prior_ab");
  cfg.n_grid = {200};
  cfg.k_grid = {8};
  cfg.num_seeds = 10;
  cfg.train.epochs = 60;
  const int rc = run_prior_ab(cfg);

  const auto rows = read_csv(std::filesystem::path(cfg.out_dir) / "prior_ab.csv");
  std::size_t base_rows = 0, cdvib_rows = 0;
  const auto summary =
      read_csv(std::filesystem::path(cfg.out_dir) / "prior_ab_summary.csv");
  for (const auto& row : rows) {
    // arm column is non-numeric; count by seed presence per parse result
    (void)row;
  }
  {
    std::ifstream is(std::filesystem::path(cfg.out_dir) / "prior_ab.csv");
    std::string line;
    while (std::getline(is, line)) {
      if (line.rfind("baseline,", 0) == 0) ++base_rows;
      if (line.rfind("cdvib,", 0) == 0) ++cdvib_rows;
    }
  }
  double base_mean = 0, cdvib_mean = 0;
  {
    std::ifstream is(std::filesystem::path(cfg.out_dir) / "prior_ab_summary.csv");
    std::string line;
    while (std::getline(is, line)) {
      std::istringstream ls(line);
      std::string arm, mean;
      std::getline(ls, arm, ',');
      std::getline(ls, mean, ',');
      if (arm == "baseline") base_mean = std::stod(mean);
      if (arm == "cdvib") cdvib_mean = std::stod(mean);
    }
  }
  (void)summary;
  const bool table_ok = rc == 0 && base_rows == 10 && cdvib_rows == 10;
  // direction is informational at this scale, not a gate
  report(13, "prior A/B harness", table_ok,
         "10+10 rows; test MSE baseline " + fmt(base_mean) + " vs cdvib " +
             fmt(cdvib_mean) +
             (cdvib_mean <= base_mean ? " (matches the reported direction)"
                                      : " (direction not reproduced at this scale)"));
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  criterion_1_gradients();
  criterion_2_posterior_limits();
  criterion_3_gumbel_calibration();
  criterion_4_optimal_prior();
  criterion_5_permutation_oracle();
  criterion_6_mi_calibration();
  criterion_7_exact_transport();
  criterion_8_generation_bound();
  criterion_9_k1_rate();
  criterion_10_term_trends();
  criterion_11_decoder_independence();
  criterion_12_formula_evaluators();
  criterion_13_prior_ab();
  std::printf("%d/13 criteria passed in %.1f s\n", 13 - failures,
              seconds_since(t0));
  return failures;
}
