#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vqgb/experiment.hpp"

namespace {

int dispatch(const std::string& command, const vqgb::ExperimentConfig& cfg) {
  if (command == "train") return vqgb::run_train(cfg);
  if (command == "gap") return vqgb::run_gap(cfg);
  if (command == "cmi") return vqgb::run_cmi(cfg);
  if (command == "bounds") return vqgb::run_bound_report(cfg);
  if (command == "genquality") return vqgb::run_genquality(cfg);
  if (command == "prior-ab") return vqgb::run_prior_ab(cfg);
  if (command == "oracle") return vqgb::run_oracle(cfg);
  if (command == "sweep") return vqgb::run_sweep(cfg);
  std::cerr << "unknown command: " << command << '\n';
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vqgb: vector-quantized autoencoder generalization experiments"};
  app.require_subcommand(0, 1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t jobs = 0;
  bool jobs_set = false;

  app.add_option("--config", config_path, "key = value configuration file");
  app.add_option("--override", overrides, "override a config entry (key=value)")
      ->take_all();
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "master seed")->each([&](const std::string&) {
    seed_set = true;
  });
  app.add_option("--jobs", jobs, "max concurrent sweep cells")
      ->each([&](const std::string&) { jobs_set = true; });

  const std::vector<std::string> commands = {"train", "gap",      "cmi",      "bounds",
                                             "sweep", "genquality", "prior-ab", "oracle"};
  std::vector<CLI::App*> subs;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c);
    sub->fallthrough();
    subs.push_back(sub);
  }

  CLI11_PARSE(app, argc, argv);

  std::string command;
  for (std::size_t i = 0; i < commands.size(); ++i) {
    if (subs[i]->parsed()) command = commands[i];
  }
  if (command.empty()) {
    std::cerr << app.help();
    return 1;
  }

  try {
    vqgb::KeyValueConfig kv;
    if (!config_path.empty()) kv = vqgb::KeyValueConfig::load(config_path);
    for (const auto& ov : overrides) kv.apply_override(ov);

    vqgb::ExperimentConfig cfg = vqgb::ExperimentConfig::from_kv(kv);
    if (seed_set) {
      cfg.master_seed = seed;
      cfg.train.seed = seed;
    }
    if (jobs_set) cfg.jobs = jobs;
    if (!out_dir.empty()) {
      cfg.out_dir = out_dir;
    } else if (!kv.has("out")) {
      if (const char* env = std::getenv("VQGB_OUT")) cfg.out_dir = env;
    }

    return dispatch(command, cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
