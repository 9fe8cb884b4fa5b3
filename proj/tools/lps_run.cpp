#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "lps/errors.hpp"
#include "lps/experiments.hpp"

using namespace lps;

namespace {

int run(const RunConfig& cfg) {
  MetricsLog log(cfg.out);
  switch (cfg.task) {
    case Task::separate: {
      const auto r = run_separation(cfg, log);
      std::printf("graphs: %zu\n", r.graphs);
      for (const auto& [mode, count] : r.unseparated) std::printf("unseparated pairs [%s]: %zu\n", mode_name(mode), count);
      break;
    }
    case Task::classify_csl: {
      const auto r = run_classification(cfg, log);
      for (const auto& e : r.epochs)
        std::printf("epoch %3zu  loss %.4f  val %.3f  test %.3f  entropy %.4f\n", e.epoch, e.train_loss,
                    e.val_accuracy, e.test_accuracy, e.aggregated_entropy);
      std::printf("test accuracy at best validation: %.3f\n", r.test_at_best_val);
      std::printf("convexity violations: %zu of %zu batches\n", r.convexity_violations, r.logged_batches);
      break;
    }
    case Task::nbody: {
      const auto r = run_nbody(cfg, log);
      std::printf("training mse: %.6f -> %.6f\n", r.initial_mse, r.final_mse);
      std::printf("convexity violations: %zu of %zu batches\n", r.convexity_violations, r.logged_batches);
      break;
    }
    case Task::diagnose: {
      const auto r = run_diagnose(cfg, log);
      const auto& ep = r.training.epochs;
      std::printf("aggregated entropy: %.4f -> %.4f\n", ep.front().aggregated_entropy, ep.back().aggregated_entropy);
      for (const auto& [budget, v] : r.ps_variance)
        std::printf("output variance at %zu samples: ps %.6g  ga %.6g\n", budget, v, r.ga_variance.at(budget));
      break;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic symmetrization experiments"};
  RunConfig cfg;
  std::string task, mode, config_path, graph6;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> train_samples, eval_samples, epochs, steps, batch;
  std::optional<double> tau, eta, lr;
  std::optional<std::string> out;
  app.add_option("--config", config_path, "JSON file with run settings")->check(CLI::ExistingFile);
  app.add_option("--task", task, "separate | classify_csl | nbody | diagnose");
  app.add_option("--mode", mode, "ps | ga | canon");
  app.add_option("--seed", seed, "random seed (required)");
  app.add_option("--train-samples", train_samples, "group samples per training input");
  app.add_option("--eval-samples", eval_samples, "group samples per evaluation input");
  app.add_option("--tau", tau, "relaxed sort temperature");
  app.add_option("--eta", eta, "noise scale");
  app.add_option("--epochs", epochs, "training epochs (classification)");
  app.add_option("--steps", steps, "training steps (n-body)");
  app.add_option("--batch-size", batch, "inputs per optimizer step");
  app.add_option("--lr", lr, "learning rate");
  app.add_option("--out", out, "JSONL metrics file (appended)");
  app.add_option("--graph6", graph6, "graph6 file to use for separation")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      std::stringstream ss;
      ss << in.rdbuf();
      apply_json_config(cfg, ss.str());
    }
    if (!task.empty()) cfg.task = parse_task(task);
    if (!mode.empty()) cfg.mode = parse_mode(mode);
    if (seed) cfg.seed = seed;
    if (train_samples) cfg.train_samples = *train_samples;
    if (eval_samples) cfg.eval_samples = *eval_samples;
    if (tau) cfg.tau = tau;
    if (eta) cfg.eta = eta;
    if (epochs) cfg.epochs = *epochs;
    if (steps) cfg.steps = *steps;
    if (batch) cfg.batch_size = *batch;
    if (lr) cfg.lr = *lr;
    if (out) cfg.out = *out;
    if (!graph6.empty()) cfg.graph6_path = graph6;
    cfg.validate();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }

  try {
    return run(cfg);
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
