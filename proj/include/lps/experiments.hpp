#pragma once

// Training and evaluation drivers shared by the command-line tool and the
// acceptance tests.

#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lps/datasets.hpp"
#include "lps/symmetrization.hpp"

namespace lps {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Task { separate, classify_csl, nbody, diagnose };
const char* task_name(Task t);
Task parse_task(const std::string& s);

struct RunConfig {
  std::optional<std::uint64_t> seed;
  Task task = Task::classify_csl;
  Mode mode = Mode::learned_ps;
  std::size_t epochs = 40;
  std::size_t steps = 2000;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  std::size_t train_samples = 10;
  std::size_t eval_samples = 10;
  std::optional<double> tau;
  std::optional<double> eta;
  double entropy_strength = 0.1;
  double clip = 0.1;
  double warmup_fraction = 0.1;
  std::string out;

  // separation
  std::size_t graph_nodes = 6;
  std::size_t embed_dim = 10;
  double separation_tol = 1e-3;
  std::vector<std::size_t> separation_hidden{64, 64};
  std::string graph6_path;

  // classification
  std::size_t csl_nodes = 11;
  std::vector<std::size_t> csl_skips{2, 3};
  std::size_t csl_per_class = 100;
  std::vector<std::size_t> mlp_hidden{1024, 512, 1024};

  // n-body
  std::size_t nbody_count = 200;
  std::size_t log_every = 100;
  TransformerConfig transformer{};
  NbodyConfig nbody{};

  // Throws ConfigError when a field is missing or out of range.
  void validate() const;
  std::uint64_t seed_value() const;
};

// Fills fields present in a JSON object; unknown keys are a ConfigError.
void apply_json_config(RunConfig& cfg, const std::string& json_text);

struct ExperimentRecord {
  std::size_t step = 0;
  std::string split;  // train | val | test
  std::string metric;
  double value = 0.0;
  std::uint64_t seed = 0;

  std::string to_json() const;
};

// Collects records in memory and appends them as JSON lines to `path` (if any).
class MetricsLog {
 public:
  explicit MetricsLog(std::string path = {});
  void emit(ExperimentRecord r);
  const std::vector<ExperimentRecord>& records() const { return records_; }
  // Value of the latest record matching (metric, split), if any.
  std::optional<double> last(const std::string& metric, const std::string& split) const;

 private:
  std::string path_;
  std::unique_ptr<std::ofstream> out_;
  std::vector<ExperimentRecord> records_;
};

// ---- separation -------------------------------------------------------------------

// Pairs (i < j) whose embeddings are within `tol` in the max norm.
std::size_t count_unseparated(const std::vector<std::vector<double>>& embeddings, double tol);

struct SeparationResult {
  std::size_t graphs = 0;
  std::map<Mode, std::size_t> unseparated;
};

SeparationResult run_separation(const RunConfig& cfg, MetricsLog& log);

// ---- classification ------------------------------------------------------------------

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
  double aggregated_entropy = 0.0;  // learned and uniform modes only
};

struct ClassificationResult {
  std::vector<EpochStats> epochs;  // epoch 0 is the untrained model
  double best_val_accuracy = 0.0;
  double test_at_best_val = 0.0;
  std::size_t logged_batches = 0;
  std::size_t convexity_violations = 0;
  double worst_convexity_gap = 0.0;  // min over graphs of task loss - loss of mean
  std::unique_ptr<GraphSymModel> model;
  std::unique_ptr<CslDataset> data;
};

ClassificationResult run_classification(const RunConfig& cfg, MetricsLog& log);

// Accuracy of the mean-logit prediction over `indices`, with the evaluation
// randomness keyed by (seed, graph index) so repeated calls are paired.
double evaluate_accuracy(const GraphSymModel& model, const CslDataset& data,
                         const std::vector<std::size_t>& indices, std::size_t samples, std::uint64_t seed);
// Mean aggregated_entropy of `samples` permutations per graph.
double mean_aggregated_entropy(const GraphSymModel& model, const CslDataset& data,
                               const std::vector<std::size_t>& indices, std::size_t samples,
                               std::uint64_t seed);
// Mean output_variance over graphs, sampling in `mode` with the model's weights.
double mean_output_variance(const GraphSymModel& model, Mode mode, const CslDataset& data,
                            const std::vector<std::size_t>& indices, std::size_t samples,
                            std::uint64_t seed);

struct GinBaselineResult {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

// Message-passing GIN with a sum readout on constant features.
GinBaselineResult run_gin_baseline(const RunConfig& cfg, MetricsLog& log);

// ---- n-body ------------------------------------------------------------------------

struct NbodyResult {
  double initial_mse = 0.0;
  double final_mse = 0.0;
  std::size_t logged_batches = 0;
  std::size_t convexity_violations = 0;
  double worst_convexity_gap = 0.0;
  std::unique_ptr<PointSymModel> model;
  std::vector<NbodyExample> data;
};

PointSymModel make_point_model(const RunConfig& cfg, Mode mode, Rng& rng);
// Mean squared error of the sampled mean displacement over `data`.
double nbody_mse(const PointSymModel& model, const std::vector<NbodyExample>& data, std::size_t samples,
                 std::uint64_t seed);
NbodyResult run_nbody(const RunConfig& cfg, MetricsLog& log);

// ---- diagnostics -------------------------------------------------------------------

struct DiagnoseResult {
  ClassificationResult training;
  std::map<std::size_t, double> ps_variance;  // by sample budget
  std::map<std::size_t, double> ga_variance;
};

DiagnoseResult run_diagnose(const RunConfig& cfg, MetricsLog& log);

}  // namespace lps
