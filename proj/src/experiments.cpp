#include "lps/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "json.hpp"
#include "lps/errors.hpp"

namespace lps {

const char* task_name(Task t) {
  switch (t) {
    case Task::separate:
      return "separate";
    case Task::classify_csl:
      return "classify_csl";
    case Task::nbody:
      return "nbody";
    case Task::diagnose:
      return "diagnose";
  }
  return "?";
}

Task parse_task(const std::string& s) {
  if (s == "separate") return Task::separate;
  if (s == "classify_csl" || s == "classify") return Task::classify_csl;
  if (s == "nbody") return Task::nbody;
  if (s == "diagnose") return Task::diagnose;
  throw ConfigError("unknown task '" + s + "'");
}

void RunConfig::validate() const {
  if (!seed) throw ConfigError("a seed is required");
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(epochs, "epochs");
  positive(steps, "steps");
  positive(batch_size, "batch_size");
  positive(train_samples, "train_samples");
  positive(eval_samples, "eval_samples");
  positive(embed_dim, "embed_dim");
  positive(nbody_count, "nbody_count");
  positive(log_every, "log_every");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be a positive number");
  if (tau && !(*tau > 0.0)) throw ConfigError("tau must be positive");
  if (eta && !(*eta >= 0.0)) throw ConfigError("eta must be non-negative");
  if (!(clip > 0.0)) throw ConfigError("clip must be positive");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) throw ConfigError("warmup_fraction must lie in [0, 1]");
  if (!(entropy_strength >= 0.0)) throw ConfigError("entropy_strength must be non-negative");
  if (graph6_path.empty() && (graph_nodes < 2 || graph_nodes > 6))
    throw ConfigError("graph_nodes must lie in [2, 6]");
  if (csl_nodes < 8) throw ConfigError("csl_nodes must be at least 8");
  if (csl_skips.size() != 2) throw ConfigError("csl_skips must name exactly two skips");
  if (csl_per_class < 10) throw ConfigError("csl_per_class must be at least 10");
  if (nbody.particles < 2) throw ConfigError("nbody particles must be at least 2");
  if (!(nbody.dt > 0.0)) throw ConfigError("nbody dt must be positive");
  positive(nbody.steps, "nbody steps");
  for (auto h : mlp_hidden) positive(h, "mlp_hidden entries");
  for (auto h : separation_hidden) positive(h, "separation_hidden entries");
}

std::uint64_t RunConfig::seed_value() const {
  if (!seed) throw ConfigError("a seed is required");
  return *seed;
}

void apply_json_config(RunConfig& cfg, const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      const auto& v = it.value();
      if (k == "seed") cfg.seed = v.get<std::uint64_t>();
      else if (k == "task") cfg.task = parse_task(v.get<std::string>());
      else if (k == "mode") cfg.mode = parse_mode(v.get<std::string>());
      else if (k == "epochs") cfg.epochs = v.get<std::size_t>();
      else if (k == "steps") cfg.steps = v.get<std::size_t>();
      else if (k == "batch_size") cfg.batch_size = v.get<std::size_t>();
      else if (k == "lr") cfg.lr = v.get<double>();
      else if (k == "train_samples") cfg.train_samples = v.get<std::size_t>();
      else if (k == "eval_samples") cfg.eval_samples = v.get<std::size_t>();
      else if (k == "tau") cfg.tau = v.get<double>();
      else if (k == "eta") cfg.eta = v.get<double>();
      else if (k == "entropy_strength") cfg.entropy_strength = v.get<double>();
      else if (k == "clip") cfg.clip = v.get<double>();
      else if (k == "warmup_fraction") cfg.warmup_fraction = v.get<double>();
      else if (k == "out") cfg.out = v.get<std::string>();
      else if (k == "graph_nodes") cfg.graph_nodes = v.get<std::size_t>();
      else if (k == "embed_dim") cfg.embed_dim = v.get<std::size_t>();
      else if (k == "separation_tol") cfg.separation_tol = v.get<double>();
      else if (k == "separation_hidden") cfg.separation_hidden = v.get<std::vector<std::size_t>>();
      else if (k == "graph6") cfg.graph6_path = v.get<std::string>();
      else if (k == "csl_nodes") cfg.csl_nodes = v.get<std::size_t>();
      else if (k == "csl_skips") cfg.csl_skips = v.get<std::vector<std::size_t>>();
      else if (k == "csl_per_class") cfg.csl_per_class = v.get<std::size_t>();
      else if (k == "mlp_hidden") cfg.mlp_hidden = v.get<std::vector<std::size_t>>();
      else if (k == "nbody_count") cfg.nbody_count = v.get<std::size_t>();
      else if (k == "log_every") cfg.log_every = v.get<std::size_t>();
      else if (k == "particles") cfg.nbody.particles = v.get<std::size_t>();
      else if (k == "dt") cfg.nbody.dt = v.get<double>();
      else if (k == "sim_steps") cfg.nbody.steps = v.get<std::size_t>();
      else if (k == "softening") cfg.nbody.softening = v.get<double>();
      else if (k == "transformer_layers") cfg.transformer.layers = v.get<std::size_t>();
      else if (k == "transformer_hidden") cfg.transformer.hidden = v.get<std::size_t>();
      else if (k == "transformer_heads") cfg.transformer.heads = v.get<std::size_t>();
      else throw ConfigError("unknown config key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
}

std::string ExperimentRecord::to_json() const {
  nlohmann::json j;
  j["step"] = step;
  j["split"] = split;
  j["metric"] = metric;
  j["value"] = value;
  j["seed"] = seed;
  return j.dump();
}

MetricsLog::MetricsLog(std::string path) : path_(std::move(path)) {
  if (path_.empty()) return;
  const auto parent = std::filesystem::path(path_).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  out_ = std::make_unique<std::ofstream>(path_, std::ios::app);
  if (!*out_) throw ConfigError("cannot open metrics file " + path_);
}

void MetricsLog::emit(ExperimentRecord r) {
  if (!std::isfinite(r.value))
    throw DivergenceError("non-finite value for metric '" + r.metric + "' at step " + std::to_string(r.step));
  if (out_) {
    *out_ << r.to_json() << '\n';
    out_->flush();
  }
  records_.push_back(std::move(r));
}

std::optional<double> MetricsLog::last(const std::string& metric, const std::string& split) const {
  for (auto it = records_.rbegin(); it != records_.rend(); ++it)
    if (it->metric == metric && it->split == split) return it->value;
  return std::nullopt;
}

namespace {

[[noreturn]] void diverged(MetricsLog& log, std::size_t step, std::uint64_t seed, const std::string& what) {
  log.emit({step, "train", "diverged", 1.0, seed});
  throw DivergenceError(what + " became non-finite at step " + std::to_string(step));
}

// Non-finite values reaching a kernel during a run are reported as divergence.
template <class F>
auto numerically_guarded(MetricsLog& log, std::uint64_t seed, F&& body) {
  try {
    return body();
  } catch (const DomainError& e) {
    const std::size_t step = log.records().empty() ? 0 : log.records().back().step;
    diverged(log, step, seed, std::string("model state (") + e.what() + ")");
  } catch (const DegenerateInputError& e) {
    const std::size_t step = log.records().empty() ? 0 : log.records().back().step;
    diverged(log, step, seed, std::string("model state (") + e.what() + ")");
  }
}

void check_params(const ParameterSet& params, MetricsLog& log, std::size_t step, std::uint64_t seed) {
  for (const auto& p : params.list())
    for (double v : p.tensor.data())
      if (!std::isfinite(v)) diverged(log, step, seed, "parameter '" + p.name + "'");
}

GraphSymModel make_graph_model(const RunConfig& cfg, Mode mode, std::size_t n, std::size_t out_dim,
                               const std::vector<std::size_t>& hidden, Rng& rng) {
  MlpConfig mc;
  mc.layer_dims.push_back(GraphSymModel::input_width(n, 1));
  mc.layer_dims.insert(mc.layer_dims.end(), hidden.begin(), hidden.end());
  mc.layer_dims.push_back(out_dim);
  Mlp mlp(mc, rng);
  SnConfig sc;
  if (cfg.eta) sc.noise.eta = *cfg.eta;
  if (cfg.tau) sc.tau = *cfg.tau;
  SnDistribution dist(sc, rng);
  SymmetrizationConfig sym;
  sym.mode = mode;
  sym.train_samples = cfg.train_samples;
  sym.eval_samples = cfg.eval_samples;
  sym.entropy_strength = cfg.entropy_strength;
  return GraphSymModel(std::move(mlp), std::move(dist), sym, TaskKind::graph_invariant, out_dim);
}

constexpr double kConvexitySlack = 1e-12;

bool convexity_holds(double task, double loss_of_mean) {
  return task >= loss_of_mean - kConvexitySlack * std::max(1.0, std::abs(loss_of_mean));
}

}  // namespace

// ---- separation -------------------------------------------------------------------

std::size_t count_unseparated(const std::vector<std::vector<double>>& embeddings, double tol) {
  std::size_t count = 0;
  for (std::size_t a = 0; a < embeddings.size(); ++a)
    for (std::size_t b = a + 1; b < embeddings.size(); ++b) {
      double d = 0.0;
      for (std::size_t k = 0; k < embeddings[a].size(); ++k)
        d = std::max(d, std::abs(embeddings[a][k] - embeddings[b][k]));
      if (d < tol) ++count;
    }
  return count;
}

SeparationResult run_separation(const RunConfig& cfg, MetricsLog& log) {
  cfg.validate();
  const std::uint64_t seed = cfg.seed_value();
  const std::vector<Graph> graphs =
      cfg.graph6_path.empty() ? gen_all_graphs(cfg.graph_nodes) : read_graph6_file(cfg.graph6_path);
  if (graphs.empty()) throw ConfigError("no graphs to separate");
  const std::size_t n = graphs[0].n;
  for (const auto& g : graphs)
    if (g.n != n) throw ConfigError("separation needs graphs of a single size");
  SeparationResult res;
  res.graphs = graphs.size();
  log.emit({0, "test", "graphs", static_cast<double>(graphs.size()), seed});
  NoGradGuard guard;
  for (Mode mode : {Mode::learned_ps, Mode::uniform_ga, Mode::canonical}) {
    Rng init = Rng(seed).substream(1);
    const GraphSymModel model = make_graph_model(cfg, mode, n, cfg.embed_dim, cfg.separation_hidden, init);
    std::vector<std::vector<double>> emb(graphs.size());
    const Rng eval = Rng(seed).substream(2);
    for (std::size_t i = 0; i < graphs.size(); ++i) {
      Rng r = eval.substream(i);
      emb[i] = model.estimate(graphs[i], cfg.eval_samples, r).mean.to_vector();
    }
    res.unseparated[mode] = count_unseparated(emb, cfg.separation_tol);
    log.emit({0, "test", std::string("unseparated_") + mode_name(mode),
              static_cast<double>(res.unseparated[mode]), seed});
  }
  return res;
}

// ---- classification ------------------------------------------------------------------

double evaluate_accuracy(const GraphSymModel& model, const CslDataset& data,
                         const std::vector<std::size_t>& indices, std::size_t samples, std::uint64_t seed) {
  if (indices.empty()) return 0.0;
  NoGradGuard guard;
  const Rng base = Rng(seed).substream(11);
  std::size_t correct = 0;
  for (std::size_t idx : indices) {
    Rng r = base.substream(idx);
    const double logit = model.estimate(data.graphs[idx], samples, r).mean.item();
    correct += (logit > 0.0 ? 1 : 0) == data.labels[idx];
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

double mean_aggregated_entropy(const GraphSymModel& model, const CslDataset& data,
                               const std::vector<std::size_t>& indices, std::size_t samples,
                               std::uint64_t seed) {
  if (indices.empty()) return 0.0;
  NoGradGuard guard;
  const Rng base = Rng(seed).substream(12);
  const Mode mode = model.config().mode;
  const std::size_t count = model.config().effective(samples);
  double total = 0.0;
  for (std::size_t idx : indices) {
    const Rng r = base.substream(idx);
    std::vector<Permutation> perms;
    for (std::size_t s = 0; s < count; ++s) {
      Rng sub = r.substream(s);
      perms.push_back(*model.dist().sample(data.graphs[idx], mode, sub, false).perm);
    }
    total += aggregated_entropy(perms);
  }
  return total / static_cast<double>(indices.size());
}

double mean_output_variance(const GraphSymModel& model, Mode mode, const CslDataset& data,
                            const std::vector<std::size_t>& indices, std::size_t samples,
                            std::uint64_t seed) {
  if (indices.empty()) return 0.0;
  NoGradGuard guard;
  GraphSymModel probe = model;
  probe.config().mode = mode;
  const Rng base = Rng(seed).substream(13);
  double total = 0.0;
  for (std::size_t idx : indices) {
    Rng r = base.substream(idx);
    total += output_variance(probe.estimate(data.graphs[idx], samples, r).per_sample);
  }
  return total / static_cast<double>(indices.size());
}

namespace {

ClassificationResult run_classification_steps(const RunConfig& cfg, MetricsLog& log) {
  cfg.validate();
  const std::uint64_t seed = cfg.seed_value();
  ClassificationResult res;
  {
    Rng data_rng = Rng(seed).substream(1);
    res.data = std::make_unique<CslDataset>(gen_csl_pairs(cfg.csl_nodes, cfg.csl_skips, cfg.csl_per_class, data_rng));
  }
  const CslDataset& data = *res.data;
  {
    Rng init = Rng(seed).substream(2);
    res.model = std::make_unique<GraphSymModel>(make_graph_model(cfg, cfg.mode, cfg.csl_nodes, 1, cfg.mlp_hidden, init));
  }
  GraphSymModel& model = *res.model;
  ParameterSet& params = model.params();
  Adam opt(AdamConfig{cfg.lr});

  const std::size_t batches = (data.train.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = cfg.epochs * batches;
  const double warmup = std::max(1.0, cfg.warmup_fraction * static_cast<double>(total_steps));
  const std::uint64_t eval_seed = Rng(seed).substream(3).index(1u << 30);

  auto evaluate = [&](std::size_t epoch, double train_loss) {
    EpochStats st;
    st.epoch = epoch;
    st.train_loss = train_loss;
    st.val_accuracy = evaluate_accuracy(model, data, data.val, cfg.eval_samples, eval_seed);
    st.test_accuracy = evaluate_accuracy(model, data, data.test, cfg.eval_samples, eval_seed);
    st.aggregated_entropy = mean_aggregated_entropy(model, data, data.val, cfg.eval_samples, eval_seed);
    if (epoch > 0) log.emit({epoch, "train", "loss", train_loss, seed});
    log.emit({epoch, "val", "accuracy", st.val_accuracy, seed});
    log.emit({epoch, "test", "accuracy", st.test_accuracy, seed});
    log.emit({epoch, "val", "aggregated_entropy", st.aggregated_entropy, seed});
    if (epoch > 0 && st.val_accuracy > res.best_val_accuracy) {
      res.best_val_accuracy = st.val_accuracy;
      res.test_at_best_val = st.test_accuracy;
    }
    res.epochs.push_back(st);
  };

  evaluate(0, 0.0);
  const Rng shuffle_base = Rng(seed).substream(4);
  const Rng sample_base = Rng(seed).substream(5);
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = data.train;
    Rng sh = shuffle_base.substream(epoch);
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[sh.index(i + 1)]);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches; ++b, ++step) {
      const std::size_t lo = b * cfg.batch_size;
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      params.zero_grad();
      Tensor batch_loss;
      for (std::size_t k = lo; k < hi; ++k) {
        const std::size_t idx = order[k];
        Rng r = sample_base.substream(step, idx);
        const Tensor target = Tensor::full({1, 1}, static_cast<double>(data.labels[idx]));
        TrainingLoss tl = model.training_loss(data.graphs[idx], target, bce_with_logits, cfg.train_samples, r);
        const double task = tl.task.item();
        res.worst_convexity_gap =
            res.logged_batches == 0 && k == lo ? task - tl.loss_of_mean
                                               : std::min(res.worst_convexity_gap, task - tl.loss_of_mean);
        if (!convexity_holds(task, tl.loss_of_mean)) ++res.convexity_violations;
        batch_loss = batch_loss.defined() ? batch_loss + tl.total : tl.total;
      }
      ++res.logged_batches;
      const Tensor loss = scale(batch_loss, 1.0 / static_cast<double>(hi - lo));
      const double value = loss.item();
      if (!std::isfinite(value)) diverged(log, step, seed, "training loss");
      loss.backward();
      opt.set_lr(cfg.lr * std::min(1.0, static_cast<double>(step + 1) / warmup));
      clip_grad_norm(params, cfg.clip);
      opt.step(params);
      check_params(params, log, step, seed);
      epoch_loss += value;
    }
    evaluate(epoch, epoch_loss / static_cast<double>(batches));
  }
  log.emit({total_steps, "train", "convexity_violations", static_cast<double>(res.convexity_violations), seed});
  log.emit({total_steps, "test", "accuracy_at_best_val", res.test_at_best_val, seed});
  return res;
}

}  // namespace

ClassificationResult run_classification(const RunConfig& cfg, MetricsLog& log) {
  return numerically_guarded(log, cfg.seed_value(), [&] { return run_classification_steps(cfg, log); });
}

namespace {

GinBaselineResult run_gin_baseline_steps(const RunConfig& cfg, MetricsLog& log) {
  cfg.validate();
  const std::uint64_t seed = cfg.seed_value();
  Rng data_rng = Rng(seed).substream(1);
  const CslDataset data = gen_csl_pairs(cfg.csl_nodes, cfg.csl_skips, cfg.csl_per_class, data_rng);
  Rng init = Rng(seed).substream(6);
  GinConfig gc;
  gc.out_dim = 16;
  Gin gin(gc, init);
  ParameterSet params;
  params.extend("gin.", gin.params());
  Linear head(gc.out_dim, 1, init, params, "head");
  Adam opt(AdamConfig{cfg.lr});

  auto logit = [&](const Graph& g) {
    const Graph gv = add_virtual_node(g, gin.virtual_feature());
    return head(sum(gin.forward(gv, gv.node_features), 0));
  };
  auto accuracy = [&](const std::vector<std::size_t>& idx) {
    NoGradGuard guard;
    std::size_t correct = 0;
    for (std::size_t i : idx) correct += (logit(data.graphs[i]).item() > 0.0 ? 1 : 0) == data.labels[i];
    return static_cast<double>(correct) / static_cast<double>(idx.size());
  };

  const Rng shuffle_base = Rng(seed).substream(7);
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = data.train;
    Rng sh = shuffle_base.substream(epoch);
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[sh.index(i + 1)]);
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size, ++step) {
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      params.zero_grad();
      Tensor total;
      for (std::size_t k = lo; k < hi; ++k) {
        const Tensor target = Tensor::full({1, 1}, static_cast<double>(data.labels[order[k]]));
        const Tensor l = bce_with_logits(logit(data.graphs[order[k]]), target);
        total = total.defined() ? total + l : l;
      }
      const Tensor loss = scale(total, 1.0 / static_cast<double>(hi - lo));
      if (!std::isfinite(loss.item())) diverged(log, step, seed, "baseline loss");
      loss.backward();
      clip_grad_norm(params, cfg.clip);
      opt.step(params);
      check_params(params, log, step, seed);
    }
  }
  GinBaselineResult res;
  res.train_accuracy = accuracy(data.train);
  res.test_accuracy = accuracy(data.test);
  log.emit({step, "train", "gin_accuracy", res.train_accuracy, seed});
  log.emit({step, "test", "gin_accuracy", res.test_accuracy, seed});
  return res;
}

}  // namespace

GinBaselineResult run_gin_baseline(const RunConfig& cfg, MetricsLog& log) {
  return numerically_guarded(log, cfg.seed_value(), [&] { return run_gin_baseline_steps(cfg, log); });
}

// ---- n-body ------------------------------------------------------------------------

PointSymModel make_point_model(const RunConfig& cfg, Mode mode, Rng& rng) {
  TransformerConfig tc = cfg.transformer;
  tc.token_count = cfg.nbody.particles * cfg.nbody.particles;
  tc.token_dim = 8;
  tc.out_dim = 3;
  Transformer tf(tc, rng);
  VnDistConfig vc;
  if (cfg.eta) vc.noise.eta = *cfg.eta;
  if (cfg.tau) vc.tau = *cfg.tau;
  VnDistribution dist(vc, rng);
  SymmetrizationConfig sym;
  sym.mode = mode;
  sym.train_samples = cfg.train_samples;
  sym.eval_samples = cfg.eval_samples;
  sym.entropy_strength = cfg.entropy_strength;
  return PointSymModel(std::move(tf), std::move(dist), sym, false);
}

double nbody_mse(const PointSymModel& model, const std::vector<NbodyExample>& data, std::size_t samples,
                 std::uint64_t seed) {
  NoGradGuard guard;
  const Rng base = Rng(seed).substream(21);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Rng r = base.substream(i);
    total += mse_loss(model.estimate_displacement(data[i].initial, samples, r).mean, data[i].target).item();
  }
  return total / static_cast<double>(data.size());
}

namespace {

NbodyResult run_nbody_steps(const RunConfig& cfg, MetricsLog& log) {
  cfg.validate();
  const std::uint64_t seed = cfg.seed_value();
  NbodyResult res;
  {
    Rng data_rng = Rng(seed).substream(1);
    res.data = gen_nbody(cfg.nbody, cfg.nbody_count, data_rng);
  }
  {
    Rng init = Rng(seed).substream(2);
    res.model = std::make_unique<PointSymModel>(make_point_model(cfg, cfg.mode, init));
  }
  PointSymModel& model = *res.model;
  ParameterSet& params = model.params();
  Adam opt(AdamConfig{cfg.lr});
  const std::uint64_t eval_seed = Rng(seed).substream(3).index(1u << 30);

  res.initial_mse = nbody_mse(model, res.data, cfg.eval_samples, eval_seed);
  log.emit({0, "train", "mse", res.initial_mse, seed});
  const Rng pick_base = Rng(seed).substream(4);
  const Rng sample_base = Rng(seed).substream(5);
  double running = 0.0;
  std::size_t running_count = 0;
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    Rng pick = pick_base.substream(step);
    params.zero_grad();
    Tensor batch_loss;
    for (std::size_t k = 0; k < cfg.batch_size; ++k) {
      const std::size_t idx = pick.index(res.data.size());
      Rng r = sample_base.substream(step, k);
      TrainingLoss tl = model.training_loss(res.data[idx].initial, res.data[idx].target, mse_loss,
                                            cfg.train_samples, r);
      const double task = tl.task.item();
      res.worst_convexity_gap = res.logged_batches == 0 && k == 0
                                    ? task - tl.loss_of_mean
                                    : std::min(res.worst_convexity_gap, task - tl.loss_of_mean);
      if (!convexity_holds(task, tl.loss_of_mean)) ++res.convexity_violations;
      batch_loss = batch_loss.defined() ? batch_loss + tl.total : tl.total;
    }
    ++res.logged_batches;
    const Tensor loss = scale(batch_loss, 1.0 / static_cast<double>(cfg.batch_size));
    const double value = loss.item();
    if (!std::isfinite(value)) diverged(log, step, seed, "training loss");
    loss.backward();
    opt.step(params);
    check_params(params, log, step, seed);
    running += value;
    ++running_count;
    if (step % cfg.log_every == 0) {
      log.emit({step, "train", "loss", running / static_cast<double>(running_count), seed});
      running = 0.0;
      running_count = 0;
    }
  }
  res.final_mse = nbody_mse(model, res.data, cfg.eval_samples, eval_seed);
  log.emit({cfg.steps, "train", "mse", res.final_mse, seed});
  log.emit({cfg.steps, "train", "convexity_violations", static_cast<double>(res.convexity_violations), seed});
  return res;
}

}  // namespace

NbodyResult run_nbody(const RunConfig& cfg, MetricsLog& log) {
  return numerically_guarded(log, cfg.seed_value(), [&] { return run_nbody_steps(cfg, log); });
}

// ---- diagnostics -------------------------------------------------------------------

DiagnoseResult run_diagnose(const RunConfig& cfg, MetricsLog& log) {
  RunConfig train_cfg = cfg;
  train_cfg.mode = Mode::learned_ps;
  DiagnoseResult res;
  res.training = run_classification(train_cfg, log);
  const std::uint64_t seed = cfg.seed_value();
  const std::size_t last = cfg.epochs;
  for (std::size_t budget : {2u, 5u, 10u, 20u, 50u}) {
    const double ps = mean_output_variance(*res.training.model, Mode::learned_ps, *res.training.data,
                                           res.training.data->val, budget, seed);
    const double ga = mean_output_variance(*res.training.model, Mode::uniform_ga, *res.training.data,
                                           res.training.data->val, budget, seed);
    res.ps_variance[budget] = ps;
    res.ga_variance[budget] = ga;
    log.emit({last, "val", "output_variance_ps_n" + std::to_string(budget), ps, seed});
    log.emit({last, "val", "output_variance_ga_n" + std::to_string(budget), ga, seed});
  }
  return res;
}

}  // namespace lps
