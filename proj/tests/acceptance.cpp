// Acceptance gate: one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "lps/errors.hpp"
#include "lps/experiments.hpp"
#include "lps/oracles.hpp"

using namespace lps;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const char* title, const Outcome& o, double seconds, double limit) {
  const bool ok = o.pass && seconds <= limit;
  if (!ok) ++failures;
  std::printf("[%s] criterion %d: %s | %s | %.1fs (limit %.0fs)\n", ok ? "PASS" : "FAIL", id, title,
              o.detail.c_str(), seconds, limit);
  std::fflush(stdout);
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double max_abs(const Tensor& a, const Tensor& b) {
  return oracle::max_abs_diff(a.to_vector(), b.to_vector());
}

Graph random_graph(std::size_t n, std::size_t channels, Rng& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.uniform() < 0.5) edges.emplace_back(i, j);
  Graph g = Graph::from_edges(n, edges);
  g.node_features = Tensor::from({n, channels}, rng.normals(n * channels));
  return g;
}

PointCloudState random_state(std::size_t n, Rng& rng) {
  PointCloudState s;
  s.positions = Tensor::from({n, 3}, rng.normals(3 * n));
  s.velocities = Tensor::from({n, 3}, rng.normals(3 * n, 0.5));
  std::vector<double> q(n);
  for (double& c : q) c = rng.uniform() < 0.5 ? -1.0 : 1.0;
  s.charges = Tensor::from({n, 1}, q);
  return s;
}

GraphSymModel small_graph_model(std::size_t n, std::size_t channels, std::size_t out, TaskKind kind, Mode mode,
                                Rng& rng) {
  const std::size_t out_width = kind == TaskKind::graph_invariant ? out : n * out;
  Mlp mlp(MlpConfig{{GraphSymModel::input_width(n, channels), 32, 32, out_width}}, rng);
  SnConfig sc;
  sc.gin.in_dim = channels;
  SnDistribution dist(sc, rng);
  SymmetrizationConfig cfg;
  cfg.mode = mode;
  return GraphSymModel(std::move(mlp), std::move(dist), cfg, kind, out);
}

// ---- 1 -------------------------------------------------------------------------------

Outcome separation() {
  RunConfig cfg;
  cfg.seed = 1;
  cfg.task = Task::separate;
  cfg.graph_nodes = 6;
  cfg.embed_dim = 10;
  cfg.eval_samples = 10;
  MetricsLog log;
  const auto r = run_separation(cfg, log);
  Outcome o;
  o.detail = std::to_string(r.graphs) + " graphs, unseparated";
  for (const auto& [mode, count] : r.unseparated) {
    o.detail += std::string(" ") + mode_name(mode) + "=" + std::to_string(count);
    if (count != 0) o.pass = false;
  }
  if (r.graphs != 112) o.pass = false;
  return o;
}

// ---- 2 -------------------------------------------------------------------------------

Outcome exact_symmetrization() {
  Rng rng(2);
  double worst_equiv = 0.0, worst_oracle = 0.0, worst_z = 0.0;
  std::size_t mc_fail = 0;
  NoGradGuard guard;
  for (int draw = 0; draw < 20; ++draw) {
    const std::size_t n = 2 + static_cast<std::size_t>(draw % 3);
    Rng wr = rng.substream(draw);
    const Graph g = random_graph(n, 2, wr);
    const auto all = enumerate_sn(n);

    GraphSymModel eq = small_graph_model(n, 2, 2, TaskKind::node_equivariant, Mode::uniform_ga, wr);
    const Tensor phi = eq.estimate_with(g, all).mean;
    for (const auto& h : enumerate_sn(n)) {
      const Tensor lhs = eq.estimate_with(act_graph(*h.perm, g), all).mean;
      worst_equiv = std::max(worst_equiv, max_abs(lhs, permute_rows(*h.perm, phi)));
    }
    const Mlp& mlp = eq.base();
    auto f = [&](const oracle::PlainGraph& pg) {
      std::vector<double> row(pg.adj.begin(), pg.adj.end());
      row.insert(row.end(), pg.features.begin(), pg.features.end());
      return mlp.forward(Tensor::from({1, row.size()}, row)).to_vector();
    };
    const auto reference = oracle::exact_group_average(f, oracle::PlainGraph::from(g), 2, 5);
    worst_oracle = std::max(worst_oracle, oracle::max_abs_diff(phi.to_vector(), reference));

    GraphSymModel inv = small_graph_model(n, 2, 1, TaskKind::graph_invariant, Mode::uniform_ga, wr);
    const double exact = inv.estimate_with(g, all).mean.item();
    for (const auto& h : enumerate_sn(n))
      worst_equiv = std::max(worst_equiv, std::abs(inv.estimate_with(act_graph(*h.perm, g), all).mean.item() - exact));
    Rng mc = wr.substream(99);
    const Estimate est = inv.estimate(g, 6000, mc);
    const double mean = est.mean.item();
    const double sd = std::sqrt(output_variance(est.per_sample));
    const double se = sd / std::sqrt(6000.0);
    const double z = se > 0 ? std::abs(mean - exact) / se : (mean == exact ? 0.0 : INFINITY);
    worst_z = std::max(worst_z, z);
    if (z > 3.0) ++mc_fail;
  }
  Outcome o;
  o.pass = worst_equiv <= 1e-8 && worst_oracle <= 1e-8 && mc_fail == 0;
  o.detail = fmt("equivariance residual %.2e", worst_equiv) + fmt(", oracle gap %.2e", worst_oracle) +
             fmt(", worst MC z-score %.2f", worst_z) + " (" + std::to_string(mc_fail) + " of 20 beyond 3 SE)";
  return o;
}

// ---- 3 -------------------------------------------------------------------------------

Tensor permute_noise(const Permutation& h, const Tensor& noise) {
  // The virtual node row stays last.
  std::vector<std::size_t> ext = h.perm;
  ext.push_back(h.size());
  return permute_rows(Permutation{ext}, noise);
}

Outcome coupled_noise() {
  Rng rng(3);
  NoGradGuard guard;
  std::size_t perm_mismatch = 0, checked_sn = 0;
  for (int trial = 0; trial < 5; ++trial) {
    Rng r = rng.substream(trial);
    SnDistribution dist(SnConfig{}, r);
    const Graph g = random_graph(4, 1, r);
    const Tensor noise = dist.draw_noise(g, Mode::learned_ps, r);
    const SampledElement base = dist.sample_with_noise(g, noise, false);
    for (const auto& h : enumerate_sn(4)) {
      const SampledElement moved = dist.sample_with_noise(act_graph(*h.perm, g), permute_noise(*h.perm, noise), false);
      const Tensor expected = matmul(h.perm_matrix, base.perm_matrix);
      if (moved.perm_matrix.to_vector() != expected.to_vector()) ++perm_mismatch;
      ++checked_sn;
    }
  }

  Rng vr = rng.substream(100);
  VnDistribution vdist(VnDistConfig{}, vr);
  double worst_o3 = 0.0, worst_prod_rot = 0.0;
  std::size_t prod_mismatch = 0;
  for (int k = 0; k < 100; ++k) {
    Rng r = vr.substream(k);
    const PointCloudState s = PointSymModel::centered(random_state(5, r));
    const PointNoise noise = vdist.draw_noise(5, Mode::learned_ps, r);
    const Tensor rot = haar_orthogonal(3, r, false);
    {
      const SampledElement a = vdist.sample_o3_with_noise(s, false, noise);
      PointCloudState t = s;
      t.positions = rotate_rows(rot, s.positions);
      t.velocities = rotate_rows(rot, s.velocities);
      PointNoise tn{rotate_rows(rot, noise.eps1), rotate_rows(rot, noise.eps2), matmul(rot, noise.jitter)};
      const SampledElement b = vdist.sample_o3_with_noise(t, false, tn);
      worst_o3 = std::max(worst_o3, max_abs(b.rotation, matmul(rot, a.rotation)));
    }
    {
      const Permutation h = uniform_permutation(5, r);
      const SampledElement a = vdist.sample_product_with_noise(s, false, noise, false);
      const PointCloudState t = product_act(ProductRep{h, OrthogonalRep{rot, false}}, s);
      PointNoise tn{rotate_rows(rot, permute_rows(h, noise.eps1)), rotate_rows(rot, permute_rows(h, noise.eps2)),
                    matmul(rot, noise.jitter)};
      const SampledElement b = vdist.sample_product_with_noise(t, false, tn, false);
      if (b.perm_matrix.to_vector() != matmul(h.matrix(), a.perm_matrix).to_vector()) ++prod_mismatch;
      worst_prod_rot = std::max(worst_prod_rot, max_abs(b.rotation, matmul(rot, a.rotation)));
    }
  }
  Outcome o;
  o.pass = perm_mismatch == 0 && worst_o3 <= 1e-5 && prod_mismatch == 0 && worst_prod_rot <= 1e-5;
  o.detail = "S4 " + std::to_string(checked_sn - perm_mismatch) + "/" + std::to_string(checked_sn) +
             " exact" + fmt(", O(3) residual %.2e", worst_o3) + ", S5xO(3) perms " +
             std::to_string(100 - prod_mismatch) + "/100 exact" + fmt(", rotation residual %.2e", worst_prod_rot);
  return o;
}

// ---- 4 -------------------------------------------------------------------------------

double marginal_gap(const Tensor& p) {
  const std::size_t n = p.rows();
  double gap = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double rs = 0.0, cs = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      rs += p.at(i, j);
      cs += p.at(j, i);
    }
    gap = std::max({gap, std::abs(rs - 1.0), std::abs(cs - 1.0)});
  }
  return gap;
}

// Values whose l2-normalized neighbours are at least `min_gap` apart.
Tensor separated_values(std::size_t n, double min_gap, Rng& rng) {
  for (;;) {
    std::vector<double> v = rng.normals(n);
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    std::vector<double> s = v;
    std::sort(s.begin(), s.end());
    bool ok = true;
    for (std::size_t i = 0; i + 1 < n; ++i) ok = ok && (s[i + 1] - s[i]) / norm >= min_gap;
    if (ok) return Tensor::from({n, 1}, v);
  }
}

Outcome postprocessors() {
  Rng rng(4);
  NoGradGuard guard;
  double sink = 0.0, pipeline = 0.0, sort_gap = 0.0, ortho = 0.0, equiv = 0.0, det_gap = 0.0;
  sink = std::max(sink, marginal_gap(sinkhorn(Tensor::zeros({2, 2}), 20)));
  {
    const Tensor z = Tensor::from({3, 1}, {2, 0, 1});
    sort_gap = max_abs(relaxed_argsort(z, 0.01, 20), hard_argsort(z).perm.matrix());
  }
  for (int k = 0; k < 50; ++k) {
    Rng r = rng.substream(k);
    const std::size_t n = 3 + static_cast<std::size_t>(k % 9);
    sink = std::max(sink, marginal_gap(sinkhorn(Tensor::from({n, n}, r.normals(n * n)), 20)));
    pipeline = std::max(pipeline, marginal_gap(relaxed_argsort(Tensor::from({n, 1}, r.normals(n)), 0.01, 20)));

    const Tensor z = separated_values(3 + static_cast<std::size_t>(k % 3), 10 * 0.01, r);
    sort_gap = std::max(sort_gap, max_abs(relaxed_argsort(z, 0.01, 20), hard_argsort(z).perm.matrix()));

    const Tensor m = Tensor::from({3, 3}, r.normals(9));
    const Tensor q = gram_schmidt(m);
    ortho = std::max(ortho, oracle::orthogonality_residual(q.to_vector(), 3));
    const Tensor rot = haar_orthogonal(3, r, false);
    equiv = std::max(equiv, max_abs(gram_schmidt(matmul(rot, m)), matmul(rot, q)));
    det_gap = std::max(det_gap, std::abs(oracle::det(scale_det(q).to_vector(), 3) - 1.0));
  }
  Outcome o;
  o.pass = sink <= 1e-4 && sort_gap <= 1e-2 && ortho <= 1e-6 && equiv <= 1e-6 && det_gap <= 1e-6;
  o.detail = fmt("sinkhorn marginal gap %.2e", sink) + fmt(" (argsort costs at tau 0.01: %.2e)", pipeline) +
             fmt(", relaxed vs hard %.2e", sort_gap) + fmt(", orthogonality %.2e", ortho) +
             fmt(", O(3) equivariance %.2e", equiv) + fmt(", |det-1| %.2e", det_gap);
  return o;
}

// ---- 5 -------------------------------------------------------------------------------

// Relative error between reverse-mode and central-difference gradients of
// sum(W * f(leaves)) over the concatenated leaf values.
double gradient_gap(std::vector<Tensor> leaves, const std::function<Tensor()>& f, Rng& rng) {
  Tensor probe;
  {
    NoGradGuard guard;
    const Tensor y = f();
    probe = Tensor::from(y.shape(), rng.normals(y.numel()));
  }
  for (auto& t : leaves) t.zero_grad();
  sum(f() * probe).backward();
  std::vector<double> x, analytic;
  for (const auto& t : leaves) {
    auto v = t.data();
    auto g = t.grad();
    x.insert(x.end(), v.begin(), v.end());
    analytic.insert(analytic.end(), g.begin(), g.end());
  }
  auto eval = [&](const std::vector<double>& xv) {
    std::size_t off = 0;
    for (auto& t : leaves) {
      auto d = t.mutable_data();
      std::copy(xv.begin() + off, xv.begin() + off + d.size(), d.begin());
      off += d.size();
    }
    NoGradGuard guard;
    return sum(f() * probe).item();
  };
  const auto numeric = oracle::finite_diff_grad(eval, x, 1e-5);
  eval(x);
  return oracle::relative_error(analytic, numeric);
}

Tensor leaf(Shape shape, std::vector<double> v) {
  return Tensor::from(std::move(shape), std::move(v), true);
}

Outcome gradients() {
  Rng rng(5);
  double w_sort = 0, w_gs = 0, w_ent = 0, w_mlp = 0, w_tf = 0;
  for (int k = 0; k < 10; ++k) {
    Rng r = rng.substream(k);
    const double tau = k % 2 == 0 ? 0.5 : 0.1;
    Tensor z = leaf({6, 1}, r.normals(6));
    w_sort = std::max(w_sort, gradient_gap({z}, [&] { return relaxed_argsort(z, tau, 20); }, r));

    Tensor m = leaf({3, 3}, r.normals(9));
    w_gs = std::max(w_gs, gradient_gap({m}, [&] { return gram_schmidt(m); }, r));

    Tensor l = leaf({5, 5}, r.normals(25));
    w_ent = std::max(w_ent, gradient_gap({l}, [&] { return entropy_regularizer(sinkhorn(l, 20)); }, r));

    Mlp mlp(MlpConfig{{6, 8, 8, 3}}, r);
    Tensor x = leaf({4, 6}, r.normals(24));
    std::vector<Tensor> mlp_leaves{x};
    for (auto& p : mlp.params().list()) mlp_leaves.push_back(p.tensor);
    w_mlp = std::max(w_mlp, gradient_gap(mlp_leaves, [&] { return mlp.forward(x); }, r));

    TransformerConfig tc;
    tc.layers = 1;
    tc.hidden = 8;
    tc.heads = 2;
    tc.token_count = 4;
    tc.token_dim = 3;
    tc.out_dim = 2;
    Transformer tf(tc, r);
    Tensor tokens = leaf({8, 3}, r.normals(24));
    std::vector<Tensor> tf_leaves{tokens};
    for (auto& p : tf.params().list()) tf_leaves.push_back(p.tensor);
    w_tf = std::max(w_tf, gradient_gap(tf_leaves, [&] { return tf.run(tokens, 2); }, r));
  }
  Outcome o;
  o.pass = std::max({w_sort, w_gs, w_ent, w_mlp, w_tf}) <= 1e-3;
  o.detail = fmt("worst relative error: sort %.1e", w_sort) + fmt(", gram-schmidt %.1e", w_gs) +
             fmt(", entropy %.1e", w_ent) + fmt(", mlp %.1e", w_mlp) + fmt(", transformer %.1e", w_tf);
  return o;
}

// ---- 8 -------------------------------------------------------------------------------

Outcome nbody(NbodyResult& res, double& seconds) {
  RunConfig cfg;
  cfg.seed = 1;
  cfg.task = Task::nbody;
  cfg.mode = Mode::learned_ps;
  cfg.steps = 2000;
  cfg.batch_size = 8;
  cfg.train_samples = 4;
  cfg.eval_samples = 20;
  MetricsLog log;
  const auto t0 = Clock::now();
  res = run_nbody(cfg, log);
  seconds = seconds_since(t0);
  const double drop = 1.0 - res.final_mse / res.initial_mse;

  NoGradGuard guard;
  PointSymModel canon = *res.model;
  canon.config().mode = Mode::canonical;
  const PointSymModel& ps = *res.model;
  Rng rng(8);
  double trans = 0.0, rot_gap = 0.0, law = 0.0;
  std::size_t law_perm_mismatch = 0;
  for (int k = 0; k < 20; ++k) {
    Rng r = rng.substream(k);
    const PointCloudState s = res.data[static_cast<std::size_t>(k)].initial;
    Rng e0(0);
    const Tensor y = canon.estimate_euclidean(s, 1, e0).mean;

    const std::vector<double> shift = r.normals(3, 3.0);
    PointCloudState st = s;
    st.positions = s.positions + Tensor::from({1, 3}, shift);
    Rng e1(0);
    trans = std::max(trans, max_abs(canon.estimate_euclidean(st, 1, e1).mean, y + Tensor::from({1, 3}, shift)));

    const Tensor rot = haar_orthogonal(3, r, false);
    const PointCloudState sr = euclidean_act(EuclideanRep{OrthogonalRep{rot, false}, {0, 0, 0}}, s);
    Rng e2(0);
    rot_gap = std::max(rot_gap, max_abs(canon.estimate_euclidean(sr, 1, e2).mean, rotate_rows(rot, y)));

    const PointCloudState c = PointSymModel::centered(s);
    const PointNoise noise = ps.dist().draw_noise(s.n(), Mode::learned_ps, r);
    const SampledElement a = ps.dist().sample_product_with_noise(c, false, noise, false);
    const Tensor out = ps.estimate_with(s, {a}).per_sample[0];
    const Permutation h = uniform_permutation(s.n(), r);
    const PointCloudState t = product_act(ProductRep{h, OrthogonalRep{rot, false}}, s);
    PointNoise tn{rotate_rows(rot, permute_rows(h, noise.eps1)), rotate_rows(rot, permute_rows(h, noise.eps2)),
                  matmul(rot, noise.jitter)};
    const SampledElement b = ps.dist().sample_product_with_noise(PointSymModel::centered(t), false, tn, false);
    if (b.perm_matrix.to_vector() != matmul(h.matrix(), a.perm_matrix).to_vector()) ++law_perm_mismatch;
    const Tensor moved = ps.estimate_with(t, {b}).per_sample[0];
    law = std::max(law, max_abs(moved, rotate_rows(rot, permute_rows(h, out))));
  }
  Outcome o;
  o.pass = drop >= 0.5 && trans <= 1e-10 && rot_gap <= 1e-5 && law <= 1e-5 && law_perm_mismatch == 0;
  o.detail = fmt("training mse %.4f", res.initial_mse) + fmt(" -> %.4f", res.final_mse) +
             fmt(" (drop %.1f%%)", 100.0 * drop) + fmt(", canonical translation %.1e", trans) +
             fmt(", rotation %.1e", rot_gap) + fmt(", per-sample coupled-noise law %.1e", law) +
             (law_perm_mismatch ? " with permutation mismatches" : "");
  return o;
}

}  // namespace

int main() {
  {
    const auto t0 = Clock::now();
    const Outcome o = separation();
    report(1, "separation of all connected 6-node graphs", o, seconds_since(t0), 300);
  }
  {
    const auto t0 = Clock::now();
    const Outcome o = exact_symmetrization();
    report(2, "exact group averaging and Monte Carlo convergence", o, seconds_since(t0), 120);
  }
  {
    const auto t0 = Clock::now();
    const Outcome o = coupled_noise();
    report(3, "coupled-noise transformation law", o, seconds_since(t0), 60);
  }
  {
    const auto t0 = Clock::now();
    const Outcome o = postprocessors();
    report(4, "postprocessor contracts", o, seconds_since(t0), 1e9);
  }
  {
    const auto t0 = Clock::now();
    const Outcome o = gradients();
    report(5, "reverse-mode gradients against finite differences", o, seconds_since(t0), 1e9);
  }

  RunConfig csl;
  csl.seed = 1;
  csl.task = Task::classify_csl;
  csl.epochs = 20;
  csl.batch_size = 8;
  csl.csl_per_class = 200;
  csl.train_samples = 10;
  csl.eval_samples = 10;
  MetricsLog ps_log, canon_log, gin_log;

  const auto t_ps = Clock::now();
  csl.mode = Mode::learned_ps;
  ClassificationResult ps = run_classification(csl, ps_log);
  const double ps_seconds = seconds_since(t_ps);
  csl.mode = Mode::canonical;
  ClassificationResult canon = run_classification(csl, canon_log);
  GinBaselineResult gin = run_gin_baseline(csl, gin_log);
  {
    Outcome o;
    const double gap = ps.test_at_best_val - canon.test_at_best_val;
    o.pass = ps.test_at_best_val >= 0.95 && gap >= 0.20 && std::abs(gin.test_accuracy - 0.5) <= 0.10;
    o.detail = fmt("ps test %.3f", ps.test_at_best_val) + fmt(", canonical %.3f", canon.test_at_best_val) +
               fmt(", gin %.3f", gin.test_accuracy) + " on " + std::to_string(ps.data->test.size()) +
               " test graphs";
    report(6, "CSL classification", o, ps_seconds, 1800);
  }
  {
    const auto& first = ps.epochs.front();
    const auto& last = ps.epochs.back();
    Outcome o;
    o.pass = last.aggregated_entropy < first.aggregated_entropy && last.val_accuracy > first.val_accuracy;
    o.detail = fmt("aggregated entropy %.4f", first.aggregated_entropy) + fmt(" -> %.4f", last.aggregated_entropy) +
               fmt(", val accuracy %.3f", first.val_accuracy) + fmt(" -> %.3f", last.val_accuracy);
    report(7, "entropy diagnostic during CSL training", o, 0, 1);
  }

  NbodyResult nb;
  double nb_seconds = 0.0;
  {
    const Outcome o = nbody(nb, nb_seconds);
    report(8, "n-body training and E(3) equivariance", o, nb_seconds, 1800);
  }
  {
    const auto t0 = Clock::now();
    const double v_ps = mean_output_variance(*ps.model, Mode::learned_ps, *ps.data, ps.data->val, 10, 9);
    const double v_ga = mean_output_variance(*ps.model, Mode::uniform_ga, *ps.data, ps.data->val, 10, 9);
    Outcome o;
    o.pass = v_ps < v_ga;
    o.detail = fmt("validation output variance ps %.4g", v_ps) + fmt(" vs ga %.4g", v_ga);
    report(9, "variance ordering after CSL training", o, seconds_since(t0), 1e9);
  }
  {
    Outcome o;
    const std::size_t violations = ps.convexity_violations + canon.convexity_violations + nb.convexity_violations;
    const std::size_t batches = ps.logged_batches + canon.logged_batches + nb.logged_batches;
    o.pass = violations == 0 && batches > 0;
    o.detail = std::to_string(violations) + " violations over " + std::to_string(batches) + " batches" +
               fmt(", smallest gap %.2e", std::min({ps.worst_convexity_gap, canon.worst_convexity_gap,
                                                     nb.worst_convexity_gap}));
    report(10, "sample-mean loss bounds the loss of the mean", o, 0, 1);
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
