#include "gasoline/sanitize.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "gasoline/error.hpp"
#include "gasoline/parallel.hpp"
#include "gasoline/rng.hpp"

namespace gasoline {

namespace {

bool is_binary(const Matrix& m) {
  for (int i = 0; i < int(m.rows()); ++i) {
    for (int j = 0; j < int(m.cols()); ++j) {
      double v = m(i, j);
      if (v != 0.0 && v != 1.0) return false;
    }
  }
  return true;
}

}  // namespace

void SanitizeConfig::validate() const {
  if (topology == Modify::None && features == Modify::None) {
    throw ConfigError("nothing to modify: both targets are 'none'");
  }
  if (steps < 1) throw ConfigError("step count must be >= 1");
  if (folds < 2) throw ConfigError("fold count must be >= 2");
  if (topology != Modify::None && !(rate_topo > 0.0)) {
    throw ConfigError("topology budget rate must be > 0");
  }
  if (features != Modify::None && !(rate_fea > 0.0)) {
    throw ConfigError("feature budget rate must be > 0");
  }
  backbone.validate();
  train.validate();
}

Budgets compute_budgets(const Graph& g, const SanitizeConfig& cfg) {
  Budgets b;
  if (cfg.topology != Modify::None) {
    b.total_topo = long(std::floor(double(g.num_edges()) * cfg.rate_topo));
    b.step_topo = b.total_topo / cfg.steps;
    if (b.step_topo < 1) {
      throw ConfigError("per-step topology budget is zero (total " +
                        std::to_string(b.total_topo) + " over " +
                        std::to_string(cfg.steps) + " steps)");
    }
  }
  if (cfg.features != Modify::None) {
    double cells = double(g.n) * double(g.dim());
    b.total_fea = long(std::floor(cells * cfg.rate_fea));
    b.step_fea = b.total_fea / cfg.steps;
    if (b.step_fea < 1) {
      throw ConfigError("per-step feature budget is zero (total " +
                        std::to_string(b.total_fea) + " over " +
                        std::to_string(cfg.steps) + " steps)");
    }
  }
  return b;
}

Matrix calibrate_symmetric(const Matrix& da) {
  if (da.rows() != da.cols()) {
    throw DataError("calibration requires a square gradient");
  }
  Matrix out = da + da.transpose();
  out.diagonal() -= da.diagonal();
  return out;
}

GraphGrad aggregate_folds(const std::vector<GraphGrad>& fold_grads) {
  if (fold_grads.empty()) throw DataError("no fold gradients to aggregate");
  GraphGrad out = fold_grads[0];
  for (std::size_t k = 1; k < fold_grads.size(); ++k) {
    const GraphGrad& g = fold_grads[k];
    if (g.adjacency.rows() != out.adjacency.rows() ||
        g.feature.rows() != out.feature.rows() ||
        g.feature.cols() != out.feature.cols()) {
      throw DataError("fold gradients have mismatched shapes");
    }
    out.adjacency += g.adjacency;
    out.feature += g.feature;
  }
  return out;
}

ScoreMatrix score_matrix(const Matrix& da_calibrated,
                         const Matrix& adjacency) {
  if (da_calibrated.rows() != adjacency.rows() ||
      da_calibrated.cols() != adjacency.cols()) {
    throw DataError("gradient and adjacency shapes differ");
  }
  if (!is_binary(adjacency)) {
    throw DataError("flip scores require a binary adjacency");
  }
  ScoreMatrix out;
  out.s = (-da_calibrated.array() * (1.0 - 2.0 * adjacency.array())).matrix();
  out.s.diagonal().setZero();
  return out;
}

Matrix feature_score_matrix(const Matrix& dx, const Matrix& x) {
  if (dx.rows() != x.rows() || dx.cols() != x.cols()) {
    throw DataError("gradient and feature shapes differ");
  }
  if (!is_binary(x)) {
    throw DataError("flip scores require binary features");
  }
  return (-dx.array() * (1.0 - 2.0 * x.array())).matrix();
}

std::vector<Flip> apply_discretized(Matrix& adjacency, const ScoreMatrix& s,
                                    long budget) {
  const int n = int(adjacency.rows());
  const long pairs = long(n) * (n - 1) / 2;
  if (budget < 1) throw ConfigError("flip budget must be >= 1");
  if (budget > pairs) {
    throw DataError("flip budget exceeds available node pairs");
  }
  if (!is_binary(adjacency)) {
    throw DataError("discretized updates require a binary adjacency");
  }
  std::vector<long> idx(static_cast<std::size_t>(pairs));
  std::iota(idx.begin(), idx.end(), 0L);
  // Pair p <-> (i, j): row-major upper triangle.
  std::vector<std::pair<int, int>> decode(static_cast<std::size_t>(pairs));
  {
    std::size_t p = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) decode[p++] = {i, j};
    }
  }
  auto better = [&](long a, long b) {
    double sa = s.s(decode[std::size_t(a)].first, decode[std::size_t(a)].second);
    double sb = s.s(decode[std::size_t(b)].first, decode[std::size_t(b)].second);
    if (sa != sb) return sa > sb;
    return decode[std::size_t(a)] < decode[std::size_t(b)];
  };
  if (budget < pairs) {
    std::nth_element(idx.begin(), idx.begin() + budget, idx.end(), better);
  }
  std::sort(idx.begin(), idx.begin() + budget, better);
  std::vector<Flip> flips;
  flips.reserve(std::size_t(budget));
  for (long p = 0; p < budget; ++p) {
    auto [i, j] = decode[std::size_t(idx[std::size_t(p)])];
    double old = adjacency(i, j);
    double now = 1.0 - old;
    adjacency(i, j) = now;
    adjacency(j, i) = now;
    flips.push_back({'A', i, j, old, now});
  }
  return flips;
}

std::vector<Flip> apply_discretized_features(Matrix& x, const Matrix& score,
                                             long budget) {
  const long cells = long(x.rows()) * long(x.cols());
  if (budget < 1) throw ConfigError("flip budget must be >= 1");
  if (budget > cells) throw DataError("flip budget exceeds feature cells");
  if (!is_binary(x)) {
    throw DataError("discretized updates require binary features");
  }
  const int d = int(x.cols());
  std::vector<long> idx(static_cast<std::size_t>(cells));
  std::iota(idx.begin(), idx.end(), 0L);
  auto better = [&](long a, long b) {
    double sa = score(int(a / d), int(a % d));
    double sb = score(int(b / d), int(b % d));
    if (sa != sb) return sa > sb;
    return a < b;
  };
  if (budget < cells) {
    std::nth_element(idx.begin(), idx.begin() + budget, idx.end(), better);
  }
  std::sort(idx.begin(), idx.begin() + budget, better);
  std::vector<Flip> flips;
  flips.reserve(std::size_t(budget));
  for (long p = 0; p < budget; ++p) {
    int i = int(idx[std::size_t(p)] / d);
    int k = int(idx[std::size_t(p)] % d);
    double old = x(i, k);
    double now = 1.0 - old;
    x(i, k) = now;
    flips.push_back({'X', i, k, old, now});
  }
  return flips;
}

void apply_continuous(Matrix& adjacency, const Matrix& grad, double budget) {
  if (grad.rows() != adjacency.rows() || grad.cols() != adjacency.cols()) {
    throw DataError("gradient and adjacency shapes differ");
  }
  if (!(budget > 0.0)) throw ConfigError("continuous budget must be > 0");
  Matrix g = grad;
  g.diagonal().setZero();
  const double denom = g.cwiseAbs().sum();
  if (denom == 0.0) {
    throw DataError("hyper-gradient vanished; no continuous update possible");
  }
  adjacency -= (budget / denom) * g;
  adjacency = adjacency.cwiseMax(0.0).cwiseMin(1.0);
  adjacency.diagonal().setZero();
}

void apply_continuous_features(Matrix& x, const Matrix& grad, double budget) {
  if (grad.rows() != x.rows() || grad.cols() != x.cols()) {
    throw DataError("gradient and feature shapes differ");
  }
  if (!(budget > 0.0)) throw ConfigError("continuous budget must be > 0");
  const double denom = grad.cwiseAbs().sum();
  if (denom == 0.0) {
    throw DataError("hyper-gradient vanished; no continuous update possible");
  }
  x -= (budget / denom) * grad;
}

SanitizeResult sanitize(const Graph& g, const LabelSet& labels,
                        const SanitizeConfig& cfg) {
  cfg.validate();
  g.validate();
  labels.validate(g.n);
  const Budgets budgets = compute_budgets(g, cfg);

  Matrix a = g.dense_adjacency();
  Matrix x = g.features;
  if (cfg.topology == Modify::Discretized && !is_binary(a)) {
    throw DataError("discretized topology requires a binary adjacency");
  }
  if (cfg.features == Modify::Discretized && !is_binary(x)) {
    throw DataError("discretized features require binary features");
  }

  const FoldPlan folds =
      make_folds(labels, cfg.folds, derive_seed(cfg.master_seed, kFoldSeedTag));
  const int K = folds.count();

  SanitizeResult result;
  long spent_topo = 0, spent_fea = 0;
  const bool topo_on = cfg.topology != Modify::None;
  const bool fea_on = cfg.features != Modify::None;
  int step = 0;
  while ((topo_on && spent_topo < budgets.total_topo) ||
         (fea_on && spent_fea < budgets.total_fea)) {
    ++step;
    auto t0 = std::chrono::steady_clock::now();

    const NormAdj prop = normalize_raw(a);
    std::vector<GraphGrad> fold_grads(static_cast<std::size_t>(K));
    std::vector<double> fold_losses(static_cast<std::size_t>(K));
    parallel_for(K, [&](int k) {
      TrainConfig tc = cfg.train;
      tc.init_seed = derive_seed(cfg.master_seed, std::uint64_t(step),
                                 std::uint64_t(k));
      const std::vector<int> train_set = folds.train_of(k);
      const std::vector<int>& valid_set = folds.valid_of(k);
      TrainResult tr = train_dynamic(cfg.backbone, prop, x, labels,
                                     train_set, tc);
      fold_losses[std::size_t(k)] = ce_loss(
          forward(cfg.backbone, prop, x, tr.final_state), labels, valid_set);
      fold_grads[std::size_t(k)] = hypergrad_dense(
          cfg.backbone, a, x, tr.snapshots, labels, valid_set);
    });
    const GraphGrad agg = aggregate_folds(fold_grads);

    StepAudit rec;
    rec.step = step;
    rec.fold_losses = fold_losses;

    if (topo_on && spent_topo < budgets.total_topo) {
      long b = std::min(budgets.step_topo, budgets.total_topo - spent_topo);
      Matrix cal = calibrate_symmetric(agg.adjacency);
      if (cfg.topology == Modify::Discretized) {
        ScoreMatrix s = score_matrix(cal, a);
        std::vector<Flip> flips = apply_discretized(a, s, b);
        rec.flips.insert(rec.flips.end(), flips.begin(), flips.end());
      } else {
        apply_continuous(a, cal, double(b));
      }
      spent_topo += b;
    }
    if (fea_on && spent_fea < budgets.total_fea) {
      long b = std::min(budgets.step_fea, budgets.total_fea - spent_fea);
      if (cfg.features == Modify::Discretized) {
        Matrix fs = feature_score_matrix(agg.feature, x);
        std::vector<Flip> flips = apply_discretized_features(x, fs, b);
        rec.flips.insert(rec.flips.end(), flips.begin(), flips.end());
      } else {
        apply_continuous_features(x, agg.feature, double(b));
      }
      spent_fea += b;
    }

    rec.budget_spent_topo = spent_topo;
    rec.budget_spent_fea = spent_fea;
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    result.audit.push_back(std::move(rec));
  }

  result.graph = graph_from_dense(a, std::move(x));
  return result;
}

}  // namespace gasoline
