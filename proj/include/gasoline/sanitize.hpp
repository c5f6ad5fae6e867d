#pragma once

#include <cstdint>
#include <vector>

#include "gasoline/backbone.hpp"
#include "gasoline/graph.hpp"
#include "gasoline/types.hpp"

namespace gasoline {

// Tag mixed into the master seed to derive the fold-plan shuffle stream;
// shared by the budgeted and low-rank loops so both see the same fold split.
inline constexpr std::uint64_t kFoldSeedTag = 0xF01D5;

enum class Modify { None, Discretized, Continuous };

struct SanitizeConfig {
  Modify topology = Modify::Discretized;
  Modify features = Modify::None;
  double rate_topo = 0.1;    // budget ratio against the input edge count
  double rate_fea = 0.001;   // budget ratio against n * d feature cells
  int steps = 10;            // nominal number of modification steps
  int folds = 8;
  BackboneKind backbone;
  TrainConfig train;
  std::uint64_t master_seed = 0;

  void validate() const;  // throws ConfigError before any training happens
};

// Integer budgets: totals B = floor(count * rate) and per-step slices
// b = floor(B / steps). The main loop runs ceil(B / b) steps, so the last
// slice may be smaller. Inactive targets hold zeros.
struct Budgets {
  long total_topo = 0;
  long total_fea = 0;
  long step_topo = 0;
  long step_fea = 0;
};
Budgets compute_budgets(const Graph& g, const SanitizeConfig& cfg);

// Undirected calibration of an adjacency gradient whose entries were
// computed as independent partials: dA + dA' - diag(dA). The result is
// bitwise symmetric.
Matrix calibrate_symmetric(const Matrix& da);

// Entrywise sum over per-fold gradients, in fold order.
GraphGrad aggregate_folds(const std::vector<GraphGrad>& fold_grads);

// Flip desirability for a binary adjacency: S = (-dA) o (1 - 2A).
// Large positive scores mark flips expected to lower the validation loss.
// The diagonal is stored as zero and never eligible for selection.
struct ScoreMatrix {
  Matrix s;
};
ScoreMatrix score_matrix(const Matrix& da_calibrated, const Matrix& adjacency);

// Same construction for binary features: (-dX) o (1 - 2X).
Matrix feature_score_matrix(const Matrix& dx, const Matrix& x);

struct Flip {
  char target;  // 'A' or 'X'
  int i, j;     // pair (i < j) for 'A'; (node, column) for 'X'
  double before, after;
};

// Flips the `budget` best-scoring node pairs (score descending, ties broken
// by ascending (i, j)). Mutates both mirrored entries; each pair costs one
// unit. The adjacency must be binary.
std::vector<Flip> apply_discretized(Matrix& adjacency, const ScoreMatrix& s,
                                    long budget);
std::vector<Flip> apply_discretized_features(Matrix& x, const Matrix& score,
                                             long budget);

// Gradient-descent style update target -= (budget / sum|grad|) * grad, so
// the pre-clamp entrywise L1 change equals `budget` exactly. The adjacency
// form zeroes the gradient diagonal, clamps to [0, 1], and keeps symmetry;
// the feature form is unclamped.
void apply_continuous(Matrix& adjacency, const Matrix& grad, double budget);
void apply_continuous_features(Matrix& x, const Matrix& grad, double budget);

struct StepAudit {
  int step = 0;
  std::vector<double> fold_losses;  // validation loss per fold, final params
  long budget_spent_topo = 0;       // cumulative after this step
  long budget_spent_fea = 0;
  std::vector<Flip> flips;          // this step only; empty for continuous
  double wall_ms = 0.0;
  double delta_norm = -1.0;  // low-rank runs record ||sym(UV')||_F here
};

struct SanitizeResult {
  Graph graph;
  std::vector<StepAudit> audit;
};

// The main loop: repeat { K-fold hyper-gradients on the current graph ->
// aggregate -> calibrate -> spend one budget slice on each active target }
// until every active budget is exhausted. Topology is updated before
// features within a step, both from the same aggregated gradient. Fold
// trainings within a step run concurrently; results are reduced in fold
// order so concurrency never changes the outcome.
SanitizeResult sanitize(const Graph& g, const LabelSet& labels,
                        const SanitizeConfig& cfg);

}  // namespace gasoline
