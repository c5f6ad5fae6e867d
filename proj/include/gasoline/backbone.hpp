#pragma once

#include <cstdint>
#include <vector>

#include "gasoline/graph.hpp"
#include "gasoline/types.hpp"

namespace gasoline {

// The three supported message-passing architectures. None of them use
// dropout or any other stochastic layer: given a seed, every forward pass,
// training run, and gradient is reproducible bit for bit.
enum class Backbone { Sgc, Gcn2, Appnp };

struct BackboneKind {
  Backbone kind = Backbone::Sgc;
  int k = 2;           // Sgc: propagation order
  int hidden = 16;     // Gcn2 / Appnp: hidden width
  double alpha = 0.1;  // Appnp: teleport probability
  int k_prop = 10;     // Appnp: propagation steps

  static BackboneKind sgc(int k = 2);
  static BackboneKind gcn2(int hidden = 16);
  static BackboneKind appnp(double alpha = 0.1, int k_prop = 10,
                            int hidden = 16);
  void validate() const;
};

enum class Optimizer { GradientDescent, Adam };

struct TrainConfig {
  int iterations = 200;   // total optimizer steps T
  int truncate_at = 196;  // parameter snapshots are kept for steps > this
  double learning_rate = 0.01;
  double weight_decay = 5e-4;  // coefficient on sum of squared Frobenius norms
  Optimizer optimizer = Optimizer::Adam;
  std::uint64_t init_seed = 0;
  // Also keep the snapshot taken exactly at the truncation step, one extra
  // term in the hyper-gradient sum. Off by default.
  bool keep_boundary_snapshot = false;

  void validate() const;
};

// Weight matrices only; architectures here are bias-free.
//   Sgc:  [W (d x c)]
//   Gcn2: [W1 (d x h), W2 (h x c)]
//   Appnp:[W1 (d x h), W2 (h x c)]
struct ModelState {
  std::vector<Matrix> weights;
  int step = 0;
};

// Gradient of a scalar loss with respect to the raw graph variables. Every
// adjacency entry is treated as an independent scalar (the symmetric
// calibration happens later, in the sanitizer); the diagonal is present in
// the matrix but is never eligible for modification.
struct GraphGrad {
  Matrix adjacency;  // n x n
  Matrix feature;    // n x d
};

// Seeded Glorot-style uniform init: entries ~ U(-g, g),
// g = sqrt(6 / (fan_in + fan_out)), filled row major from one stream.
ModelState init_params(const BackboneKind& kind, int d, int c,
                       std::uint64_t seed);

// Deterministic forward pass.
//   Sgc:   logits = A_hat^k X W
//   Gcn2:  logits = A_hat relu(A_hat X W1) W2
//   Appnp: H = relu(X W1) W2; Z_0 = H;
//          Z_{s+1} = (1 - alpha) A_hat Z_s + alpha H; logits = Z_{k_prop}
Matrix forward(const BackboneKind& kind, const Propagator& adj,
               const Matrix& x, const ModelState& params);

// Mean over `nodes` of -log softmax(logits[i])[label_i], computed with a
// max shift so the value is always finite.
double ce_loss(const Matrix& logits, const LabelSet& labels,
               const std::vector<int>& nodes);
Matrix ce_loss_grad(const Matrix& logits, const LabelSet& labels,
                    const std::vector<int>& nodes);

struct TrainResult {
  // Post-update parameters for every step t with t > truncate_at
  // (plus t == truncate_at when keep_boundary_snapshot is set).
  std::vector<ModelState> snapshots;
  ModelState final_state;
  std::vector<double> train_loss;  // loss at theta^t before step t, t = 1..T
};

// Full-batch training of the node classifier on `train_set`. Objective:
// ce_loss + weight_decay * sum_l ||W_l||_F^2 (the optimizer applies the
// exact gradient of that expression). Throws DivergenceError when the loss
// stops being finite.
TrainResult train_dynamic(const BackboneKind& kind, const Propagator& adj,
                          const Matrix& x, const LabelSet& labels,
                          const std::vector<int>& train_set,
                          const TrainConfig& cfg);

// First-order hyper-gradient of the validation loss with respect to the raw
// adjacency and features: sum over snapshots of the gradient of
// ce_loss(forward(theta_t), valid_set), holding each theta_t constant.
// The chain runs through the full normalization, degree terms included.
GraphGrad graph_hypergrad(const BackboneKind& kind, const Graph& g,
                          const std::vector<ModelState>& snapshots,
                          const LabelSet& labels,
                          const std::vector<int>& valid_set);

// Same computation starting from an explicit dense raw adjacency (possibly
// weighted or asymmetric). This is the core the sanitizer drives while it
// mutates a dense working copy of the graph.
GraphGrad hypergrad_dense(const BackboneKind& kind, const Matrix& raw_adjacency,
                          const Matrix& x,
                          const std::vector<ModelState>& snapshots,
                          const LabelSet& labels,
                          const std::vector<int>& valid_set);

}  // namespace gasoline
