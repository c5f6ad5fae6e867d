#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "gasoline/backbone.hpp"
#include "gasoline/graph.hpp"
#include "gasoline/sanitize.hpp"
#include "gasoline/types.hpp"

namespace gasoline {

// Rank-r additive topology edit: the effective adjacency is
//   A_eff = A + sym(U V'),  sym(M) = (M + M') / 2,
// held in factored form. Nothing in the propagation or gradient path ever
// materializes an n x n intermediate; costs stay O((m + n r) * width).
struct LowRankDelta {
  Matrix u, v;  // n x r each
};

struct LrConfig {
  int rank = 32;
  double step_size = 0.01;   // descent rate on the factors
  int steps = 10;            // outer descent steps
  bool normalize = true;     // false: propagate with raw A + sym(UV')
  double init_scale = 1e-3;  // factor entries start ~ U(-scale, scale)

  void validate() const;
};

// Implicit normalized operator over the effective adjacency:
//   normalized:   mul(z) = diag(s) N diag(s) z, N = A + I + sym(UV'),
//                 s = max(N 1, floor)^{-1/2}
//   unnormalized: mul(z) = (A + sym(UV')) z
// Symmetric by construction, so mul_t == mul.
class LrPropagator final : public Propagator {
 public:
  LrPropagator(const Graph& g, const LowRankDelta& delta, bool normalize,
               double degree_floor = 1e-6);

  int size() const override { return n_; }
  Matrix mul(const Matrix& z) const override;
  Matrix mul_t(const Matrix& z) const override { return mul(z); }

  // N z (normalized) / (A + sym(UV')) z (unnormalized); no diagonal scaling.
  Matrix apply_core(const Matrix& z) const;

  bool normalized() const { return normalize_; }
  double degree_floor() const { return floor_; }
  const Vector& degree() const { return deg_; }
  const Vector& scale() const { return s_; }
  const Matrix& u() const { return u_; }
  const Matrix& v() const { return v_; }

 private:
  int n_ = 0;
  SparseMatrix base_;  // A + I (normalized) or A (unnormalized)
  Matrix u_, v_;
  bool normalize_ = true;
  double floor_ = 1e-6;
  Vector deg_, s_;
};

// Forward pass through the factored operator.
Matrix lr_propagate(const BackboneKind& kind, const Graph& g,
                    const LowRankDelta& delta, const Matrix& x,
                    const ModelState& params, bool normalize = true);

// Hyper-gradient of the summed validation loss with respect to the factors,
// including the degree terms of the normalization. Returns (dU, dV).
std::pair<Matrix, Matrix> lr_hypergrad(const BackboneKind& kind,
                                       const Graph& g,
                                       const LowRankDelta& delta,
                                       const std::vector<ModelState>& snapshots,
                                       const LabelSet& labels,
                                       const std::vector<int>& valid_set,
                                       bool normalize = true);

// ||sym(UV')||_F computed from r x r traces only:
//   ||sym||_F^2 = (tr(U'U V'V) + tr((U'V)^2)) / 2.
double sym_delta_fro_norm(const LowRankDelta& delta);

struct LrSanitizeResult {
  Graph graph;  // materialized effective adjacency, clamped to [0, 1]
  LowRankDelta delta;
  std::vector<StepAudit> audit;
};

// Unbudgeted variant: K-fold factor gradients, summed, applied as plain
// gradient descent on (U, V) for `steps` outer iterations. steps == 0
// returns the input graph untouched (factors at their initial values).
// Uses folds/backbone/train/master_seed from the sanitize config.
LrSanitizeResult lr_sanitize(const Graph& g, const LabelSet& labels,
                             const SanitizeConfig& san, const LrConfig& lr);

void save_delta(const LowRankDelta& delta, const std::filesystem::path& dir);
LowRankDelta load_delta(const std::filesystem::path& dir);

}  // namespace gasoline
