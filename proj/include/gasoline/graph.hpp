#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gasoline/types.hpp"

namespace gasoline {

constexpr int kUnlabeled = -1;

// Undirected graph with optional edge weights and dense node features.
// Edges are stored as unordered pairs (i < j), sorted lexicographically.
// Weights, when present, align with `edges` and live in (0, 1]; pairs whose
// weight reaches 0 are dropped entirely.
struct Graph {
  int n = 0;
  std::vector<std::pair<int, int>> edges;
  std::optional<std::vector<double>> weights;
  Matrix features;  // n x d

  int num_edges() const { return int(edges.size()); }
  int dim() const { return int(features.cols()); }
  bool weighted() const { return weights.has_value(); }
  double weight_at(std::size_t e) const {
    return weights ? (*weights)[e] : 1.0;
  }

  Matrix dense_adjacency() const;
  // CSR adjacency; optionally with unit self loops added.
  SparseMatrix sparse_adjacency(bool add_self_loops = false) const;

  // Throws DataError on any structural invariant violation.
  void validate() const;
};

// Collapses a dense symmetric adjacency (zero diagonal, entries in [0, 1])
// back into edge-list form. Emits weights unless every kept entry is 1.
Graph graph_from_dense(const Matrix& adjacency, Matrix features);

bool structurally_equal(const Graph& a, const Graph& b);

// Node labels plus the two named node sets: the sanitation-time labeled pool
// Z (`labeled_set`) and the held-out evaluation set W (`test_set`).
struct LabelSet {
  int classes = 0;
  std::vector<int> label;  // per node; kUnlabeled where absent
  std::vector<int> labeled_set;
  std::vector<int> test_set;

  bool is_labeled(int v) const { return label[std::size_t(v)] != kUnlabeled; }
  void validate(int n) const;
};

// K-fold rotation over the labeled pool. Fold k serves as the held-out
// validation slice while the remaining folds train.
struct FoldPlan {
  std::vector<std::vector<int>> folds;
  std::uint64_t seed = 0;

  int count() const { return int(folds.size()); }
  const std::vector<int>& valid_of(int k) const { return folds[std::size_t(k)]; }
  std::vector<int> train_of(int k) const;
};

// Shuffles Z with a seeded splitmix64 Fisher-Yates pass, then slices it into
// k contiguous folds whose sizes differ by at most one.
FoldPlan make_folds(const LabelSet& labels, int k, std::uint64_t seed);

// Symmetrically normalized adjacency with self loops:
//   A_hat = D^{-1/2} (A + I) D^{-1/2},  D = diag((A + I) 1).
// Stored sparse. Mirrored entries are computed from the same commutative
// product s_i * s_j, so symmetry is exact at the bit level.
class NormAdj final : public Propagator {
 public:
  NormAdj() = default;
  NormAdj(SparseMatrix ahat, Vector scale, Vector degree)
      : ahat_(std::move(ahat)), scale_(std::move(scale)),
        degree_(std::move(degree)) {}

  int size() const override { return int(ahat_.rows()); }
  Matrix mul(const Matrix& z) const override { return ahat_ * z; }
  Matrix mul_t(const Matrix& z) const override {
    return ahat_.transpose() * z;
  }

  const SparseMatrix& matrix() const { return ahat_; }
  const Vector& scale() const { return scale_; }    // s = deg^{-1/2}
  const Vector& degree() const { return degree_; }  // deg = (A + I) 1
  Matrix dense() const { return Matrix(ahat_); }

 private:
  SparseMatrix ahat_;
  Vector scale_;
  Vector degree_;
};

NormAdj normalize_adjacency(const Graph& g);

// Same normalization applied to an arbitrary dense matrix treated as a raw
// adjacency (no symmetry assumed; used by gradient checks and the low-rank
// equivalence oracle). Row degrees are floored at `degree_floor` before the
// inverse square root.
NormAdj normalize_raw(const Matrix& raw_adjacency, double degree_floor = 1e-6);

// Directory layout: edges.tsv (+ optional weight column), labels.tsv,
// optional features.tsv (absent -> identity features), optional splits.tsv.
std::pair<Graph, LabelSet> load_graph(const std::filesystem::path& dir);
void save_graph(const Graph& g, const LabelSet& labels,
                const std::filesystem::path& dir);

// Writes the entry-level difference between `before` and `after` as
// tab-separated lines "A i j old new" / "X i k old new".
void write_delta(const std::filesystem::path& file, const Graph& before,
                 const Graph& after);

// Shortest round-trip decimal formatting used by every writer, so that
// save -> load reproduces doubles exactly.
std::string format_double(double v);

}  // namespace gasoline
