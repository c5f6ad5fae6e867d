#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace gasoline {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Anything that can stand in for the normalized adjacency during message
// passing: the explicit operator built from a graph, or the factored
// sparse-plus-low-rank operator. Implementations must be immutable once
// built; they are shared across fold workers.
class Propagator {
 public:
  virtual ~Propagator() = default;
  virtual int size() const = 0;                     // node count
  virtual Matrix mul(const Matrix& z) const = 0;    // A_hat * z
  virtual Matrix mul_t(const Matrix& z) const = 0;  // A_hat' * z
};

}  // namespace gasoline
