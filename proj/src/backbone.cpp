#include "gasoline/backbone.hpp"

#include <cmath>
#include <string>

#include "gasoline/error.hpp"
#include "gasoline/rng.hpp"

namespace gasoline {

BackboneKind BackboneKind::sgc(int k) {
  BackboneKind b;
  b.kind = Backbone::Sgc;
  b.k = k;
  return b;
}

BackboneKind BackboneKind::gcn2(int hidden) {
  BackboneKind b;
  b.kind = Backbone::Gcn2;
  b.hidden = hidden;
  return b;
}

BackboneKind BackboneKind::appnp(double alpha, int k_prop, int hidden) {
  BackboneKind b;
  b.kind = Backbone::Appnp;
  b.alpha = alpha;
  b.k_prop = k_prop;
  b.hidden = hidden;
  return b;
}

void BackboneKind::validate() const {
  switch (kind) {
    case Backbone::Sgc:
      if (k < 1) throw ConfigError("propagation order must be >= 1");
      break;
    case Backbone::Gcn2:
      if (hidden < 1) throw ConfigError("hidden width must be >= 1");
      break;
    case Backbone::Appnp:
      if (hidden < 1) throw ConfigError("hidden width must be >= 1");
      if (k_prop < 1) throw ConfigError("propagation steps must be >= 1");
      if (alpha < 0.0 || alpha > 1.0) {
        throw ConfigError("teleport probability must lie in [0, 1]");
      }
      break;
  }
}

void TrainConfig::validate() const {
  if (iterations < 1) throw ConfigError("training needs at least one step");
  if (truncate_at < 0 || truncate_at >= iterations) {
    throw ConfigError("truncation step must lie in [0, iterations)");
  }
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
}

namespace {

Matrix glorot(int rows, int cols, SplitMix64& rng) {
  const double bound = std::sqrt(6.0 / double(rows + cols));
  Matrix w(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      w(i, j) = rng.uniform(-bound, bound);
    }
  }
  return w;
}

void check_shapes(const BackboneKind& kind, const Matrix& x,
                  const ModelState& params) {
  const int d = int(x.cols());
  if (kind.kind == Backbone::Sgc) {
    if (params.weights.size() != 1 || params.weights[0].rows() != d) {
      throw DataError("parameter shapes do not match backbone/input");
    }
  } else {
    if (params.weights.size() != 2 || params.weights[0].rows() != d ||
        params.weights[0].cols() != kind.hidden ||
        params.weights[1].rows() != kind.hidden) {
      throw DataError("parameter shapes do not match backbone/input");
    }
  }
}

inline Matrix relu(const Matrix& m) { return m.cwiseMax(0.0); }

inline Matrix relu_mask(const Matrix& pre, const Matrix& grad) {
  return (pre.array() > 0.0).select(grad, Matrix::Zero(grad.rows(), grad.cols()));
}

}  // namespace

ModelState init_params(const BackboneKind& kind, int d, int c,
                       std::uint64_t seed) {
  kind.validate();
  if (d < 1 || c < 2) throw ConfigError("need d >= 1 and c >= 2");
  SplitMix64 rng(seed);
  ModelState st;
  if (kind.kind == Backbone::Sgc) {
    st.weights.push_back(glorot(d, c, rng));
  } else {
    st.weights.push_back(glorot(d, kind.hidden, rng));
    st.weights.push_back(glorot(kind.hidden, c, rng));
  }
  return st;
}

Matrix forward(const BackboneKind& kind, const Propagator& adj,
               const Matrix& x, const ModelState& params) {
  kind.validate();
  check_shapes(kind, x, params);
  if (int(x.rows()) != adj.size()) {
    throw DataError("feature rows do not match adjacency size");
  }
  switch (kind.kind) {
    case Backbone::Sgc: {
      Matrix z = x * params.weights[0];
      for (int t = 0; t < kind.k; ++t) z = adj.mul(z);
      return z;
    }
    case Backbone::Gcn2: {
      Matrix r = relu(adj.mul(x * params.weights[0]));
      return adj.mul(r * params.weights[1]);
    }
    case Backbone::Appnp: {
      Matrix h = relu(x * params.weights[0]) * params.weights[1];
      Matrix z = h;
      for (int s = 0; s < kind.k_prop; ++s) {
        z = (1.0 - kind.alpha) * adj.mul(z) + kind.alpha * h;
      }
      return z;
    }
  }
  throw ConfigError("unknown backbone");
}

double ce_loss(const Matrix& logits, const LabelSet& labels,
               const std::vector<int>& nodes) {
  if (nodes.empty()) throw DataError("loss over an empty node set");
  const int c = int(logits.cols());
  double total = 0.0;
  for (int i : nodes) {
    if (i < 0 || i >= int(logits.rows())) {
      throw DataError("loss node out of range");
    }
    int y = labels.label[std::size_t(i)];
    if (y == kUnlabeled) throw DataError("loss node has no label");
    if (y >= c) throw DataError("label exceeds logit width");
    const double m = logits.row(i).maxCoeff();
    double sum = 0.0;
    for (int j = 0; j < c; ++j) sum += std::exp(logits(i, j) - m);
    total += std::log(sum) - (logits(i, y) - m);
  }
  return total / double(nodes.size());
}

Matrix ce_loss_grad(const Matrix& logits, const LabelSet& labels,
                    const std::vector<int>& nodes) {
  if (nodes.empty()) throw DataError("loss over an empty node set");
  const int c = int(logits.cols());
  Matrix g = Matrix::Zero(logits.rows(), c);
  const double inv = 1.0 / double(nodes.size());
  for (int i : nodes) {
    int y = labels.label[std::size_t(i)];
    if (y == kUnlabeled) throw DataError("loss node has no label");
    const double m = logits.row(i).maxCoeff();
    double sum = 0.0;
    for (int j = 0; j < c; ++j) sum += std::exp(logits(i, j) - m);
    for (int j = 0; j < c; ++j) {
      g(i, j) = (std::exp(logits(i, j) - m) / sum - (j == y ? 1.0 : 0.0)) * inv;
    }
  }
  return g;
}

namespace {

// Gradient of [ce_loss(train) + wd * sum ||W||_F^2] with respect to the
// weights, written right-to-left so no intermediate ever exceeds the hidden
// width. Returns the objective value through `loss_out`.
std::vector<Matrix> param_grads(const BackboneKind& kind, const Propagator& adj,
                                const Matrix& x, const LabelSet& labels,
                                const std::vector<int>& train_set,
                                const ModelState& st, double wd,
                                double* loss_out) {
  std::vector<Matrix> grads;
  double reg = 0.0;
  for (const Matrix& w : st.weights) reg += w.squaredNorm();
  switch (kind.kind) {
    case Backbone::Sgc: {
      const Matrix& w = st.weights[0];
      Matrix z = x * w;
      for (int t = 0; t < kind.k; ++t) z = adj.mul(z);
      *loss_out = ce_loss(z, labels, train_set) + wd * reg;
      Matrix dz = ce_loss_grad(z, labels, train_set);
      for (int t = 0; t < kind.k; ++t) dz = adj.mul_t(dz);
      grads.push_back(x.transpose() * dz + 2.0 * wd * w);
      break;
    }
    case Backbone::Gcn2: {
      const Matrix& w1 = st.weights[0];
      const Matrix& w2 = st.weights[1];
      Matrix h1 = adj.mul(x * w1);
      Matrix r = relu(h1);
      Matrix logits = adj.mul(r * w2);
      *loss_out = ce_loss(logits, labels, train_set) + wd * reg;
      Matrix dlog = ce_loss_grad(logits, labels, train_set);
      Matrix dc2 = adj.mul_t(dlog);
      Matrix dr = dc2 * w2.transpose();
      Matrix dh1 = relu_mask(h1, dr);
      Matrix db1 = adj.mul_t(dh1);
      grads.push_back(x.transpose() * db1 + 2.0 * wd * w1);
      grads.push_back(r.transpose() * dc2 + 2.0 * wd * w2);
      break;
    }
    case Backbone::Appnp: {
      const Matrix& w1 = st.weights[0];
      const Matrix& w2 = st.weights[1];
      const double a = kind.alpha;
      Matrix q = x * w1;
      Matrix g = relu(q);
      Matrix h = g * w2;
      Matrix z = h;
      for (int s = 0; s < kind.k_prop; ++s) {
        z = (1.0 - a) * adj.mul(z) + a * h;
      }
      *loss_out = ce_loss(z, labels, train_set) + wd * reg;
      Matrix dz = ce_loss_grad(z, labels, train_set);
      Matrix dh = Matrix::Zero(h.rows(), h.cols());
      for (int s = 0; s < kind.k_prop; ++s) {
        dh += a * dz;
        dz = (1.0 - a) * adj.mul_t(dz);
      }
      dh += dz;
      Matrix dg = dh * w2.transpose();
      Matrix dq = relu_mask(q, dg);
      grads.push_back(x.transpose() * dq + 2.0 * wd * w1);
      grads.push_back(g.transpose() * dh + 2.0 * wd * w2);
      break;
    }
  }
  return grads;
}

}  // namespace

TrainResult train_dynamic(const BackboneKind& kind, const Propagator& adj,
                          const Matrix& x, const LabelSet& labels,
                          const std::vector<int>& train_set,
                          const TrainConfig& cfg) {
  kind.validate();
  cfg.validate();
  if (train_set.empty()) throw DataError("empty training set");
  ModelState st = init_params(kind, int(x.cols()), labels.classes,
                              cfg.init_seed);

  std::vector<Matrix> m1, m2;  // Adam moments
  if (cfg.optimizer == Optimizer::Adam) {
    for (const Matrix& w : st.weights) {
      m1.push_back(Matrix::Zero(w.rows(), w.cols()));
      m2.push_back(Matrix::Zero(w.rows(), w.cols()));
    }
  }
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  TrainResult result;
  result.train_loss.reserve(std::size_t(cfg.iterations));
  for (int t = 1; t <= cfg.iterations; ++t) {
    double loss = 0.0;
    std::vector<Matrix> grads = param_grads(kind, adj, x, labels, train_set,
                                            st, cfg.weight_decay, &loss);
    if (!std::isfinite(loss)) {
      throw DivergenceError(t, "non-finite training loss at step " +
                                   std::to_string(t));
    }
    result.train_loss.push_back(loss);
    for (std::size_t l = 0; l < st.weights.size(); ++l) {
      if (cfg.optimizer == Optimizer::Adam) {
        m1[l] = beta1 * m1[l] + (1.0 - beta1) * grads[l];
        m2[l] = beta2 * m2[l].array() +
                (1.0 - beta2) * grads[l].array().square();
        const double c1 = 1.0 - std::pow(beta1, t);
        const double c2 = 1.0 - std::pow(beta2, t);
        st.weights[l].array() -=
            cfg.learning_rate * (m1[l].array() / c1) /
            ((m2[l].array() / c2).sqrt() + eps);
      } else {
        st.weights[l] -= cfg.learning_rate * grads[l];
      }
    }
    st.step = t;
    if (t > cfg.truncate_at ||
        (cfg.keep_boundary_snapshot && t == cfg.truncate_at)) {
      result.snapshots.push_back(st);
    }
  }
  // Guard the returned snapshots: a final update that exploded would
  // otherwise surface later as silent NaN hyper-gradients.
  double final_loss =
      ce_loss(forward(kind, adj, x, st), labels, train_set);
  if (!std::isfinite(final_loss)) {
    throw DivergenceError(cfg.iterations, "non-finite loss after final step");
  }
  result.final_state = std::move(st);
  return result;
}

namespace {

// Reverse pass through A_hat = diag(s) (A + I) diag(s) with
// s = max(rowsum(A + I), floor)^{-1/2}. Entries of A are treated as
// independent scalars, so the result is the full matrix of partials,
// degree chain included.
Matrix normalization_backward(const Matrix& d_ahat, const Matrix& raw,
                              const NormAdj& norm, double degree_floor) {
  const int n = int(raw.rows());
  const Vector& s = norm.scale();
  const Vector& deg = norm.degree();
  Vector ds = Vector::Zero(n);
  const SparseMatrix& ahat = norm.matrix();
  for (int row = 0; row < ahat.outerSize(); ++row) {
    for (SparseMatrix::InnerIterator it(ahat, row); it; ++it) {
      const int i = int(it.row());
      const int j = int(it.col());
      const double m = raw(i, j) + (i == j ? 1.0 : 0.0);
      if (m == 0.0) continue;
      const double g = d_ahat(i, j) * m;
      ds[i] += g * s[j];
      ds[j] += g * s[i];
    }
  }
  Vector ddeg(n);
  for (int i = 0; i < n; ++i) {
    ddeg[i] = deg[i] > degree_floor ? -0.5 * s[i] * s[i] * s[i] * ds[i] : 0.0;
  }
  Matrix da = d_ahat.cwiseProduct(s * s.transpose());
  da.colwise() += ddeg;
  return da;
}

}  // namespace

GraphGrad hypergrad_dense(const BackboneKind& kind, const Matrix& raw,
                          const Matrix& x,
                          const std::vector<ModelState>& snapshots,
                          const LabelSet& labels,
                          const std::vector<int>& valid_set) {
  kind.validate();
  if (snapshots.empty()) throw DataError("hyper-gradient needs a snapshot");
  const int n = int(raw.rows());
  const double floor = 1e-6;
  const NormAdj norm = normalize_raw(raw, floor);
  const SparseMatrix& ahat = norm.matrix();
  SparseMatrix ahat_t = SparseMatrix(ahat.transpose());

  Matrix d_ahat = Matrix::Zero(n, n);
  Matrix dx = Matrix::Zero(x.rows(), x.cols());

  for (const ModelState& st : snapshots) {
    check_shapes(kind, x, st);
    // One buffer per snapshot, folded into the accumulator in a single add,
    // so that repeating a snapshot doubles its contribution bit for bit.
    Matrix d_ahat_s = Matrix::Zero(n, n);
    switch (kind.kind) {
      case Backbone::Sgc: {
        const Matrix& w = st.weights[0];
        std::vector<Matrix> layer;
        layer.push_back(x * w);
        for (int t = 0; t < kind.k; ++t) layer.push_back(ahat * layer.back());
        Matrix dz = ce_loss_grad(layer.back(), labels, valid_set);
        for (int t = kind.k; t >= 1; --t) {
          d_ahat_s.noalias() += dz * layer[std::size_t(t - 1)].transpose();
          dz = ahat_t * dz;
        }
        dx.noalias() += dz * w.transpose();
        break;
      }
      case Backbone::Gcn2: {
        const Matrix& w1 = st.weights[0];
        const Matrix& w2 = st.weights[1];
        Matrix b1 = x * w1;
        Matrix h1 = ahat * b1;
        Matrix r = relu(h1);
        Matrix c2 = r * w2;
        Matrix logits = ahat * c2;
        Matrix dlog = ce_loss_grad(logits, labels, valid_set);
        d_ahat_s.noalias() += dlog * c2.transpose();
        Matrix dc2 = ahat_t * dlog;
        Matrix dr = dc2 * w2.transpose();
        Matrix dh1 = relu_mask(h1, dr);
        d_ahat_s.noalias() += dh1 * b1.transpose();
        Matrix db1 = ahat_t * dh1;
        dx.noalias() += db1 * w1.transpose();
        break;
      }
      case Backbone::Appnp: {
        const Matrix& w1 = st.weights[0];
        const Matrix& w2 = st.weights[1];
        const double a = kind.alpha;
        Matrix q = x * w1;
        Matrix g = relu(q);
        Matrix h = g * w2;
        std::vector<Matrix> zs;
        zs.push_back(h);
        for (int s2 = 0; s2 < kind.k_prop; ++s2) {
          zs.push_back((1.0 - a) * (ahat * zs.back()) + a * h);
        }
        Matrix dz = ce_loss_grad(zs.back(), labels, valid_set);
        Matrix dh = Matrix::Zero(h.rows(), h.cols());
        for (int s2 = kind.k_prop; s2 >= 1; --s2) {
          d_ahat_s.noalias() +=
              (1.0 - a) * (dz * zs[std::size_t(s2 - 1)].transpose());
          dh += a * dz;
          dz = (1.0 - a) * (ahat_t * dz);
        }
        dh += dz;
        Matrix dg = dh * w2.transpose();
        Matrix dq = relu_mask(q, dg);
        dx.noalias() += dq * w1.transpose();
        break;
      }
    }
    d_ahat += d_ahat_s;
  }

  GraphGrad out;
  out.adjacency = normalization_backward(d_ahat, raw, norm, floor);
  out.feature = std::move(dx);
  return out;
}

GraphGrad graph_hypergrad(const BackboneKind& kind, const Graph& g,
                          const std::vector<ModelState>& snapshots,
                          const LabelSet& labels,
                          const std::vector<int>& valid_set) {
  return hypergrad_dense(kind, g.dense_adjacency(), g.features, snapshots,
                         labels, valid_set);
}

}  // namespace gasoline
