#include "gasoline/lowrank.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>

#include "gasoline/error.hpp"
#include "gasoline/parallel.hpp"
#include "gasoline/rng.hpp"

namespace gasoline {

namespace {

constexpr std::uint64_t kFactorInitTag = 0x10F4C7;

Matrix relu(const Matrix& z) { return z.cwiseMax(0.0); }

Matrix relu_mask(const Matrix& pre, const Matrix& grad) {
  return (pre.array() > 0.0)
      .select(grad, Matrix::Zero(grad.rows(), grad.cols()));
}

Matrix rowscale(const Vector& s, const Matrix& z) {
  return s.asDiagonal() * z;
}

// Reverse-mode context over a sequence of applications of one LrPropagator.
// mul_save mirrors LrPropagator::mul while retaining the inputs the backward
// pass needs; reverse() pops applications in LIFO order and accumulates the
// cotangents of the factors (and of the diagonal scale, routed through the
// effective degrees by finalize()). Every intermediate here is n x width or
// n x r; nothing n x n is ever formed.
class LrTape {
 public:
  explicit LrTape(const LrPropagator& op)
      : op_(op),
        du_(Matrix::Zero(op.u().rows(), op.u().cols())),
        dv_(Matrix::Zero(op.v().rows(), op.v().cols())),
        ds_(Vector::Zero(op.size())) {}

  Matrix mul_save(const Matrix& z) {
    if (op_.normalized()) {
      Matrix w = op_.apply_core(rowscale(op_.scale(), z));
      Matrix out = rowscale(op_.scale(), w);
      saved_.push_back({z, std::move(w)});
      return out;
    }
    Matrix w = op_.apply_core(z);
    saved_.push_back({z, w});
    return w;
  }

  // Cotangent of the matching mul_save output -> cotangent of its input.
  Matrix reverse(const Matrix& dy) {
    Frame f = std::move(saved_.back());
    saved_.pop_back();
    if (!op_.normalized()) {
      accumulate_pair(dy, f.z);
      return op_.apply_core(dy);
    }
    const Vector& s = op_.scale();
    Matrix p = rowscale(s, dy);   // cotangent of the core product N (s o z)
    Matrix q = rowscale(s, f.z);  // the core product's right operand
    accumulate_pair(p, q);
    // s enters twice: out = s o (N (s o z)).
    ds_ += (dy.array() * f.w.array()).rowwise().sum().matrix();
    Matrix np = op_.apply_core(p);
    ds_ += (np.array() * f.z.array()).rowwise().sum().matrix();
    return rowscale(s, np);
  }

  // The core cotangent is a sum of rank-width terms dN += p q'. N depends on
  // the factors through sym(UV'), so dU += (dN + dN') V / 2 and
  // dV += (dN + dN') U / 2, all kept factored.
  void accumulate_pair(const Matrix& p, const Matrix& q) {
    const Matrix& u = op_.u();
    const Matrix& v = op_.v();
    du_.noalias() += 0.5 * (p * (q.transpose() * v));
    du_.noalias() += 0.5 * (q * (p.transpose() * v));
    dv_.noalias() += 0.5 * (q * (p.transpose() * u));
    dv_.noalias() += 0.5 * (p * (q.transpose() * u));
  }

  // Routes the accumulated scale cotangent through
  //   s = max(deg, floor)^{-1/2},  deg = (A + I) 1 + (U (V'1) + V (U'1)) / 2,
  // where the floor gates the derivative exactly as in the forward pass.
  void finalize() {
    if (!op_.normalized()) return;
    const Vector& deg = op_.degree();
    const Vector& s = op_.scale();
    Vector ddeg(deg.size());
    for (Eigen::Index i = 0; i < deg.size(); ++i) {
      ddeg[i] = deg[i] > op_.degree_floor()
                    ? -0.5 * s[i] * s[i] * s[i] * ds_[i]
                    : 0.0;
    }
    const Matrix& u = op_.u();
    const Matrix& v = op_.v();
    Vector ones = Vector::Ones(op_.size());
    Eigen::RowVectorXd c1 = ones.transpose() * v;     // (V'1)'
    Eigen::RowVectorXd c2 = ones.transpose() * u;     // (U'1)'
    Eigen::RowVectorXd vdd = ddeg.transpose() * v;    // (V'ddeg)'
    Eigen::RowVectorXd udd = ddeg.transpose() * u;    // (U'ddeg)'
    du_.noalias() += 0.5 * (ddeg * c1);
    du_.noalias() += 0.5 * (ones * vdd);
    dv_.noalias() += 0.5 * (ddeg * c2);
    dv_.noalias() += 0.5 * (ones * udd);
  }

  bool drained() const { return saved_.empty(); }
  Matrix take_du() { return std::move(du_); }
  Matrix take_dv() { return std::move(dv_); }

 private:
  struct Frame {
    Matrix z;  // input of the application
    Matrix w;  // core product before the outer diagonal scaling
  };
  const LrPropagator& op_;
  Matrix du_, dv_;
  Vector ds_;
  std::vector<Frame> saved_;
};

// One snapshot's contribution: forward through the tape, then walk back.
void backprop_snapshot(LrTape& tape, const BackboneKind& kind, const Matrix& x,
                       const ModelState& st, const LabelSet& labels,
                       const std::vector<int>& valid_set) {
  switch (kind.kind) {
    case Backbone::Sgc: {
      const Matrix& w = st.weights[0];
      Matrix cur = x * w;
      for (int t = 0; t < kind.k; ++t) cur = tape.mul_save(cur);
      Matrix dz = ce_loss_grad(cur, labels, valid_set);
      for (int t = 0; t < kind.k; ++t) dz = tape.reverse(dz);
      break;
    }
    case Backbone::Gcn2: {
      const Matrix& w1 = st.weights[0];
      const Matrix& w2 = st.weights[1];
      Matrix pre = tape.mul_save(x * w1);
      Matrix logits = tape.mul_save(relu(pre) * w2);
      Matrix dlog = ce_loss_grad(logits, labels, valid_set);
      Matrix dr = tape.reverse(dlog) * w2.transpose();
      tape.reverse(relu_mask(pre, dr));  // cotangent into X W1 is unused
      break;
    }
    case Backbone::Appnp: {
      const Matrix& w1 = st.weights[0];
      const Matrix& w2 = st.weights[1];
      Matrix h = relu(x * w1) * w2;
      Matrix z = h;
      for (int t = 0; t < kind.k_prop; ++t) {
        z = (1.0 - kind.alpha) * tape.mul_save(z) + kind.alpha * h;
      }
      Matrix dz = ce_loss_grad(z, labels, valid_set);
      for (int t = 0; t < kind.k_prop; ++t) {
        Matrix scaled = (1.0 - kind.alpha) * dz;
        dz = tape.reverse(scaled);
      }
      break;
    }
  }
}

std::pair<Matrix, Matrix> hypergrad_on(const LrPropagator& op,
                                       const BackboneKind& kind,
                                       const Matrix& x,
                                       const std::vector<ModelState>& snapshots,
                                       const LabelSet& labels,
                                       const std::vector<int>& valid_set) {
  LrTape tape(op);
  for (const ModelState& st : snapshots) {
    std::size_t need = kind.kind == Backbone::Sgc ? 1u : 2u;
    if (st.weights.size() != need) {
      throw ConfigError("model snapshot has " +
                        std::to_string(st.weights.size()) +
                        " weight matrices, expected " + std::to_string(need));
    }
    backprop_snapshot(tape, kind, x, st, labels, valid_set);
    if (!tape.drained()) {
      throw ConfigError("internal error: unbalanced propagation tape");
    }
  }
  tape.finalize();
  return {tape.take_du(), tape.take_dv()};
}

void write_factor(const std::filesystem::path& file, const Matrix& m) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot write " + file.string());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << '\t';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
  if (!out.good()) throw DataError("failed writing " + file.string());
}

Matrix read_factor(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open " + file.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream fields(line);
    std::string tok;
    while (fields >> tok) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        throw DataError(file.string() + ":" + std::to_string(line_no) +
                        ": bad number '" + tok + "'");
      }
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw DataError(file.string() + ":" + std::to_string(line_no) +
                      ": inconsistent column count");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(file.string() + ": empty factor file");
  Matrix m(Eigen::Index(rows.size()), Eigen::Index(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      m(Eigen::Index(i), Eigen::Index(j)) = rows[i][j];
    }
  }
  return m;
}

}  // namespace

void LrConfig::validate() const {
  if (rank < 1) throw ConfigError("low-rank rank must be at least 1");
  if (!(step_size > 0.0)) {
    throw ConfigError("low-rank step size must be positive");
  }
  if (steps < 0) throw ConfigError("low-rank step count cannot be negative");
  if (!(init_scale > 0.0)) {
    throw ConfigError("low-rank init scale must be positive");
  }
}

LrPropagator::LrPropagator(const Graph& g, const LowRankDelta& delta,
                           bool normalize, double degree_floor)
    : n_(g.n), u_(delta.u), v_(delta.v), normalize_(normalize),
      floor_(degree_floor) {
  if (u_.rows() != n_ || v_.rows() != n_) {
    throw DataError("factor row count does not match the node count");
  }
  if (u_.cols() != v_.cols() || u_.cols() < 1) {
    throw DataError("factor matrices must share a positive column count");
  }
  base_ = g.sparse_adjacency(/*add_self_loops=*/normalize_);
  if (!normalize_) return;
  // deg = (A + I) 1 + (U (V'1) + V (U'1)) / 2, the row sums of the effective
  // self-looped adjacency.
  Vector base_deg = base_ * Vector::Ones(n_);
  Vector c1 = v_.transpose() * Vector::Ones(n_);
  Vector c2 = u_.transpose() * Vector::Ones(n_);
  deg_ = base_deg + 0.5 * (u_ * c1) + 0.5 * (v_ * c2);
  s_ = Vector(n_);
  for (int i = 0; i < n_; ++i) {
    if (deg_[i] < 0.0) {
      throw DataError("effective degree of node " + std::to_string(i) +
                      " is negative (" + std::to_string(deg_[i]) +
                      "); the low-rank edit left the normalization undefined");
    }
    s_[i] = 1.0 / std::sqrt(std::max(deg_[i], floor_));
  }
}

Matrix LrPropagator::apply_core(const Matrix& z) const {
  Matrix out = base_ * z;
  out.noalias() += 0.5 * (u_ * (v_.transpose() * z));
  out.noalias() += 0.5 * (v_ * (u_.transpose() * z));
  return out;
}

Matrix LrPropagator::mul(const Matrix& z) const {
  if (!normalize_) return apply_core(z);
  Matrix w = apply_core(rowscale(s_, z));
  return rowscale(s_, w);
}

Matrix lr_propagate(const BackboneKind& kind, const Graph& g,
                    const LowRankDelta& delta, const Matrix& x,
                    const ModelState& params, bool normalize) {
  kind.validate();
  LrPropagator op(g, delta, normalize);
  return forward(kind, op, x, params);
}

std::pair<Matrix, Matrix> lr_hypergrad(const BackboneKind& kind,
                                       const Graph& g,
                                       const LowRankDelta& delta,
                                       const std::vector<ModelState>& snapshots,
                                       const LabelSet& labels,
                                       const std::vector<int>& valid_set,
                                       bool normalize) {
  kind.validate();
  if (snapshots.empty()) throw DataError("hyper-gradient needs a snapshot");
  LrPropagator op(g, delta, normalize);
  return hypergrad_on(op, kind, g.features, snapshots, labels, valid_set);
}

double sym_delta_fro_norm(const LowRankDelta& delta) {
  // ||sym(UV')||_F^2 = (tr(U'U V'V) + tr((U'V)^2)) / 2, all r x r products.
  Matrix utu = delta.u.transpose() * delta.u;
  Matrix vtv = delta.v.transpose() * delta.v;
  Matrix utv = delta.u.transpose() * delta.v;
  double sq = 0.5 * ((utu * vtv).trace() + (utv * utv).trace());
  return std::sqrt(std::max(0.0, sq));
}

LrSanitizeResult lr_sanitize(const Graph& g, const LabelSet& labels,
                             const SanitizeConfig& san, const LrConfig& lr) {
  g.validate();
  labels.validate(g.n);
  lr.validate();
  san.backbone.validate();
  san.train.validate();
  if (san.folds < 2) throw ConfigError("fold count must be at least 2");

  const int n = g.n;
  LowRankDelta delta{Matrix(n, lr.rank), Matrix(n, lr.rank)};
  {
    // Row-major fill, U then V, from one derived stream. The gradient at
    // U = V = 0 vanishes identically, so the factors must start off-zero.
    SplitMix64 rng(derive_seed(san.master_seed, kFactorInitTag));
    for (int i = 0; i < n; ++i) {
      for (int r = 0; r < lr.rank; ++r) {
        delta.u(i, r) = rng.uniform(-lr.init_scale, lr.init_scale);
      }
    }
    for (int i = 0; i < n; ++i) {
      for (int r = 0; r < lr.rank; ++r) {
        delta.v(i, r) = rng.uniform(-lr.init_scale, lr.init_scale);
      }
    }
  }

  std::vector<StepAudit> audit;
  if (lr.steps == 0) return {g, std::move(delta), std::move(audit)};

  FoldPlan plan =
      make_folds(labels, san.folds, derive_seed(san.master_seed, kFoldSeedTag));
  const int folds = plan.count();
  const Matrix& x = g.features;

  for (int step = 1; step <= lr.steps; ++step) {
    auto t0 = std::chrono::steady_clock::now();
    LrPropagator op(g, delta, lr.normalize);

    std::vector<double> fold_losses(static_cast<std::size_t>(folds), 0.0);
    std::vector<Matrix> du(static_cast<std::size_t>(folds));
    std::vector<Matrix> dv(static_cast<std::size_t>(folds));
    parallel_for(folds, [&](int k) {
      TrainConfig tc = san.train;
      tc.init_seed =
          derive_seed(san.master_seed, std::uint64_t(step), std::uint64_t(k));
      TrainResult tr =
          train_dynamic(san.backbone, op, x, labels, plan.train_of(k), tc);
      fold_losses[std::size_t(k)] = ce_loss(
          forward(san.backbone, op, x, tr.final_state), labels, plan.valid_of(k));
      auto grads = hypergrad_on(op, san.backbone, x, tr.snapshots, labels,
                                plan.valid_of(k));
      du[std::size_t(k)] = std::move(grads.first);
      dv[std::size_t(k)] = std::move(grads.second);
    });

    Matrix du_sum = Matrix::Zero(n, lr.rank);
    Matrix dv_sum = Matrix::Zero(n, lr.rank);
    for (int k = 0; k < folds; ++k) {
      du_sum += du[std::size_t(k)];
      dv_sum += dv[std::size_t(k)];
    }

    delta.u -= lr.step_size * du_sum;
    delta.v -= lr.step_size * dv_sum;
    if (!delta.u.allFinite() || !delta.v.allFinite()) {
      throw DivergenceError(step, "low-rank factors left the finite range at step " +
                                      std::to_string(step));
    }

    StepAudit rec;
    rec.step = step;
    rec.fold_losses = std::move(fold_losses);
    rec.delta_norm = sym_delta_fro_norm(delta);
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    audit.push_back(std::move(rec));
  }

  // Materialize the effective adjacency once, at the very end. The additive
  // edit carries a (small) diagonal; the graph form has none, so the
  // diagonal is dropped here, and entries are clamped to the legal range.
  Matrix m = delta.u * delta.v.transpose();
  Matrix eff = 0.5 * (m + m.transpose());
  eff += g.dense_adjacency();
  eff = eff.cwiseMax(0.0).cwiseMin(1.0);
  eff.diagonal().setZero();
  Graph out = graph_from_dense(eff, g.features);
  return {std::move(out), std::move(delta), std::move(audit)};
}

void save_delta(const LowRankDelta& delta, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_factor(dir / "U.tsv", delta.u);
  write_factor(dir / "V.tsv", delta.v);
}

LowRankDelta load_delta(const std::filesystem::path& dir) {
  LowRankDelta delta;
  delta.u = read_factor(dir / "U.tsv");
  delta.v = read_factor(dir / "V.tsv");
  if (delta.u.rows() != delta.v.rows() || delta.u.cols() != delta.v.cols()) {
    throw DataError("U.tsv and V.tsv disagree on shape");
  }
  return delta;
}

}  // namespace gasoline
