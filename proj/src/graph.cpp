#include "gasoline/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "gasoline/error.hpp"
#include "gasoline/rng.hpp"

namespace gasoline {

namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::vector<std::string> read_lines(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open " + file.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == '\t' || line[i] == ' ')) ++i;
    std::size_t start = i;
    while (i < line.size() && line[i] != '\t' && line[i] != ' ') ++i;
    if (i > start) fields.push_back(line.substr(start, i - start));
  }
  return fields;
}

[[noreturn]] void malformed(const fs::path& file, std::size_t lineno,
                            const std::string& why) {
  throw DataError(file.string() + ":" + std::to_string(lineno) + ": " + why);
}

long parse_int(const std::string& s, const fs::path& file, std::size_t lineno) {
  long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    malformed(file, lineno, "expected integer, got '" + s + "'");
  }
  return v;
}

double parse_real(const std::string& s, const fs::path& file,
                  std::size_t lineno) {
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    malformed(file, lineno, "expected real number, got '" + s + "'");
  }
  return v;
}

std::ofstream open_out(const fs::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot write " + file.string());
  return out;
}

}  // namespace

Matrix Graph::dense_adjacency() const {
  Matrix a = Matrix::Zero(n, n);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    double w = weight_at(e);
    a(edges[e].first, edges[e].second) = w;
    a(edges[e].second, edges[e].first) = w;
  }
  return a;
}

SparseMatrix Graph::sparse_adjacency(bool add_self_loops) const {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(edges.size() * 2 + (add_self_loops ? std::size_t(n) : 0));
  for (std::size_t e = 0; e < edges.size(); ++e) {
    double w = weight_at(e);
    trip.emplace_back(edges[e].first, edges[e].second, w);
    trip.emplace_back(edges[e].second, edges[e].first, w);
  }
  if (add_self_loops) {
    for (int i = 0; i < n; ++i) trip.emplace_back(i, i, 1.0);
  }
  SparseMatrix a(n, n);
  a.setFromTriplets(trip.begin(), trip.end());
  return a;
}

void Graph::validate() const {
  if (n < 1) throw DataError("graph must have at least one node");
  if (weights && weights->size() != edges.size()) {
    throw DataError("weight list does not align with edge list");
  }
  for (std::size_t e = 0; e < edges.size(); ++e) {
    auto [i, j] = edges[e];
    if (i < 0 || j < 0 || i >= n || j >= n) {
      throw DataError("edge endpoint out of range");
    }
    if (i == j) throw DataError("self-loop stored in edge list");
    if (i > j) throw DataError("edge pair not stored with i < j");
    if (e > 0 && !(edges[e - 1] < edges[e])) {
      throw DataError("edge list not sorted or contains duplicates");
    }
    double w = weight_at(e);
    if (!(w > 0.0) || w > 1.0) {
      throw DataError("edge weight outside (0, 1]");
    }
  }
  if (int(features.rows()) != n) {
    throw DataError("feature row count does not match node count");
  }
}

Graph graph_from_dense(const Matrix& adjacency, Matrix features) {
  const int n = int(adjacency.rows());
  if (adjacency.cols() != n) throw DataError("adjacency must be square");
  Graph g;
  g.n = n;
  g.features = std::move(features);
  bool any_weighted = false;
  std::vector<double> ws;
  for (int i = 0; i < n; ++i) {
    if (adjacency(i, i) != 0.0) {
      throw DataError("dense adjacency has nonzero diagonal");
    }
    for (int j = i + 1; j < n; ++j) {
      double w = adjacency(i, j);
      if (w != adjacency(j, i)) {
        throw DataError("dense adjacency is not symmetric");
      }
      if (w == 0.0) continue;
      if (w < 0.0 || w > 1.0) {
        throw DataError("dense adjacency entry outside [0, 1]");
      }
      g.edges.emplace_back(i, j);
      ws.push_back(w);
      if (w != 1.0) any_weighted = true;
    }
  }
  if (any_weighted) g.weights = std::move(ws);
  return g;
}

bool structurally_equal(const Graph& a, const Graph& b) {
  if (a.n != b.n || a.edges != b.edges) return false;
  if (a.weighted() != b.weighted()) return false;
  if (a.weighted() && *a.weights != *b.weights) return false;
  if (a.features.rows() != b.features.rows() ||
      a.features.cols() != b.features.cols()) {
    return false;
  }
  return a.features == b.features;
}

void LabelSet::validate(int n) const {
  if (classes < 2) throw DataError("label set needs at least two classes");
  if (int(label.size()) != n) {
    throw DataError("label count does not match node count");
  }
  for (int v : label) {
    if (v != kUnlabeled && (v < 0 || v >= classes)) {
      throw DataError("label value outside {0..classes-1}");
    }
  }
  std::set<int> z(labeled_set.begin(), labeled_set.end());
  std::set<int> w(test_set.begin(), test_set.end());
  if (z.size() != labeled_set.size() || w.size() != test_set.size()) {
    throw DataError("duplicate node in labeled or test set");
  }
  for (int v : labeled_set) {
    if (v < 0 || v >= n) throw DataError("labeled-set node out of range");
    if (!is_labeled(v)) throw DataError("labeled-set node has no label");
    if (w.count(v)) throw DataError("node assigned to both pools");
  }
  for (int v : test_set) {
    if (v < 0 || v >= n) throw DataError("test-set node out of range");
    if (!is_labeled(v)) throw DataError("test-set node has no label");
  }
  if (!labeled_set.empty()) {
    std::vector<bool> seen(std::size_t(classes), false);
    for (int v : labeled_set) seen[std::size_t(label[std::size_t(v)])] = true;
    for (int c = 0; c < classes; ++c) {
      if (!seen[std::size_t(c)]) {
        throw DataError("class " + std::to_string(c) +
                        " missing from labeled pool");
      }
    }
  }
}

std::vector<int> FoldPlan::train_of(int k) const {
  std::vector<int> out;
  for (int f = 0; f < count(); ++f) {
    if (f == k) continue;
    out.insert(out.end(), folds[std::size_t(f)].begin(),
               folds[std::size_t(f)].end());
  }
  return out;
}

FoldPlan make_folds(const LabelSet& labels, int k, std::uint64_t seed) {
  const int z = int(labels.labeled_set.size());
  if (k < 2) throw ConfigError("fold count must be at least 2");
  if (k > z) {
    throw ConfigError("fold count " + std::to_string(k) +
                      " exceeds labeled pool size " + std::to_string(z));
  }
  std::vector<int> pool = labels.labeled_set;
  SplitMix64 rng(seed);
  rng.shuffle(pool);
  FoldPlan plan;
  plan.seed = seed;
  plan.folds.resize(std::size_t(k));
  const int base = z / k;
  const int extra = z % k;
  std::size_t at = 0;
  for (int f = 0; f < k; ++f) {
    int len = base + (f < extra ? 1 : 0);
    plan.folds[std::size_t(f)].assign(pool.begin() + long(at),
                                      pool.begin() + long(at) + len);
    at += std::size_t(len);
  }
  return plan;
}

NormAdj normalize_adjacency(const Graph& g) {
  Vector deg = Vector::Ones(g.n);  // self loop contributes one to each row
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    double w = g.weight_at(e);
    deg[g.edges[e].first] += w;
    deg[g.edges[e].second] += w;
  }
  Vector s(g.n);
  for (int i = 0; i < g.n; ++i) s[i] = 1.0 / std::sqrt(std::max(deg[i], 1e-6));
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(g.edges.size() * 2 + std::size_t(g.n));
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    auto [i, j] = g.edges[e];
    double v = (s[i] * s[j]) * g.weight_at(e);
    trip.emplace_back(i, j, v);
    trip.emplace_back(j, i, v);
  }
  for (int i = 0; i < g.n; ++i) trip.emplace_back(i, i, s[i] * s[i]);
  SparseMatrix ahat(g.n, g.n);
  ahat.setFromTriplets(trip.begin(), trip.end());
  return NormAdj(std::move(ahat), std::move(s), std::move(deg));
}

NormAdj normalize_raw(const Matrix& raw, double degree_floor) {
  const int n = int(raw.rows());
  if (raw.cols() != n) throw DataError("raw adjacency must be square");
  Vector deg = raw.rowwise().sum().array() + 1.0;  // rows of raw + I
  Vector s(n);
  for (int i = 0; i < n; ++i) {
    s[i] = 1.0 / std::sqrt(std::max(deg[i], degree_floor));
  }
  std::vector<Eigen::Triplet<double>> trip;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double m = raw(i, j) + (i == j ? 1.0 : 0.0);
      if (m == 0.0) continue;
      trip.emplace_back(i, j, (s[i] * s[j]) * m);
    }
  }
  SparseMatrix ahat(n, n);
  ahat.setFromTriplets(trip.begin(), trip.end());
  return NormAdj(std::move(ahat), std::move(s), std::move(deg));
}

std::pair<Graph, LabelSet> load_graph(const fs::path& dir) {
  const fs::path edges_file = dir / "edges.tsv";
  const fs::path labels_file = dir / "labels.tsv";
  const fs::path features_file = dir / "features.tsv";
  const fs::path splits_file = dir / "splits.tsv";
  if (!fs::exists(edges_file)) throw DataError("missing " + edges_file.string());
  if (!fs::exists(labels_file)) {
    throw DataError("missing " + labels_file.string());
  }

  LabelSet labels;
  {
    auto lines = read_lines(labels_file);
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    labels.label.reserve(lines.size());
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
      auto fields = split_fields(lines[ln]);
      if (fields.size() != 1) {
        malformed(labels_file, ln + 1, "expected one label per line");
      }
      long v = parse_int(fields[0], labels_file, ln + 1);
      if (v < -1) malformed(labels_file, ln + 1, "label below -1");
      labels.label.push_back(int(v));
    }
  }
  const int n = int(labels.label.size());
  if (n < 1) throw DataError(labels_file.string() + ": no nodes");
  int max_label = -1;
  for (int v : labels.label) max_label = std::max(max_label, v);
  labels.classes = max_label + 1;
  if (labels.classes < 2) {
    throw DataError(labels_file.string() + ": fewer than two classes");
  }

  Graph g;
  g.n = n;
  {
    auto lines = read_lines(edges_file);
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    int cols = -1;
    std::vector<double> ws;
    std::set<std::pair<int, int>> seen;
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
      auto fields = split_fields(lines[ln]);
      if (fields.size() != 2 && fields.size() != 3) {
        malformed(edges_file, ln + 1, "expected 'i j' or 'i j weight'");
      }
      if (cols == -1) cols = int(fields.size());
      if (int(fields.size()) != cols) {
        malformed(edges_file, ln + 1, "inconsistent column count");
      }
      long i = parse_int(fields[0], edges_file, ln + 1);
      long j = parse_int(fields[1], edges_file, ln + 1);
      if (i < 0 || j < 0 || i >= n || j >= n) {
        malformed(edges_file, ln + 1, "node index out of range");
      }
      if (i == j) malformed(edges_file, ln + 1, "self-loop");
      int lo = int(std::min(i, j));
      int hi = int(std::max(i, j));
      if (!seen.insert({lo, hi}).second) {
        malformed(edges_file, ln + 1, "duplicate edge");
      }
      g.edges.emplace_back(lo, hi);
      if (cols == 3) {
        double w = parse_real(fields[2], edges_file, ln + 1);
        if (!(w > 0.0) || w > 1.0) {
          malformed(edges_file, ln + 1, "weight outside (0, 1]");
        }
        ws.push_back(w);
      }
    }
    if (cols == 3) {
      // Restore canonical order with weights attached.
      std::vector<std::size_t> order(g.edges.size());
      std::iota(order.begin(), order.end(), std::size_t(0));
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return g.edges[a] < g.edges[b];
      });
      std::vector<std::pair<int, int>> edges2(g.edges.size());
      std::vector<double> ws2(ws.size());
      for (std::size_t k2 = 0; k2 < order.size(); ++k2) {
        edges2[k2] = g.edges[order[k2]];
        ws2[k2] = ws[order[k2]];
      }
      g.edges = std::move(edges2);
      g.weights = std::move(ws2);
    } else {
      std::sort(g.edges.begin(), g.edges.end());
    }
  }

  if (fs::exists(features_file)) {
    auto lines = read_lines(features_file);
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    if (int(lines.size()) != n) {
      throw DataError(features_file.string() + ": expected " +
                      std::to_string(n) + " rows, got " +
                      std::to_string(lines.size()));
    }
    int d = -1;
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
      auto fields = split_fields(lines[ln]);
      if (d == -1) {
        d = int(fields.size());
        if (d < 1) malformed(features_file, ln + 1, "empty feature row");
        g.features.resize(n, d);
      }
      if (int(fields.size()) != d) {
        malformed(features_file, ln + 1, "inconsistent feature width");
      }
      for (int k2 = 0; k2 < d; ++k2) {
        g.features(int(ln), k2) =
            parse_real(fields[std::size_t(k2)], features_file, ln + 1);
      }
    }
  } else {
    g.features = Matrix::Identity(n, n);
  }

  if (fs::exists(splits_file)) {
    auto lines = read_lines(splits_file);
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    if (int(lines.size()) != n) {
      throw DataError(splits_file.string() + ": expected " +
                      std::to_string(n) + " rows, got " +
                      std::to_string(lines.size()));
    }
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
      auto fields = split_fields(lines[ln]);
      if (fields.size() != 1) {
        malformed(splits_file, ln + 1, "expected one tag per line");
      }
      const std::string& tag = fields[0];
      if (tag == "TRAIN-POOL") {
        labels.labeled_set.push_back(int(ln));
      } else if (tag == "TEST") {
        labels.test_set.push_back(int(ln));
      } else if (tag != "NONE") {
        malformed(splits_file, ln + 1, "unknown tag '" + tag + "'");
      }
    }
  }

  g.validate();
  labels.validate(n);
  return {std::move(g), std::move(labels)};
}

void save_graph(const Graph& g, const LabelSet& labels, const fs::path& dir) {
  g.validate();
  labels.validate(g.n);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string());

  {
    auto out = open_out(dir / "edges.tsv");
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
      out << g.edges[e].first << '\t' << g.edges[e].second;
      if (g.weighted()) out << '\t' << format_double((*g.weights)[e]);
      out << '\n';
    }
  }
  {
    auto out = open_out(dir / "labels.tsv");
    for (int v : labels.label) out << v << '\n';
  }
  {
    auto out = open_out(dir / "features.tsv");
    for (int i = 0; i < g.n; ++i) {
      for (int k = 0; k < g.dim(); ++k) {
        if (k) out << '\t';
        out << format_double(g.features(i, k));
      }
      out << '\n';
    }
  }
  if (!labels.labeled_set.empty() || !labels.test_set.empty()) {
    std::vector<std::string> tag(std::size_t(g.n), "NONE");
    for (int v : labels.labeled_set) tag[std::size_t(v)] = "TRAIN-POOL";
    for (int v : labels.test_set) tag[std::size_t(v)] = "TEST";
    auto out = open_out(dir / "splits.tsv");
    for (const auto& t : tag) out << t << '\n';
  }
}

void write_delta(const fs::path& file, const Graph& before,
                 const Graph& after) {
  if (before.n != after.n) {
    throw DataError("delta requires graphs with matching node count");
  }
  if (before.features.rows() != after.features.rows() ||
      before.features.cols() != after.features.cols()) {
    throw DataError("delta requires feature matrices with matching shape");
  }
  std::map<std::pair<int, int>, double> old_w, new_w;
  for (std::size_t e = 0; e < before.edges.size(); ++e) {
    old_w[before.edges[e]] = before.weight_at(e);
  }
  for (std::size_t e = 0; e < after.edges.size(); ++e) {
    new_w[after.edges[e]] = after.weight_at(e);
  }
  auto out = open_out(file);
  std::set<std::pair<int, int>> pairs;
  for (const auto& kv : old_w) pairs.insert(kv.first);
  for (const auto& kv : new_w) pairs.insert(kv.first);
  for (const auto& p : pairs) {
    auto o = old_w.find(p);
    auto m = new_w.find(p);
    double ov = o == old_w.end() ? 0.0 : o->second;
    double nv = m == new_w.end() ? 0.0 : m->second;
    if (ov == nv) continue;
    out << "A\t" << p.first << '\t' << p.second << '\t' << format_double(ov)
        << '\t' << format_double(nv) << '\n';
  }
  for (int i = 0; i < int(before.features.rows()); ++i) {
    for (int k = 0; k < int(before.features.cols()); ++k) {
      double ov = before.features(i, k);
      double nv = after.features(i, k);
      if (ov == nv) continue;
      out << "X\t" << i << '\t' << k << '\t' << format_double(ov) << '\t'
          << format_double(nv) << '\n';
    }
  }
}

}  // namespace gasoline
