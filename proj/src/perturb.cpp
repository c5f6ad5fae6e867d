#include "gasoline/perturb.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "gasoline/error.hpp"
#include "gasoline/rng.hpp"

namespace gasoline {

namespace fs = std::filesystem;

std::pair<Graph, AttackRecord> random_attack(const Graph& g, double rate,
                                             std::uint64_t seed) {
  g.validate();
  if (g.weighted()) throw DataError("random attack needs a binary adjacency");
  if (!(rate > 0.0)) throw ConfigError("attack rate must be > 0");
  const long total = long(g.n) * (g.n - 1) / 2;
  const long budget = long(std::floor(double(g.num_edges()) * rate));
  if (budget < 1) {
    throw DataError("attack budget is zero: rate too small for this graph");
  }
  if (budget > total) {
    throw DataError("attack budget exceeds available node pairs");
  }

  SplitMix64 rng(seed);
  std::set<std::pair<int, int>> chosen;
  if (budget > total / 2) {
    // Dense request: enumerate and shuffle instead of rejection sampling.
    std::vector<std::pair<int, int>> all;
    all.reserve(std::size_t(total));
    for (int i = 0; i < g.n; ++i) {
      for (int j = i + 1; j < g.n; ++j) all.emplace_back(i, j);
    }
    rng.shuffle(all);
    chosen.insert(all.begin(), all.begin() + budget);
  } else {
    while (long(chosen.size()) < budget) {
      int i = int(rng.below(std::uint64_t(g.n)));
      int j = int(rng.below(std::uint64_t(g.n)));
      if (i == j) continue;
      chosen.insert({std::min(i, j), std::max(i, j)});
    }
  }

  std::set<std::pair<int, int>> edges(g.edges.begin(), g.edges.end());
  AttackRecord rec;
  rec.seed = seed;
  rec.rate = rate;
  for (const auto& p : chosen) {
    auto it = edges.find(p);
    if (it == edges.end()) {
      edges.insert(p);
      rec.flips.emplace_back(p.first, p.second, true);
    } else {
      edges.erase(it);
      rec.flips.emplace_back(p.first, p.second, false);
    }
  }
  Graph out;
  out.n = g.n;
  out.features = g.features;
  out.edges.assign(edges.begin(), edges.end());
  return {std::move(out), std::move(rec)};
}

Graph apply_flips(const Graph& g, const AttackRecord& rec) {
  if (g.weighted()) throw DataError("flip records apply to binary graphs");
  std::set<std::pair<int, int>> edges(g.edges.begin(), g.edges.end());
  for (const auto& [i, j, added] : rec.flips) {
    (void)added;
    std::pair<int, int> p{i, j};
    auto it = edges.find(p);
    if (it == edges.end()) {
      edges.insert(p);
    } else {
      edges.erase(it);
    }
  }
  Graph out;
  out.n = g.n;
  out.features = g.features;
  out.edges.assign(edges.begin(), edges.end());
  out.validate();
  return out;
}

void save_attack(const AttackRecord& rec, const fs::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot write " + file.string());
  for (const auto& [i, j, added] : rec.flips) {
    out << i << '\t' << j << '\t' << (added ? "added" : "removed") << '\n';
  }
}

AttackRecord load_attack(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open " + file.string());
  AttackRecord rec;
  std::string line;
  std::size_t ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    int i = 0, j = 0;
    std::string dir;
    if (!(ss >> i >> j >> dir) || (dir != "added" && dir != "removed")) {
      throw DataError(file.string() + ":" + std::to_string(ln) +
                      ": expected 'i j added|removed'");
    }
    rec.flips.emplace_back(i, j, dir == "added");
  }
  return rec;
}

std::pair<Graph, LabelSet> sbm_generate(const SbmParams& p) {
  if (p.n < 2 || p.blocks < 2) {
    throw ConfigError("generator needs n >= 2 and at least two blocks");
  }
  if (p.n % p.blocks != 0) {
    throw ConfigError("node count must divide evenly into blocks");
  }
  if (!(p.p_in > p.p_out) || p.p_out < 0.0 || p.p_in > 1.0) {
    throw ConfigError("edge probabilities need 0 <= p_out < p_in <= 1");
  }
  const int per_block = p.n / p.blocks;
  if (p.labels_per_class < 1 || p.labels_per_class > per_block) {
    throw ConfigError("labels per class must lie in [1, block size]");
  }
  if (p.feature_dim < 1) throw ConfigError("feature dim must be >= 1");
  if (p.feature_noise < 0.0) throw ConfigError("feature noise must be >= 0");

  SplitMix64 rng(p.seed);
  auto block_of = [&](int v) { return v / per_block; };

  Graph g;
  g.n = p.n;
  for (int i = 0; i < p.n; ++i) {
    for (int j = i + 1; j < p.n; ++j) {
      double prob = block_of(i) == block_of(j) ? p.p_in : p.p_out;
      if (rng.next_double() < prob) g.edges.emplace_back(i, j);
    }
  }

  g.features.resize(p.n, p.feature_dim);
  for (int i = 0; i < p.n; ++i) {
    int b = block_of(i);
    for (int k = 0; k < p.feature_dim; ++k) {
      double base = (k % p.blocks) == b ? 1.0 : 0.0;
      g.features(i, k) = base + p.feature_noise * rng.normal();
    }
  }

  LabelSet labels;
  labels.classes = p.blocks;
  labels.label.resize(std::size_t(p.n));
  for (int i = 0; i < p.n; ++i) labels.label[std::size_t(i)] = block_of(i);

  std::vector<bool> in_z(std::size_t(p.n), false);
  for (int b = 0; b < p.blocks; ++b) {
    std::vector<int> members;
    for (int i = b * per_block; i < (b + 1) * per_block; ++i) {
      members.push_back(i);
    }
    rng.shuffle(members);
    for (int t = 0; t < p.labels_per_class; ++t) {
      labels.labeled_set.push_back(members[std::size_t(t)]);
      in_z[std::size_t(members[std::size_t(t)])] = true;
    }
  }
  std::vector<int> rest;
  for (int i = 0; i < p.n; ++i) {
    if (!in_z[std::size_t(i)]) rest.push_back(i);
  }
  rng.shuffle(rest);
  const int w_count = int(std::floor(0.3 * double(rest.size())));
  labels.test_set.assign(rest.begin(), rest.begin() + w_count);

  g.validate();
  labels.validate(p.n);
  return {std::move(g), std::move(labels)};
}

AuditScores score_audit(const Graph& benign, const Graph& poisoned,
                        const ScoreMatrix& s) {
  if (benign.n != poisoned.n) {
    throw DataError("audit graphs have mismatched node counts");
  }
  if (benign.weighted() || poisoned.weighted()) {
    throw DataError("audit requires binary adjacencies");
  }
  const int n = benign.n;
  if (int(s.s.rows()) != n || int(s.s.cols()) != n) {
    throw DataError("score matrix does not match graph size");
  }
  const Matrix a = benign.dense_adjacency();
  const Matrix a_adv = poisoned.dense_adjacency();

  double sum_adv = 0.0, cnt_adv = 0.0;
  double sum_be = 0.0, cnt_be = 0.0;
  double sum_bne = 0.0, cnt_bne = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const bool diff = a(i, j) != a_adv(i, j);
      if (diff) {
        sum_adv += s.s(i, j);
        cnt_adv += 1.0;
      } else if (a(i, j) == 1.0) {
        sum_be += s.s(i, j);
        cnt_be += 1.0;
      } else {
        sum_bne += s.s(i, j);
        cnt_bne += 1.0;
      }
    }
  }
  if (cnt_adv == 0.0) {
    throw DataError("audit found no poisoned entries: graphs are identical");
  }
  AuditScores out;
  out.adv = sum_adv / cnt_adv;
  out.benign_edge = cnt_be > 0.0 ? sum_be / cnt_be : 0.0;
  out.benign_non_edge = cnt_bne > 0.0 ? sum_bne / cnt_bne : 0.0;
  return out;
}

}  // namespace gasoline
