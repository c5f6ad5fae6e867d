#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>
#include <vector>

#include "doctest.h"
#include "gasoline/error.hpp"
#include "gasoline/perturb.hpp"
#include "test_util.hpp"

using namespace gasoline;

namespace {

long pair_count(int n) { return long(n) * (n - 1) / 2; }

Graph graph_with_edges(int n, std::vector<std::pair<int, int>> edges, int d = 3) {
  Graph g;
  g.n = n;
  std::sort(edges.begin(), edges.end());
  g.edges = std::move(edges);
  g.features = Matrix::Identity(n, d);
  return g;
}

}  // namespace

TEST_CASE("random_attack: flip count is exactly floor(m * rate)") {
  // 100 edges: a 25-node circulant with offsets 1..4.
  std::vector<std::pair<int, int>> edges;
  std::set<std::pair<int, int>> es;
  for (int i = 0; i < 25; ++i) {
    for (int o = 1; o <= 4; ++o) {
      int j = (i + o) % 25;
      es.insert({std::min(i, j), std::max(i, j)});
    }
  }
  Graph g = graph_with_edges(25, {es.begin(), es.end()});
  REQUIRE(g.num_edges() == 100);

  SUBCASE("rate 1.0 toggles exactly 100 pairs") {
    auto [atk, rec] = random_attack(g, 1.0, 3);
    CHECK(rec.flips.size() == 100);
    atk.validate();
    CHECK_FALSE(atk.weighted());
    // Flips are distinct pairs.
    std::set<std::pair<int, int>> seen;
    int added = 0;
    for (auto [i, j, was_added] : rec.flips) {
      CHECK(i < j);
      seen.insert({i, j});
      if (was_added) ++added;
    }
    CHECK(seen.size() == 100);
    CHECK(atk.num_edges() == 100 - (100 - added) + added);
    CHECK(rec.rate == 1.0);
    CHECK(rec.seed == 3);
  }

  SUBCASE("rate 0.25 toggles 25") {
    auto [atk, rec] = random_attack(g, 0.25, 4);
    CHECK(rec.flips.size() == 25);
  }
}

TEST_CASE("random_attack: labels, features, and node count pass through") {
  Graph g = testutil::random_graph(15, 0.3, 7, 5);
  auto [atk, rec] = random_attack(g, 0.5, 9);
  CHECK(atk.n == g.n);
  CHECK((atk.features - g.features).cwiseAbs().maxCoeff() == 0.0);
  CHECK(atk.dim() == g.dim());
}

TEST_CASE("random_attack: applying the record again restores the graph") {
  Graph g = testutil::random_graph(12, 0.3, 11, 4);
  auto [atk, rec] = random_attack(g, 0.8, 13);
  CHECK_FALSE(structurally_equal(atk, g));
  Graph restored = apply_flips(atk, rec);
  CHECK(structurally_equal(restored, g));
}

TEST_CASE("random_attack: deterministic per seed") {
  Graph g = testutil::random_graph(12, 0.3, 17, 4);
  auto [a1, r1] = random_attack(g, 0.5, 21);
  auto [a2, r2] = random_attack(g, 0.5, 21);
  CHECK(structurally_equal(a1, a2));
  CHECK(r1.flips == r2.flips);
  auto [a3, r3] = random_attack(g, 0.5, 22);
  CHECK(r1.flips != r3.flips);
}

TEST_CASE("random_attack: error cases") {
  Graph g = graph_with_edges(4, {{0, 1}, {1, 2}});
  SUBCASE("zero budget") {
    CHECK_THROWS_AS(random_attack(g, 0.4, 1), DataError);  // floor(2*0.4)=0
    CHECK_THROWS_AS(random_attack(g, 0.0, 1), ConfigError);
  }
  SUBCASE("budget above the pair count") {
    // floor(2 * 4) = 8 > C(4,2) = 6.
    CHECK_THROWS_AS(random_attack(g, 4.0, 1), DataError);
  }
  SUBCASE("weighted adjacency") {
    g.weights = std::vector<double>(g.edges.size(), 0.5);
    CHECK_THROWS_AS(random_attack(g, 0.5, 1), DataError);
  }
}

TEST_CASE("attack records: file round-trip and malformed input") {
  Graph g = testutil::random_graph(10, 0.4, 23, 3);
  auto [atk, rec] = random_attack(g, 0.6, 29);

  testutil::TempDir dir("attack-io");
  save_attack(rec, dir.file("attack.tsv"));
  AttackRecord back = load_attack(dir.file("attack.tsv"));
  CHECK(back.flips == rec.flips);

  std::string body = testutil::read_file(dir.file("attack.tsv"));
  CHECK(body.find("added") != std::string::npos);
  // Every line is "i<TAB>j<TAB>added|removed".
  CHECK((body.find("\tadded\n") != std::string::npos ||
         body.find("\tremoved\n") != std::string::npos));

  testutil::write_file(dir.file("bad.tsv"), "0\t1\tmaybe\n");
  CHECK_THROWS_AS(load_attack(dir.file("bad.tsv")), DataError);
}

TEST_CASE("sbm_generate: shapes, labels, and split sizes") {
  SbmParams p;
  p.n = 200;
  p.blocks = 4;
  p.labels_per_class = 20;
  p.feature_dim = 32;
  p.seed = 31;
  auto [g, labels] = sbm_generate(p);
  g.validate();
  labels.validate(g.n);

  CHECK(g.n == 200);
  CHECK(g.dim() == 32);
  CHECK(labels.classes == 4);
  CHECK(labels.labeled_set.size() == 80);  // 20 per block
  CHECK(labels.test_set.size() == 36);     // floor(0.3 * 120)

  // Exactly labels_per_class labeled nodes per block.
  std::vector<int> per_class(4, 0);
  for (int v : labels.labeled_set) ++per_class[std::size_t(labels.label[std::size_t(v)])];
  for (int c = 0; c < 4; ++c) CHECK(per_class[std::size_t(c)] == 20);

  // Every node carries its block label; blocks are contiguous and equal.
  for (int v = 0; v < 200; ++v) CHECK(labels.label[std::size_t(v)] == v / 50);

  // Z and W never overlap.
  std::set<int> z(labels.labeled_set.begin(), labels.labeled_set.end());
  for (int v : labels.test_set) CHECK(z.count(v) == 0);
}

TEST_CASE("sbm_generate: extreme probabilities give disjoint cliques") {
  SbmParams p;
  p.n = 20;
  p.blocks = 4;
  p.p_in = 1.0;
  p.p_out = 0.0;
  p.labels_per_class = 2;
  p.feature_dim = 8;
  p.seed = 37;
  auto [g, labels] = sbm_generate(p);
  Matrix a = g.dense_adjacency();
  for (int i = 0; i < 20; ++i) {
    for (int j = i + 1; j < 20; ++j) {
      bool same_block = (i / 5) == (j / 5);
      CHECK(a(i, j) == (same_block ? 1.0 : 0.0));
    }
  }
}

TEST_CASE("sbm_generate: edge totals track the binomial expectation") {
  SbmParams p;
  p.n = 80;
  p.blocks = 4;
  p.p_in = 0.2;
  p.p_out = 0.02;
  p.labels_per_class = 5;
  p.feature_dim = 8;

  const long within = 4 * pair_count(20);
  const long cross = pair_count(80) - within;
  const double mean = double(within) * p.p_in + double(cross) * p.p_out;
  const double var = double(within) * p.p_in * (1 - p.p_in) +
                     double(cross) * p.p_out * (1 - p.p_out);

  double total = 0.0;
  const int runs = 20;
  for (int s = 0; s < runs; ++s) {
    p.seed = 1000 + std::uint64_t(s);
    auto [g, labels] = sbm_generate(p);
    total += g.num_edges();
  }
  double avg = total / runs;
  double sigma_mean = std::sqrt(var / runs);
  CHECK(std::abs(avg - mean) <= 3.0 * sigma_mean);
}

TEST_CASE("sbm_generate: deterministic per seed and parameter validation") {
  SbmParams p;
  p.n = 40;
  p.blocks = 4;
  p.labels_per_class = 3;
  p.feature_dim = 6;
  p.seed = 41;
  auto [g1, l1] = sbm_generate(p);
  auto [g2, l2] = sbm_generate(p);
  CHECK(structurally_equal(g1, g2));
  CHECK(l1.labeled_set == l2.labeled_set);
  CHECK(l1.test_set == l2.test_set);
  p.seed = 42;
  auto [g3, l3] = sbm_generate(p);
  CHECK_FALSE(structurally_equal(g1, g3));

  SbmParams bad = p;
  bad.n = 41;  // does not divide into 4 blocks
  CHECK_THROWS_AS(sbm_generate(bad), ConfigError);
  bad = p;
  bad.p_out = 0.5;
  bad.p_in = 0.2;  // p_out >= p_in
  CHECK_THROWS_AS(sbm_generate(bad), ConfigError);
  bad = p;
  bad.labels_per_class = 11;  // exceeds block size 10
  CHECK_THROWS_AS(sbm_generate(bad), ConfigError);
  bad = p;
  bad.blocks = 1;
  CHECK_THROWS_AS(sbm_generate(bad), ConfigError);
  bad = p;
  bad.feature_noise = -0.5;
  CHECK_THROWS_AS(sbm_generate(bad), ConfigError);
}

TEST_CASE("score_audit: hand-computed four-node means") {
  Graph benign = graph_with_edges(4, {{0, 1}, {2, 3}});
  Graph poisoned = graph_with_edges(4, {{0, 1}, {0, 2}, {2, 3}});

  ScoreMatrix s;
  s.s = Matrix::Zero(4, 4);
  auto put = [&](int i, int j, double v) { s.s(i, j) = s.s(j, i) = v; };
  put(0, 2, 50.0);  // the attacked pair
  put(0, 1, 1.0);   // untouched edge
  put(2, 3, 3.0);   // untouched edge
  put(0, 3, 0.5);   // untouched non-edges
  put(1, 2, 1.5);
  put(1, 3, 2.5);

  AuditScores audit = score_audit(benign, poisoned, s);
  CHECK(audit.adv == doctest::Approx(50.0).epsilon(1e-15));
  CHECK(audit.benign_edge == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(audit.benign_non_edge == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("score_audit: the three masks partition the off-diagonal pairs") {
  // Give every pair a value that encodes its expected mask. If any pair were
  // assigned to the wrong mask, that mask's mean would move off its constant.
  Graph benign = testutil::random_graph(10, 0.3, 43, 3);
  auto [poisoned, rec] = random_attack(benign, 0.5, 47);

  std::set<std::pair<int, int>> attacked;
  for (auto [i, j, added] : rec.flips) attacked.insert({i, j});
  std::set<std::pair<int, int>> benign_edges(benign.edges.begin(),
                                             benign.edges.end());

  ScoreMatrix s;
  s.s = Matrix::Zero(10, 10);
  long counted = 0;
  for (int i = 0; i < 10; ++i) {
    for (int j = i + 1; j < 10; ++j) {
      double v;
      if (attacked.count({i, j})) {
        v = 1.0;
      } else if (benign_edges.count({i, j})) {
        v = 2.0;
      } else {
        v = 4.0;
      }
      s.s(i, j) = s.s(j, i) = v;
      ++counted;
    }
  }
  REQUIRE(counted == pair_count(10));

  AuditScores audit = score_audit(benign, poisoned, s);
  CHECK(audit.adv == 1.0);
  CHECK(audit.benign_edge == 2.0);
  CHECK(audit.benign_non_edge == 4.0);
}

TEST_CASE("score_audit: constant scores give three equal means") {
  Graph benign = testutil::random_graph(8, 0.4, 53, 3);
  auto [poisoned, rec] = random_attack(benign, 0.5, 59);
  ScoreMatrix s;
  s.s = Matrix::Constant(8, 8, 0.75);
  s.s.diagonal().setZero();
  AuditScores audit = score_audit(benign, poisoned, s);
  CHECK(audit.adv == 0.75);
  CHECK(audit.benign_edge == 0.75);
  CHECK(audit.benign_non_edge == 0.75);
}

TEST_CASE("score_audit: error cases") {
  Graph benign = testutil::random_graph(8, 0.4, 61, 3);
  ScoreMatrix s;
  s.s = Matrix::Zero(8, 8);

  // Identical graphs leave the adversarial mask empty.
  CHECK_THROWS_AS(score_audit(benign, benign, s), DataError);

  auto [poisoned, rec] = random_attack(benign, 0.5, 67);
  ScoreMatrix wrong;
  wrong.s = Matrix::Zero(7, 7);
  CHECK_THROWS_AS(score_audit(benign, poisoned, wrong), DataError);

  Graph other = testutil::random_graph(9, 0.4, 71, 3);
  CHECK_THROWS_AS(score_audit(benign, other, s), DataError);

  Graph weighted = poisoned;
  weighted.weights = std::vector<double>(weighted.edges.size(), 0.5);
  CHECK_THROWS_AS(score_audit(benign, weighted, s), DataError);
}
