#pragma once

#include <cstdint>
#include <filesystem>
#include <tuple>
#include <utility>
#include <vector>

#include "gasoline/graph.hpp"
#include "gasoline/sanitize.hpp"

namespace gasoline {

struct AttackRecord {
  // Unordered pairs (i < j); `added` records the direction of the toggle.
  std::vector<std::tuple<int, int, bool>> flips;
  std::uint64_t seed = 0;
  double rate = 0.0;
};

// Toggles floor(m * rate) distinct off-diagonal pairs chosen uniformly from
// all n(n-1)/2 pairs (so mostly additions on sparse graphs). Requires a
// binary adjacency; features and labels pass through untouched.
std::pair<Graph, AttackRecord> random_attack(const Graph& g, double rate,
                                             std::uint64_t seed);

// Re-toggles the recorded pairs; applying an attack record to the attacked
// graph restores the original.
Graph apply_flips(const Graph& g, const AttackRecord& rec);

void save_attack(const AttackRecord& rec, const std::filesystem::path& file);
AttackRecord load_attack(const std::filesystem::path& file);

// Planted-partition generator used as the synthetic test bed. Nodes are
// split into equal blocks; the label is the block id. Features are the
// block's one-hot signature tiled to `feature_dim` columns plus seeded
// Gaussian noise. Z gets `labels_per_class` nodes per block; W gets 30% of
// the remaining nodes.
struct SbmParams {
  int n = 200;
  int blocks = 4;
  double p_in = 0.10;
  double p_out = 0.01;
  int labels_per_class = 20;
  int feature_dim = 32;
  double feature_noise = 1.0;
  std::uint64_t seed = 0;
};
std::pair<Graph, LabelSet> sbm_generate(const SbmParams& params);

// Mean flip score over three disjoint off-diagonal masks: entries the attack
// touched, untouched edges, untouched non-edges. A sanitizer whose scores
// rank attacked entries first is seeing the poison.
struct AuditScores {
  double adv = 0.0;
  double benign_edge = 0.0;
  double benign_non_edge = 0.0;
};
AuditScores score_audit(const Graph& benign, const Graph& poisoned,
                        const ScoreMatrix& s);

}  // namespace gasoline
