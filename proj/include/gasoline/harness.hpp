#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "gasoline/backbone.hpp"
#include "gasoline/graph.hpp"
#include "gasoline/lowrank.hpp"
#include "gasoline/perturb.hpp"
#include "gasoline/sanitize.hpp"

namespace gasoline {

// Downstream evaluation summary: one full training per seed on all of Z,
// accuracy measured on W. Serialized as stable-key JSON so identical runs
// produce identical bytes (wall time is zeroed when timing is excluded).
struct RunReport {
  std::vector<double> accuracies;  // one per seed, in seed order
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n - 1)
  std::string backbone;
  std::string optimizer;
  int iterations = 0;
  double learning_rate = 0.0;
  double weight_decay = 0.0;
  int n_seeds = 0;
  std::uint64_t seed = 0;
  std::string graph_hash;  // content hash of the evaluated graph
  double wall_ms = 0.0;    // 0 when timing is excluded

  std::string to_json() const;
};

RunReport eval_downstream(const Graph& g, const LabelSet& labels,
                          const BackboneKind& kind, const TrainConfig& cfg,
                          int n_seeds, std::uint64_t master_seed,
                          bool include_timing = true);

// Fraction of `nodes` whose argmax logit (lowest index wins ties) matches
// the label.
double accuracy(const Matrix& logits, const LabelSet& labels,
                const std::vector<int>& nodes);

// SHA-1 over the canonical serialized form of graph + labels, so any change
// to edges, weights, features, labels, or splits changes the hash.
std::string graph_content_hash(const Graph& g, const LabelSet& labels);

// Split policy when the input directory marked no nodes: per class, a seeded
// shuffle sends ~20% (at least one node) to the labeled pool Z and the rest
// to the evaluation set W.
LabelSet default_splits(const LabelSet& labels, std::uint64_t seed);

// Applies default_splits (with a stream derived from `master_seed`) only when
// the label set defines neither Z nor W; otherwise returns it unchanged.
LabelSet splits_or_default(const LabelSet& labels, std::uint64_t master_seed);

// Every tunable the CLI and the config file share. Config files are flat
// `key = value` lines ('#' starts a comment); CLI flags override config
// values, which override these defaults.
struct Settings {
  std::string graph_dir;
  std::string out_dir;
  std::string clean_dir;  // audit subcommand: the unpoisoned reference

  std::string backbone = "sgc";  // sgc | gcn | appnp
  std::string variant = "dt";    // dt | ct | df | cf | dtcf
  std::string optimizer = "adam";
  int folds = 8;
  int steps = 10;
  double rate_topo = 0.1;
  double rate_fea = 0.001;
  int iterations = 200;
  int truncate_at = 196;
  double learning_rate = 0.01;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;
  int n_seeds = 10;

  int rank = 32;  // low-rank variant
  double lr_step_size = 0.01;
  int lr_steps = 10;
  bool lr_normalize = true;
  double lr_init_scale = 1e-3;

  double attack_rate = 0.5;  // attack subcommand

  int gen_n = 200;  // gen subcommand (block-model instance)
  int gen_blocks = 4;
  double gen_p_in = 0.10;
  double gen_p_out = 0.01;
  int gen_labels_per_class = 20;
  int gen_feature_dim = 32;
  double gen_feature_noise = 1.0;

  bool include_timing = true;
};

// Applies one key=value pair; unknown keys and unparsable values raise
// ConfigError. Key names match the Settings field names.
void apply_setting(Settings& s, const std::string& key,
                   const std::string& value);
void apply_config_file(Settings& s, const std::filesystem::path& file);

BackboneKind backbone_from_name(const std::string& name);
std::pair<Modify, Modify> variant_from_name(const std::string& name);
SanitizeConfig sanitize_config_from(const Settings& s);
LrConfig lr_config_from(const Settings& s);
SbmParams sbm_params_from(const Settings& s);

enum class RunMode { Budgeted, LowRank };

struct ExperimentResult {
  RunReport before, after;
  std::vector<StepAudit> audit;
  Graph graph;  // the modified graph, as saved under out/graph/
};

// Full protocol: load graph (applying the default split policy when the
// directory defines none), evaluate, sanitize (budgeted or low-rank),
// evaluate again, and write out/{graph/, delta.tsv, audit.jsonl,
// report_before.json, report_after.json}. The input directory is never
// written to.
ExperimentResult run_experiment(const Settings& s, RunMode mode);

// One aggregated, calibrated hyper-gradient at `poisoned`, scored against
// its adjacency and averaged over the three audit masks.
AuditScores run_audit(const Graph& benign, const Graph& poisoned,
                      const LabelSet& labels, const SanitizeConfig& cfg);

struct GradCheckRow {
  std::string target;  // dA, dX, dU, dV
  double max_rel_err = 0.0;
  bool pass = false;
};

// Random-instance derivative diagnostic: analytic hyper-gradients versus
// central finite differences (h = 1e-5) on a seeded graph with n nodes
// (n <= 16). Pass threshold per entry: |analytic - numeric| over
// max(|numeric|, 1e-4) below 1e-4. Failures are reported, never thrown.
std::vector<GradCheckRow> gradcheck(const BackboneKind& kind, int n,
                                    std::uint64_t seed);

// Serialization helpers shared by reports and the audit log.
std::string audit_to_jsonl(const std::vector<StepAudit>& audit,
                           bool include_timing);

}  // namespace gasoline
