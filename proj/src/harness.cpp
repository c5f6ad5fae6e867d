#include "gasoline/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>

#include "json.hpp"

#include "gasoline/error.hpp"
#include "gasoline/parallel.hpp"
#include "gasoline/rng.hpp"
#include "gasoline/sha1.hpp"

namespace gasoline {

namespace {

using nlohmann::json;  // std::map-backed: keys serialize in sorted order

constexpr std::uint64_t kEvalTag = 0xE7A1;
constexpr std::uint64_t kSplitTag = 0x5B117;
constexpr std::uint64_t kCheckGraphTag = 0x6C4D;
constexpr std::uint64_t kCheckParamTag = 0x7A7A;
constexpr std::uint64_t kCheckDeltaTag = 0xDE17A;

std::string backbone_name(const BackboneKind& kind) {
  switch (kind.kind) {
    case Backbone::Sgc: return "sgc";
    case Backbone::Gcn2: return "gcn";
    case Backbone::Appnp: return "appnp";
  }
  return "unknown";
}

std::string optimizer_name(Optimizer o) {
  return o == Optimizer::Adam ? "adam" : "gd";
}

double now_ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

void write_text(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot write " + file.string());
  out << text;
  if (!out.good()) throw DataError("failed writing " + file.string());
}

int parse_int_value(const std::string& key, const std::string& v) {
  int out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("bad integer for '" + key + "': '" + v + "'");
  }
  return out;
}

std::uint64_t parse_u64_value(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("bad unsigned integer for '" + key + "': '" + v + "'");
  }
  return out;
}

double parse_double_value(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("bad number for '" + key + "': '" + v + "'");
  }
  return out;
}

bool parse_bool_value(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("bad boolean for '" + key + "': '" + v +
                    "' (expected true/false/1/0)");
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(std::abs(numeric), 1e-4);
}

}  // namespace

double accuracy(const Matrix& logits, const LabelSet& labels,
                const std::vector<int>& nodes) {
  if (nodes.empty()) throw DataError("accuracy over an empty node set");
  long hits = 0;
  for (int v : nodes) {
    if (v < 0 || v >= int(logits.rows())) {
      throw DataError("accuracy: node " + std::to_string(v) + " out of range");
    }
    int y = labels.label[std::size_t(v)];
    if (y == kUnlabeled) {
      throw DataError("accuracy: node " + std::to_string(v) + " is unlabeled");
    }
    if (y >= int(logits.cols())) {
      throw DataError("accuracy: label exceeds logit width");
    }
    int best = 0;
    for (int c = 1; c < int(logits.cols()); ++c) {
      if (logits(v, c) > logits(v, best)) best = c;
    }
    if (best == y) ++hits;
  }
  return double(hits) / double(nodes.size());
}

RunReport eval_downstream(const Graph& g, const LabelSet& labels,
                          const BackboneKind& kind, const TrainConfig& cfg,
                          int n_seeds, std::uint64_t master_seed,
                          bool include_timing) {
  auto t0 = std::chrono::steady_clock::now();
  g.validate();
  labels.validate(g.n);
  kind.validate();
  cfg.validate();
  if (n_seeds < 1) throw ConfigError("n_seeds must be at least 1");
  if (labels.labeled_set.empty()) throw DataError("labeled pool Z is empty");
  if (labels.test_set.empty()) throw DataError("evaluation set W is empty");

  NormAdj adj = normalize_adjacency(g);
  std::vector<double> accs(std::size_t(n_seeds), 0.0);
  parallel_for(n_seeds, [&](int s) {
    TrainConfig tc = cfg;
    tc.init_seed = derive_seed(master_seed, kEvalTag, std::uint64_t(s));
    TrainResult tr =
        train_dynamic(kind, adj, g.features, labels, labels.labeled_set, tc);
    accs[std::size_t(s)] = accuracy(
        forward(kind, adj, g.features, tr.final_state), labels, labels.test_set);
  });

  RunReport r;
  r.accuracies = accs;
  double sum = 0.0;
  for (double a : accs) sum += a;
  r.mean = sum / double(n_seeds);
  if (n_seeds > 1) {
    double sq = 0.0;
    for (double a : accs) sq += (a - r.mean) * (a - r.mean);
    r.stddev = std::sqrt(sq / double(n_seeds - 1));
  }
  r.backbone = backbone_name(kind);
  r.optimizer = optimizer_name(cfg.optimizer);
  r.iterations = cfg.iterations;
  r.learning_rate = cfg.learning_rate;
  r.weight_decay = cfg.weight_decay;
  r.n_seeds = n_seeds;
  r.seed = master_seed;
  r.graph_hash = graph_content_hash(g, labels);
  r.wall_ms = include_timing ? now_ms_since(t0) : 0.0;
  return r;
}

std::string RunReport::to_json() const {
  json j;
  j["accuracies"] = accuracies;
  j["backbone"] = backbone;
  j["graph_hash"] = graph_hash;
  j["iterations"] = iterations;
  j["learning_rate"] = learning_rate;
  j["mean"] = mean;
  j["n_seeds"] = n_seeds;
  j["optimizer"] = optimizer;
  j["seed"] = seed;
  j["stddev"] = stddev;
  j["wall_ms"] = wall_ms;
  j["weight_decay"] = weight_decay;
  return j.dump(2) + "\n";
}

std::string graph_content_hash(const Graph& g, const LabelSet& labels) {
  Sha1 h;
  {
    std::ostringstream head;
    head << "graph/1\n"
         << g.n << ' ' << g.num_edges() << ' ' << g.dim() << ' '
         << labels.classes << '\n';
    h.update(head.str());
  }
  h.update("edges\n");
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    std::string line = std::to_string(g.edges[e].first) + '\t' +
                       std::to_string(g.edges[e].second) + '\t' +
                       format_double(g.weight_at(e)) + '\n';
    h.update(line);
  }
  h.update("labels\n");
  {
    std::string block;
    for (int v = 0; v < g.n; ++v) {
      block += std::to_string(labels.label[std::size_t(v)]);
      block += '\n';
    }
    h.update(block);
  }
  h.update("features\n");
  for (int i = 0; i < g.n; ++i) {
    std::string row;
    for (int k = 0; k < g.dim(); ++k) {
      if (k) row += '\t';
      row += format_double(g.features(i, k));
    }
    row += '\n';
    h.update(row);
  }
  h.update("splits\n");
  {
    std::string tags(std::size_t(g.n), 'N');
    for (int v : labels.labeled_set) tags[std::size_t(v)] = 'Z';
    for (int v : labels.test_set) tags[std::size_t(v)] = 'W';
    tags += '\n';
    h.update(tags);
  }
  return h.hex_digest();
}

LabelSet default_splits(const LabelSet& labels, std::uint64_t seed) {
  LabelSet out = labels;
  out.labeled_set.clear();
  out.test_set.clear();
  const int n = int(labels.label.size());
  SplitMix64 rng(seed);
  for (int c = 0; c < labels.classes; ++c) {
    std::vector<int> members;
    for (int v = 0; v < n; ++v) {
      if (labels.label[std::size_t(v)] == c) members.push_back(v);
    }
    if (members.empty()) {
      throw DataError("class " + std::to_string(c) +
                      " has no labeled nodes; cannot build a split");
    }
    rng.shuffle(members);
    std::size_t take = std::max<std::size_t>(1, members.size() / 5);
    for (std::size_t i = 0; i < members.size(); ++i) {
      (i < take ? out.labeled_set : out.test_set).push_back(members[i]);
    }
  }
  std::sort(out.labeled_set.begin(), out.labeled_set.end());
  std::sort(out.test_set.begin(), out.test_set.end());
  return out;
}

LabelSet splits_or_default(const LabelSet& labels, std::uint64_t master_seed) {
  if (labels.labeled_set.empty() && labels.test_set.empty()) {
    return default_splits(labels, derive_seed(master_seed, kSplitTag));
  }
  return labels;
}

void apply_setting(Settings& s, const std::string& key,
                   const std::string& value) {
  if (key == "graph_dir") s.graph_dir = value;
  else if (key == "out_dir") s.out_dir = value;
  else if (key == "clean_dir") s.clean_dir = value;
  else if (key == "backbone") s.backbone = value;
  else if (key == "variant") s.variant = value;
  else if (key == "optimizer") s.optimizer = value;
  else if (key == "folds") s.folds = parse_int_value(key, value);
  else if (key == "steps") s.steps = parse_int_value(key, value);
  else if (key == "rate_topo") s.rate_topo = parse_double_value(key, value);
  else if (key == "rate_fea") s.rate_fea = parse_double_value(key, value);
  else if (key == "iterations") s.iterations = parse_int_value(key, value);
  else if (key == "truncate_at") s.truncate_at = parse_int_value(key, value);
  else if (key == "learning_rate")
    s.learning_rate = parse_double_value(key, value);
  else if (key == "weight_decay")
    s.weight_decay = parse_double_value(key, value);
  else if (key == "seed") s.seed = parse_u64_value(key, value);
  else if (key == "n_seeds") s.n_seeds = parse_int_value(key, value);
  else if (key == "rank") s.rank = parse_int_value(key, value);
  else if (key == "lr_step_size")
    s.lr_step_size = parse_double_value(key, value);
  else if (key == "lr_steps") s.lr_steps = parse_int_value(key, value);
  else if (key == "lr_normalize") s.lr_normalize = parse_bool_value(key, value);
  else if (key == "lr_init_scale")
    s.lr_init_scale = parse_double_value(key, value);
  else if (key == "attack_rate")
    s.attack_rate = parse_double_value(key, value);
  else if (key == "gen_n") s.gen_n = parse_int_value(key, value);
  else if (key == "gen_blocks") s.gen_blocks = parse_int_value(key, value);
  else if (key == "gen_p_in") s.gen_p_in = parse_double_value(key, value);
  else if (key == "gen_p_out") s.gen_p_out = parse_double_value(key, value);
  else if (key == "gen_labels_per_class")
    s.gen_labels_per_class = parse_int_value(key, value);
  else if (key == "gen_feature_dim")
    s.gen_feature_dim = parse_int_value(key, value);
  else if (key == "gen_feature_noise")
    s.gen_feature_noise = parse_double_value(key, value);
  else if (key == "include_timing")
    s.include_timing = parse_bool_value(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

void apply_config_file(Settings& s, const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + file.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::string body = trim(line);
    if (body.empty()) continue;
    std::size_t eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(file.string() + ":" + std::to_string(line_no) +
                        ": expected key = value");
    }
    std::string key = trim(body.substr(0, eq));
    std::string value = trim(body.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(file.string() + ":" + std::to_string(line_no) +
                        ": empty key");
    }
    try {
      apply_setting(s, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(file.string() + ":" + std::to_string(line_no) + ": " +
                        e.what());
    }
  }
}

BackboneKind backbone_from_name(const std::string& name) {
  if (name == "sgc") return BackboneKind::sgc();
  if (name == "gcn") return BackboneKind::gcn2();
  if (name == "appnp") return BackboneKind::appnp();
  throw ConfigError("unknown backbone '" + name +
                    "' (expected sgc, gcn, or appnp)");
}

std::pair<Modify, Modify> variant_from_name(const std::string& name) {
  if (name == "dt") return {Modify::Discretized, Modify::None};
  if (name == "ct") return {Modify::Continuous, Modify::None};
  if (name == "df") return {Modify::None, Modify::Discretized};
  if (name == "cf") return {Modify::None, Modify::Continuous};
  if (name == "dtcf") return {Modify::Discretized, Modify::Continuous};
  throw ConfigError("unknown variant '" + name +
                    "' (expected dt, ct, df, cf, or dtcf)");
}

SanitizeConfig sanitize_config_from(const Settings& s) {
  SanitizeConfig c;
  auto [topo, fea] = variant_from_name(s.variant);
  c.topology = topo;
  c.features = fea;
  c.rate_topo = s.rate_topo;
  c.rate_fea = s.rate_fea;
  c.steps = s.steps;
  c.folds = s.folds;
  c.backbone = backbone_from_name(s.backbone);
  c.train.iterations = s.iterations;
  c.train.truncate_at = s.truncate_at;
  c.train.learning_rate = s.learning_rate;
  c.train.weight_decay = s.weight_decay;
  if (s.optimizer == "adam") c.train.optimizer = Optimizer::Adam;
  else if (s.optimizer == "gd") c.train.optimizer = Optimizer::GradientDescent;
  else throw ConfigError("unknown optimizer '" + s.optimizer +
                         "' (expected adam or gd)");
  c.master_seed = s.seed;
  return c;
}

LrConfig lr_config_from(const Settings& s) {
  LrConfig c;
  c.rank = s.rank;
  c.step_size = s.lr_step_size;
  c.steps = s.lr_steps;
  c.normalize = s.lr_normalize;
  c.init_scale = s.lr_init_scale;
  return c;
}

SbmParams sbm_params_from(const Settings& s) {
  SbmParams p;
  p.n = s.gen_n;
  p.blocks = s.gen_blocks;
  p.p_in = s.gen_p_in;
  p.p_out = s.gen_p_out;
  p.labels_per_class = s.gen_labels_per_class;
  p.feature_dim = s.gen_feature_dim;
  p.feature_noise = s.gen_feature_noise;
  p.seed = s.seed;
  return p;
}

std::string audit_to_jsonl(const std::vector<StepAudit>& audit,
                           bool include_timing) {
  std::string out;
  for (const StepAudit& a : audit) {
    json j;
    j["step"] = a.step;
    j["fold_losses"] = a.fold_losses;
    j["spent_topo"] = a.budget_spent_topo;
    j["spent_fea"] = a.budget_spent_fea;
    j["flips"] = a.flips.size();
    j["delta_norm"] = a.delta_norm;
    j["wall_ms"] = include_timing ? a.wall_ms : 0.0;
    out += j.dump();
    out += '\n';
  }
  return out;
}

ExperimentResult run_experiment(const Settings& s, RunMode mode) {
  if (s.graph_dir.empty()) throw ConfigError("graph_dir is required");
  if (s.out_dir.empty()) throw ConfigError("out_dir is required");

  SanitizeConfig san = sanitize_config_from(s);
  LrConfig lr = lr_config_from(s);
  // Reject bad configuration before any data is loaded or any model trained.
  if (mode == RunMode::Budgeted) {
    san.validate();
  } else {
    san.backbone.validate();
    san.train.validate();
    lr.validate();
    if (san.folds < 2) throw ConfigError("fold count must be at least 2");
  }
  if (s.n_seeds < 1) throw ConfigError("n_seeds must be at least 1");

  auto [g, labels] = load_graph(s.graph_dir);
  labels = splits_or_default(labels, s.seed);
  g.validate();
  labels.validate(g.n);

  ExperimentResult res;
  res.before = eval_downstream(g, labels, san.backbone, san.train, s.n_seeds,
                               s.seed, s.include_timing);

  LowRankDelta factors;
  if (mode == RunMode::Budgeted) {
    SanitizeResult sr = sanitize(g, labels, san);
    res.graph = std::move(sr.graph);
    res.audit = std::move(sr.audit);
  } else {
    LrSanitizeResult lrr = lr_sanitize(g, labels, san, lr);
    res.graph = std::move(lrr.graph);
    res.audit = std::move(lrr.audit);
    factors = std::move(lrr.delta);
  }

  res.after = eval_downstream(res.graph, labels, san.backbone, san.train,
                              s.n_seeds, s.seed, s.include_timing);

  std::filesystem::path out(s.out_dir);
  std::filesystem::create_directories(out);
  save_graph(res.graph, labels, out / "graph");
  write_delta(out / "delta.tsv", g, res.graph);
  write_text(out / "audit.jsonl", audit_to_jsonl(res.audit, s.include_timing));
  write_text(out / "report_before.json", res.before.to_json());
  write_text(out / "report_after.json", res.after.to_json());
  if (mode == RunMode::LowRank) save_delta(factors, out / "factors");
  return res;
}

AuditScores run_audit(const Graph& benign, const Graph& poisoned,
                      const LabelSet& labels, const SanitizeConfig& cfg) {
  benign.validate();
  poisoned.validate();
  labels.validate(poisoned.n);
  cfg.backbone.validate();
  cfg.train.validate();
  if (cfg.folds < 2) throw ConfigError("fold count must be at least 2");

  FoldPlan plan =
      make_folds(labels, cfg.folds, derive_seed(cfg.master_seed, kFoldSeedTag));
  const int folds = plan.count();
  Matrix a = poisoned.dense_adjacency();
  const Matrix& x = poisoned.features;
  NormAdj adj = normalize_raw(a);

  std::vector<GraphGrad> fold_grads(static_cast<std::size_t>(folds));
  parallel_for(folds, [&](int k) {
    TrainConfig tc = cfg.train;
    // Same derivation the modification loop uses for its first step.
    tc.init_seed = derive_seed(cfg.master_seed, 1, std::uint64_t(k));
    TrainResult tr =
        train_dynamic(cfg.backbone, adj, x, labels, plan.train_of(k), tc);
    fold_grads[std::size_t(k)] = hypergrad_dense(cfg.backbone, a, x,
                                                 tr.snapshots, labels,
                                                 plan.valid_of(k));
  });

  GraphGrad total = aggregate_folds(fold_grads);
  Matrix cal = calibrate_symmetric(total.adjacency);
  ScoreMatrix s = score_matrix(cal, a);
  return score_audit(benign, poisoned, s);
}

std::vector<GradCheckRow> gradcheck(const BackboneKind& kind, int n,
                                    std::uint64_t seed) {
  kind.validate();
  if (n < 2) throw ConfigError("gradcheck needs at least two nodes");
  if (n > 16) throw ConfigError("gradcheck instances are capped at n = 16");

  const int d = 6;
  const int c = 3;
  const double h = 1e-5;

  // Seeded random instance: moderately dense binary graph, Gaussian
  // features, labels covering every class, half the nodes as the
  // validation slice, one random (untrained) parameter snapshot.
  Graph g;
  g.n = n;
  {
    SplitMix64 rng(derive_seed(seed, kCheckGraphTag));
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if (rng.next_double() < 0.4) g.edges.emplace_back(i, j);
      }
    }
    if (g.edges.empty()) g.edges.emplace_back(0, 1);
    g.features = Matrix(n, d);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < d; ++k) g.features(i, k) = rng.normal();
    }
  }
  LabelSet labels;
  labels.classes = c;
  labels.label.resize(std::size_t(n));
  {
    SplitMix64 rng(derive_seed(seed, kCheckGraphTag, 1));
    for (int v = 0; v < n; ++v) labels.label[std::size_t(v)] = int(rng.below(c));
    for (int v = 0; v < std::min(n, c); ++v) labels.label[std::size_t(v)] = v;
    for (int v = 0; v < n; ++v) labels.labeled_set.push_back(v);
  }
  std::vector<int> valid;
  for (int v = 0; v < n; v += 2) valid.push_back(v);

  ModelState params = init_params(kind, d, c, derive_seed(seed, kCheckParamTag));
  std::vector<ModelState> snaps{params};

  GraphGrad gg = graph_hypergrad(kind, g, snaps, labels, valid);

  auto loss_at = [&](const Matrix& a, const Matrix& x) {
    NormAdj adj = normalize_raw(a);
    return ce_loss(forward(kind, adj, x, params), labels, valid);
  };

  Matrix a0 = g.dense_adjacency();
  double worst_a = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      Matrix ap = a0, am = a0;
      ap(i, j) += h;
      am(i, j) -= h;
      double fd = (loss_at(ap, g.features) - loss_at(am, g.features)) / (2 * h);
      worst_a = std::max(worst_a, rel_err(gg.adjacency(i, j), fd));
    }
  }

  double worst_x = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) {
      Matrix xp = g.features, xm = g.features;
      xp(i, k) += h;
      xm(i, k) -= h;
      double fd = (loss_at(a0, xp) - loss_at(a0, xm)) / (2 * h);
      worst_x = std::max(worst_x, rel_err(gg.feature(i, k), fd));
    }
  }

  const int r = 2;
  LowRankDelta delta{Matrix(n, r), Matrix(n, r)};
  {
    // Small enough that every effective degree stays positive.
    SplitMix64 rng(derive_seed(seed, kCheckDeltaTag));
    for (int i = 0; i < n; ++i) {
      for (int l = 0; l < r; ++l) delta.u(i, l) = rng.uniform(-0.05, 0.05);
    }
    for (int i = 0; i < n; ++i) {
      for (int l = 0; l < r; ++l) delta.v(i, l) = rng.uniform(-0.05, 0.05);
    }
  }
  auto [du, dv] = lr_hypergrad(kind, g, delta, snaps, labels, valid);
  auto lr_loss = [&](const LowRankDelta& dl) {
    return ce_loss(lr_propagate(kind, g, dl, g.features, params), labels,
                   valid);
  };

  double worst_u = 0.0, worst_v = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int l = 0; l < r; ++l) {
      LowRankDelta up = delta, um = delta;
      up.u(i, l) += h;
      um.u(i, l) -= h;
      double fd = (lr_loss(up) - lr_loss(um)) / (2 * h);
      worst_u = std::max(worst_u, rel_err(du(i, l), fd));

      LowRankDelta vp = delta, vm = delta;
      vp.v(i, l) += h;
      vm.v(i, l) -= h;
      fd = (lr_loss(vp) - lr_loss(vm)) / (2 * h);
      worst_v = std::max(worst_v, rel_err(dv(i, l), fd));
    }
  }

  std::vector<GradCheckRow> rows;
  for (auto& [name, err] :
       std::vector<std::pair<std::string, double>>{{"dA", worst_a},
                                                   {"dX", worst_x},
                                                   {"dU", worst_u},
                                                   {"dV", worst_v}}) {
    rows.push_back({name, err, err < 1e-4});
  }
  return rows;
}

}  // namespace gasoline
