// Command-line front end: generation, attack, sanitation, evaluation,
// gradient diagnostics, and score audits over graph directories.
//
// Exit codes: 0 success, 2 configuration error, 3 data error,
// 4 numerical divergence, 1 anything unexpected.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gasoline/error.hpp"
#include "gasoline/harness.hpp"
#include "gasoline/lowrank.hpp"
#include "gasoline/perturb.hpp"
#include "gasoline/rng.hpp"
#include "gasoline/sanitize.hpp"

namespace {

using gasoline::Settings;

// Registers CLI options for one subcommand and merges them over config-file
// values after parsing, so precedence is CLI flag > config entry > default.
class Opts {
 public:
  explicit Opts(CLI::App* cmd) : cmd_(cmd) {
    cmd_->add_option("--config", config_file_,
                     "flat key=value config file ('#' comments)");
  }

  template <typename T>
  void add(const std::string& flag, T Settings::*field,
           const std::string& help) {
    auto holder = std::make_shared<T>();
    cmd_->add_option(flag, *holder, help);
    merges_.push_back([this, flag, field, holder](Settings& s) {
      if (cmd_->count(flag) > 0) s.*field = *holder;
    });
  }

  void add_no_timing() {
    auto holder = std::make_shared<bool>(false);
    cmd_->add_flag("--no-timing", *holder,
                   "zero wall-time fields so reports are byte-reproducible");
    merges_.push_back([holder](Settings& s) {
      if (*holder) s.include_timing = false;
    });
  }

  // Settings resolution order: defaults, then the config file, then any
  // flag the user actually passed.
  Settings resolve() const {
    Settings s;
    if (!config_file_.empty()) gasoline::apply_config_file(s, config_file_);
    for (const auto& m : merges_) m(s);
    return s;
  }

 private:
  CLI::App* cmd_;
  std::string config_file_;
  std::vector<std::function<void(Settings&)>> merges_;
};

void add_io_opts(Opts& o, bool graph, bool out) {
  if (graph) o.add("--graph", &Settings::graph_dir, "input graph directory");
  if (out) o.add("--out", &Settings::out_dir, "output directory");
  o.add("--seed", &Settings::seed, "master seed");
}

void add_train_opts(Opts& o) {
  o.add("--backbone", &Settings::backbone, "sgc | gcn | appnp");
  o.add("--T", &Settings::iterations, "inner training iterations");
  o.add("--P", &Settings::truncate_at,
        "truncation point: snapshots kept for steps > P");
  o.add("--learning-rate", &Settings::learning_rate, "inner learning rate");
  o.add("--weight-decay", &Settings::weight_decay, "inner weight decay");
  o.add("--optimizer", &Settings::optimizer, "adam | gd");
}

void add_sanitize_opts(Opts& o) {
  o.add("--variant", &Settings::variant, "dt | ct | df | cf | dtcf");
  o.add("--folds", &Settings::folds, "cross-validation folds K");
  o.add("--steps", &Settings::steps, "modification steps");
  o.add("--rate-topo", &Settings::rate_topo, "topology budget rate");
  o.add("--rate-fea", &Settings::rate_fea, "feature budget rate");
}

void add_lowrank_opts(Opts& o) {
  o.add("--rank", &Settings::rank, "factor rank r");
  o.add("--lr-step-size", &Settings::lr_step_size, "factor descent rate");
  o.add("--lr-steps", &Settings::lr_steps, "factor descent steps");
  o.add("--lr-normalize", &Settings::lr_normalize,
        "propagate with the normalized effective adjacency");
  o.add("--lr-init-scale", &Settings::lr_init_scale, "factor init scale");
}

void require_dir(const std::string& value, const std::string& flag) {
  if (value.empty()) {
    throw gasoline::ConfigError(flag + " is required");
  }
}

std::pair<gasoline::Graph, gasoline::LabelSet> load_with_splits(
    const Settings& s) {
  auto [g, labels] = gasoline::load_graph(s.graph_dir);
  labels = gasoline::splits_or_default(labels, s.seed);
  g.validate();
  labels.validate(g.n);
  return {std::move(g), std::move(labels)};
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw gasoline::DataError("cannot write " + p.string());
  out << text;
}

int cmd_gen(const Settings& s) {
  require_dir(s.out_dir, "--out");
  auto [g, labels] = gasoline::sbm_generate(gasoline::sbm_params_from(s));
  gasoline::save_graph(g, labels, s.out_dir);
  std::cout << "generated n=" << g.n << " m=" << g.num_edges()
            << " d=" << g.dim() << " classes=" << labels.classes << " -> "
            << s.out_dir << "\n";
  return 0;
}

int cmd_attack(const Settings& s) {
  require_dir(s.graph_dir, "--graph");
  require_dir(s.out_dir, "--out");
  auto [g, labels] = gasoline::load_graph(s.graph_dir);
  g.validate();
  auto [attacked, rec] = gasoline::random_attack(g, s.attack_rate, s.seed);
  std::filesystem::create_directories(s.out_dir);
  gasoline::save_graph(attacked, labels, std::filesystem::path(s.out_dir) / "graph");
  gasoline::save_attack(rec, std::filesystem::path(s.out_dir) / "attack.tsv");
  std::cout << "flipped " << rec.flips.size() << " pairs (rate "
            << s.attack_rate << ") -> " << s.out_dir << "\n";
  return 0;
}

int run_modification(const Settings& s, bool lowrank) {
  require_dir(s.graph_dir, "--graph");
  require_dir(s.out_dir, "--out");
  gasoline::SanitizeConfig san = gasoline::sanitize_config_from(s);
  gasoline::LrConfig lr = gasoline::lr_config_from(s);
  if (lowrank) {
    san.backbone.validate();
    san.train.validate();
    lr.validate();
  } else {
    san.validate();
  }
  auto [g, labels] = load_with_splits(s);

  std::filesystem::path out(s.out_dir);
  std::filesystem::create_directories(out);
  if (lowrank) {
    gasoline::LrSanitizeResult r = gasoline::lr_sanitize(g, labels, san, lr);
    gasoline::save_graph(r.graph, labels, out / "graph");
    gasoline::write_delta(out / "delta.tsv", g, r.graph);
    gasoline::save_delta(r.delta, out / "factors");
    write_file(out / "audit.jsonl",
               gasoline::audit_to_jsonl(r.audit, s.include_timing));
    std::cout << "low-rank sanitation: " << r.audit.size() << " steps, final "
              << "delta norm "
              << (r.audit.empty() ? 0.0 : r.audit.back().delta_norm) << " -> "
              << s.out_dir << "\n";
  } else {
    gasoline::SanitizeResult r = gasoline::sanitize(g, labels, san);
    gasoline::save_graph(r.graph, labels, out / "graph");
    gasoline::write_delta(out / "delta.tsv", g, r.graph);
    write_file(out / "audit.jsonl",
               gasoline::audit_to_jsonl(r.audit, s.include_timing));
    long spent_topo = r.audit.empty() ? 0 : r.audit.back().budget_spent_topo;
    long spent_fea = r.audit.empty() ? 0 : r.audit.back().budget_spent_fea;
    std::cout << "sanitation: " << r.audit.size() << " steps, spent "
              << spent_topo << " topology / " << spent_fea
              << " feature budget -> " << s.out_dir << "\n";
  }
  return 0;
}

int cmd_eval(const Settings& s) {
  require_dir(s.graph_dir, "--graph");
  gasoline::SanitizeConfig san = gasoline::sanitize_config_from(s);
  auto [g, labels] = load_with_splits(s);
  gasoline::RunReport r =
      gasoline::eval_downstream(g, labels, san.backbone, san.train, s.n_seeds,
                                s.seed, s.include_timing);
  std::cout << r.to_json();
  if (!s.out_dir.empty()) {
    std::filesystem::create_directories(s.out_dir);
    write_file(std::filesystem::path(s.out_dir) / "report.json", r.to_json());
  }
  return 0;
}

int cmd_run(const Settings& s, bool lowrank) {
  gasoline::ExperimentResult r = gasoline::run_experiment(
      s, lowrank ? gasoline::RunMode::LowRank : gasoline::RunMode::Budgeted);
  std::cout << "before: mean accuracy " << r.before.mean << " (std "
            << r.before.stddev << ")\n"
            << "after:  mean accuracy " << r.after.mean << " (std "
            << r.after.stddev << ")\n"
            << "reports written to " << s.out_dir << "\n";
  return 0;
}

int cmd_gradcheck(const Settings& s, int n) {
  gasoline::BackboneKind kind = gasoline::backbone_from_name(s.backbone);
  std::vector<gasoline::GradCheckRow> rows =
      gasoline::gradcheck(kind, n, s.seed);
  bool all_pass = true;
  for (const auto& row : rows) {
    std::printf("%-4s max_rel_err %.3e  %s\n", row.target.c_str(),
                row.max_rel_err, row.pass ? "pass" : "FAIL");
    all_pass = all_pass && row.pass;
  }
  std::printf("gradcheck %s (backbone %s, n=%d)\n",
              all_pass ? "passed" : "FAILED", s.backbone.c_str(), n);
  return 0;  // diagnostic: failures are reported, not raised
}

int cmd_audit(const Settings& s) {
  require_dir(s.graph_dir, "--graph");
  require_dir(s.clean_dir, "--clean");
  auto [poisoned, labels] = load_with_splits(s);
  auto [benign, benign_labels] = gasoline::load_graph(s.clean_dir);
  benign.validate();
  gasoline::SanitizeConfig san = gasoline::sanitize_config_from(s);
  gasoline::AuditScores scores =
      gasoline::run_audit(benign, poisoned, labels, san);
  nlohmann::json j;
  j["score_adv"] = scores.adv;
  j["score_benign_edge"] = scores.benign_edge;
  j["score_benign_non_edge"] = scores.benign_non_edge;
  j["separation"] = scores.adv > scores.benign_edge &&
                    scores.adv > scores.benign_non_edge;
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graph sanitation via truncated bilevel hyper-gradients"};
  app.require_subcommand(1);
  int exit_code = 0;

  CLI::App* gen = app.add_subcommand("gen", "generate a block-model graph");
  Opts gen_opts(gen);
  add_io_opts(gen_opts, false, true);
  gen_opts.add("--n", &Settings::gen_n, "node count");
  gen_opts.add("--blocks", &Settings::gen_blocks, "block count");
  gen_opts.add("--p-in", &Settings::gen_p_in, "within-block edge probability");
  gen_opts.add("--p-out", &Settings::gen_p_out,
               "cross-block edge probability");
  gen_opts.add("--labels-per-class", &Settings::gen_labels_per_class,
               "labeled pool size per class");
  gen_opts.add("--feature-dim", &Settings::gen_feature_dim, "feature width");
  gen_opts.add("--feature-noise", &Settings::gen_feature_noise,
               "feature noise scale");
  gen->callback([&] { exit_code = cmd_gen(gen_opts.resolve()); });

  CLI::App* attack = app.add_subcommand("attack", "random structural attack");
  Opts attack_opts(attack);
  add_io_opts(attack_opts, true, true);
  attack_opts.add("--rate", &Settings::attack_rate,
                  "flip budget as a fraction of the edge count");
  attack->callback([&] { exit_code = cmd_attack(attack_opts.resolve()); });

  CLI::App* sanitize =
      app.add_subcommand("sanitize", "budgeted graph modification");
  Opts sanitize_opts(sanitize);
  add_io_opts(sanitize_opts, true, true);
  add_train_opts(sanitize_opts);
  add_sanitize_opts(sanitize_opts);
  sanitize_opts.add_no_timing();
  sanitize->callback(
      [&] { exit_code = run_modification(sanitize_opts.resolve(), false); });

  CLI::App* lr_san =
      app.add_subcommand("lr-sanitize", "low-rank graph modification");
  Opts lr_opts(lr_san);
  add_io_opts(lr_opts, true, true);
  add_train_opts(lr_opts);
  lr_opts.add("--folds", &Settings::folds, "cross-validation folds K");
  add_lowrank_opts(lr_opts);
  lr_opts.add_no_timing();
  lr_san->callback(
      [&] { exit_code = run_modification(lr_opts.resolve(), true); });

  CLI::App* eval = app.add_subcommand("eval", "downstream evaluation report");
  Opts eval_opts(eval);
  add_io_opts(eval_opts, true, true);
  add_train_opts(eval_opts);
  eval_opts.add("--n-seeds", &Settings::n_seeds, "downstream training seeds");
  eval_opts.add_no_timing();
  eval->callback([&] { exit_code = cmd_eval(eval_opts.resolve()); });

  CLI::App* run = app.add_subcommand(
      "run", "full experiment: evaluate, sanitize, evaluate, report");
  Opts run_opts(run);
  add_io_opts(run_opts, true, true);
  add_train_opts(run_opts);
  add_sanitize_opts(run_opts);
  add_lowrank_opts(run_opts);
  run_opts.add("--n-seeds", &Settings::n_seeds, "downstream training seeds");
  run_opts.add_no_timing();
  bool run_lowrank = false;
  run->add_flag("--lowrank", run_lowrank,
                "use the low-rank variant instead of the budgeted loop");
  run->callback(
      [&] { exit_code = cmd_run(run_opts.resolve(), run_lowrank); });

  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "finite-difference derivative check");
  Opts gc_opts(gradcheck);
  gc_opts.add("--backbone", &Settings::backbone, "sgc | gcn | appnp");
  gc_opts.add("--seed", &Settings::seed, "instance seed");
  int gc_n = 10;
  gradcheck->add_option("--n", gc_n, "node count (<= 16)");
  gradcheck->callback(
      [&] { exit_code = cmd_gradcheck(gc_opts.resolve(), gc_n); });

  CLI::App* audit =
      app.add_subcommand("audit", "flip-score audit of a poisoned graph");
  Opts audit_opts(audit);
  add_io_opts(audit_opts, true, false);
  audit_opts.add("--clean", &Settings::clean_dir,
                 "unpoisoned reference graph directory");
  add_train_opts(audit_opts);
  audit_opts.add("--folds", &Settings::folds, "cross-validation folds K");
  audit->callback([&] { exit_code = cmd_audit(audit_opts.resolve()); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const gasoline::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const gasoline::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const gasoline::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return exit_code;
}
