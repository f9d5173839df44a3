// pal: command-line front end for the selection engine.
//
//   pal match      assign pre-NMS counts (and TP/FP labels given ground truth)
//   pal train-clc  fit the per-class TP/FP classifiers
//   pal score      instance uncertainty for an unlabelled pool
//   pal select     one selection round -> manifest and updated state
//   pal simulate   synthetic multi-round campaigns
//   pal report     print a campaign report
//
// Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 internal error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pal/pal.hpp"

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  int verbosity = 0;
};

pal::SelectionConfig load_cfg(const Globals& g) {
  auto cfg = g.config.empty() ? pal::SelectionConfig{} : pal::io::load_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  return cfg;
}

void note(const Globals& g, const std::string& msg) {
  if (g.verbosity > 0) std::cerr << msg << "\n";
}

// ---------------------------------------------------------------- match

struct MatchArgs {
  std::string detections, proposals, gt, out;
};

int cmd_match(const Globals& g, const MatchArgs& a) {
  const auto cfg = load_cfg(g);
  auto dump = pal::io::load_detection_dump(a.detections, fs::path(a.proposals));
  pal::assign_pre_nms_counts(dump, cfg.iou_prenms);
  if (!a.gt.empty()) {
    const auto gt = pal::io::load_ground_truth(a.gt);
    if (gt.classes != dump.classes) {
      throw pal::ValidationError("ground truth and detections declare different class lists");
    }
    pal::label_tp_fp(dump.detections, gt, cfg.iou_tp);
  }
  pal::io::write_detection_dump(dump, a.out, /*with_proposals=*/false);
  note(g, "matched " + std::to_string(dump.detections.size()) + " detections against " +
              std::to_string(dump.proposals.size()) + " proposals");
  return 0;
}

// ---------------------------------------------------------------- train-clc

struct TrainArgs {
  std::string labelled, out;
};

int cmd_train(const Globals& g, const TrainArgs& a) {
  const auto cfg = load_cfg(g);
  const auto dump = pal::io::load_detection_dump(a.labelled);
  const auto set = pal::train_classifiers(dump.detections, dump.classes.size(), cfg.classifier);
  pal::io::write_text(a.out, pal::io::format_classifiers(set, dump.classes));
  std::size_t trained = 0;
  for (const auto& m : set.per_class) trained += m.trained;
  note(g, std::to_string(trained) + "/" + std::to_string(set.per_class.size()) +
              " class models trained" + (set.fallback.trained ? ", fallback trained" : ""));
  return 0;
}

// ---------------------------------------------------------------- score

struct ScoreArgs {
  std::string unlabelled, models, labelled, out;
};

int cmd_score(const Globals& g, const ScoreArgs& a) {
  const auto cfg = load_cfg(g);
  if (a.models.empty() == a.labelled.empty()) {
    throw pal::UsageError("score needs exactly one of --models or --labelled");
  }
  auto pool = pal::io::load_detection_dump(a.unlabelled);
  if (!pool.proposals.empty()) pal::assign_pre_nms_counts(pool, cfg.iou_prenms);
  pal::ClassifierSet set;
  if (!a.models.empty()) {
    std::vector<std::string> classes;
    set = pal::io::load_classifiers(a.models, &classes);
    if (classes != pool.classes) throw pal::ValidationError("classifier and pool class lists differ");
  } else {
    const auto lab = pal::io::load_detection_dump(a.labelled);
    if (lab.classes != pool.classes) throw pal::ValidationError("labelled and unlabelled class lists differ");
    set = pal::train_classifiers(lab.detections, lab.classes.size(), cfg.classifier);
  }
  const auto scores = pal::score_instances(pool.detections, set);
  pal::io::write_text(a.out, pal::io::format_instance_scores(scores, pool.classes));
  note(g, "scored " + std::to_string(scores.size()) + " instances");
  return 0;
}

// ---------------------------------------------------------------- select

struct SelectArgs {
  std::string labelled, unlabelled, embeddings, state, out, state_out;
  std::optional<std::size_t> budget;
};

int cmd_select(const Globals& g, const SelectArgs& a) {
  const auto cfg = load_cfg(g);
  auto lab = pal::io::load_detection_dump(a.labelled);
  auto unl = pal::io::load_detection_dump(a.unlabelled);
  if (lab.classes != unl.classes) throw pal::ValidationError("labelled and unlabelled class lists differ");
  if (!lab.proposals.empty()) pal::assign_pre_nms_counts(lab, cfg.iou_prenms);
  if (!unl.proposals.empty()) pal::assign_pre_nms_counts(unl, cfg.iou_prenms);
  const auto emb = pal::io::load_embeddings(a.embeddings);

  pal::RoundState state;
  if (!a.state.empty()) {
    state = pal::io::load_round_state(a.state);
  } else {
    state.labelled.insert(lab.images.begin(), lab.images.end());
    state.unlabelled.insert(unl.images.begin(), unl.images.end());
    state.budget = cfg.budget_b;
  }
  if (a.budget) state.budget = *a.budget;

  for (const auto& d : unl.detections) {
    if (!state.unlabelled.contains(d.image_id)) {
      throw pal::ValidationError("unlabelled detection on image " + std::to_string(d.image_id) +
                                 " outside the unlabelled pool");
    }
  }
  for (const auto& d : lab.detections) {
    if (!state.labelled.contains(d.image_id)) {
      throw pal::ValidationError("labelled detection on image " + std::to_string(d.image_id) +
                                 " outside the labelled pool");
    }
  }

  const auto res = pal::select_round(lab.detections, unl.detections, lab.classes.size(), emb, cfg, state);
  pal::io::write_selection_manifest(res.manifest, a.out);
  if (!a.state_out.empty()) pal::io::write_round_state(pal::update_pools(state, res.manifest), a.state_out);
  note(g, "round " + std::to_string(res.manifest.round) + ": selected " +
              std::to_string(res.manifest.total_selected()) + " of budget " + std::to_string(state.budget));
  return 0;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string strategy = "all";
  std::size_t rounds = 4;
  std::size_t budget = 100;
  std::optional<std::size_t> images, classes;
  std::optional<double> exponent;
  std::string out, emit_dir;
};

int cmd_simulate(const Globals& g, const SimulateArgs& a) {
  pal::sim::WorldParams params;
  pal::SelectionConfig cfg;
  if (!g.config.empty()) {
    const auto j = pal::io::parse_json_file(g.config);
    cfg = pal::io::parse_config(j);
    if (j.contains("world")) params = pal::sim::parse_world_params(j["world"]);
  }
  if (g.seed) cfg.seed = *g.seed;
  if (a.images) params.num_images = *a.images;
  if (a.classes) params.num_classes = *a.classes;
  if (a.exponent) params.class_exponent = *a.exponent;
  pal::sim::validate(params);

  std::vector<pal::sim::Strategy> strategies;
  if (a.strategy == "all") {
    strategies = {pal::sim::Strategy::random, pal::sim::Strategy::entropy, pal::sim::Strategy::pal};
  } else {
    strategies = {pal::sim::parse_strategy(a.strategy)};
  }

  pal::sim::CampaignOptions opt;
  opt.rounds = a.rounds;
  opt.budget = a.budget;
  opt.seed = cfg.seed;
  opt.selection = cfg;
  if (!a.emit_dir.empty()) opt.emit_dir = a.emit_dir;

  const auto world = pal::sim::generate_world(params, opt.seed);
  const auto report = pal::sim::run_campaigns(world, strategies, opt);
  pal::io::write_text(a.out, pal::sim::format_campaign_report(report));
  note(g, "wrote " + std::to_string(report.curves.size()) + " curve(s) to " + a.out);
  return 0;
}

// ---------------------------------------------------------------- report

struct ReportArgs {
  std::string in;
};

int cmd_report(const Globals&, const ReportArgs& a) {
  const auto rep = pal::sim::parse_campaign_report(pal::io::read_text(a.in), a.in);
  std::printf("campaign seed=%llu rounds=%zu budget=%zu images=%zu classes=%zu\n",
              static_cast<unsigned long long>(rep.seed), rep.rounds, rep.budget, rep.params.num_images,
              rep.params.num_classes);
  std::printf("%-8s %5s %9s %9s %9s %10s %9s\n", "strategy", "round", "labelled", "fraction", "proxy",
              "rare_share", "rare_acc");
  for (const auto& c : rep.curves) {
    for (const auto& r : c.rounds) {
      std::printf("%-8s %5u %9zu %9.4f %9.4f %10.4f %9.4f\n", pal::sim::to_string(c.strategy).c_str(),
                  r.round, r.labelled_images, r.labelled_fraction, r.proxy, r.rare_share,
                  r.rare_clc_accuracy);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active-learning selection engine for object detection"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Selection config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Random seed (default 0)");
  app.add_flag("-v,--verbose", g.verbosity, "Print progress to stderr");

  MatchArgs ma;
  auto* match = app.add_subcommand("match", "Assign pre-NMS counts and TP/FP labels");
  match->add_option("--detections", ma.detections, "Detection file")->required()->check(CLI::ExistingFile);
  match->add_option("--proposals", ma.proposals, "Pre-NMS proposal file")->required()->check(CLI::ExistingFile);
  match->add_option("--gt", ma.gt, "Ground truth; adds TP/FP labels when given")->check(CLI::ExistingFile);
  match->add_option("--out", ma.out, "Output detection file")->required();

  TrainArgs ta;
  auto* train = app.add_subcommand("train-clc", "Train per-class TP/FP classifiers");
  train->add_option("--labelled", ta.labelled, "Matched labelled detections")->required()->check(CLI::ExistingFile);
  train->add_option("--out", ta.out, "Output classifier file")->required();

  ScoreArgs sa;
  auto* score = app.add_subcommand("score", "Score unlabelled instances");
  score->add_option("--unlabelled", sa.unlabelled, "Matched unlabelled detections")->required()->check(CLI::ExistingFile);
  score->add_option("--models", sa.models, "Classifier file from train-clc")->check(CLI::ExistingFile);
  score->add_option("--labelled", sa.labelled, "Matched labelled detections (train in place)")->check(CLI::ExistingFile);
  score->add_option("--out", sa.out, "Output score file")->required();

  SelectArgs se;
  auto* select = app.add_subcommand("select", "Run one selection round");
  select->add_option("--labelled", se.labelled, "Matched labelled detections")->required()->check(CLI::ExistingFile);
  select->add_option("--unlabelled", se.unlabelled, "Matched unlabelled detections")->required()->check(CLI::ExistingFile);
  select->add_option("--embeddings", se.embeddings, "PALEMB1 embedding file")->required()->check(CLI::ExistingFile);
  select->add_option("--state", se.state, "Round state (JSON); derived from the dumps when omitted")->check(CLI::ExistingFile);
  select->add_option("--budget", se.budget, "Images to select this round (overrides state)");
  select->add_option("--out", se.out, "Output manifest")->required();
  select->add_option("--state-out", se.state_out, "Write the updated round state here");

  SimulateArgs si;
  auto* simulate = app.add_subcommand("simulate", "Run synthetic campaigns");
  simulate->add_option("--strategy", si.strategy, "random | entropy | pal | all")
      ->check(CLI::IsMember({"random", "entropy", "pal", "all"}));
  simulate->add_option("--rounds", si.rounds, "Selection rounds");
  simulate->add_option("--budget", si.budget, "Images per round");
  simulate->add_option("--images", si.images, "Pool size override");
  simulate->add_option("--classes", si.classes, "Class count override");
  simulate->add_option("--exponent", si.exponent, "Class frequency exponent override");
  simulate->add_option("--emit-dir", si.emit_dir, "Write per-round input files here");
  simulate->add_option("--out", si.out, "Output campaign report")->required();

  ReportArgs ra;
  auto* report = app.add_subcommand("report", "Print a campaign report");
  report->add_option("--in", ra.in, "Campaign report file")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*match) return cmd_match(g, ma);
    if (*train) return cmd_train(g, ta);
    if (*score) return cmd_score(g, sa);
    if (*select) return cmd_select(g, se);
    if (*simulate) return cmd_simulate(g, si);
    if (*report) return cmd_report(g, ra);
  } catch (const pal::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const pal::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
