#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cli/config.hpp"

namespace sparsetab::cli {

namespace fs = std::filesystem;

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"synth", "mask",   "train",  "eval",
                                              "importance", "ablate", "select", "transfer"};
  return names;
}

// One command invocation over a resolved config.
struct Run {
  std::string command;
  json config;
  fs::path out;
  std::map<std::string, std::string> inputs;  // path -> sha256
  mutable std::set<std::string> written;       // output file names

  std::uint64_t seed() const { return get<std::uint64_t>(config, "seed"); }
  std::size_t threads() const { return std::max<std::size_t>(1, get_count(config, "threads")); }
  std::string path(const std::string& name) const {
    written.insert(name);
    return (out / name).string();
  }

  std::string input(const std::string& p) {
    if (!fs::exists(p)) throw IoError("input file '" + p + "' does not exist");
    inputs[p] = file_hash(p);
    return p;
  }

  void write_json(const std::string& name, const json& j) const {
    std::ofstream f(path(name), std::ios::binary);
    if (!f) throw IoError("cannot write '" + path(name) + "'");
    f << j.dump(2) << '\n';
  }
};

// Hash over the settings that determine results (out and threads excluded).
inline json result_config(const json& cfg) {
  json c = cfg;
  c.erase("out");
  c.erase("threads");
  return c;
}

inline std::string config_hash(const json& cfg) { return sha256_hex(result_config(cfg).dump()); }

inline std::map<std::string, std::string> output_hashes(const fs::path& dir,
                                                        const std::set<std::string>& names) {
  std::map<std::string, std::string> out;
  for (const auto& n : names) out[n] = file_hash((dir / n).string());
  return out;
}

inline json make_manifest(const Run& run) {
  return {{"command", run.command},
          {"config", run.config},
          {"config_hash", config_hash(run.config)},
          {"seed", run.seed()},
          {"versions",
           {{"sparsetab", kLibraryVersion},
            {"model_format", kModelFormatVersion},
            {"rng", Rng::kVersion}}},
          {"inputs", run.inputs},
          {"outputs", output_hashes(run.out, run.written)}};
}

// ---------------------------------------------------------------------------
// Data and model plumbing

enum class Task { multiclass, binary, survival };

inline Task task_of(const json& cfg) {
  const auto t = get<std::string>(cfg, "task");
  if (t == "multiclass") return Task::multiclass;
  if (t == "binary") return Task::binary;
  if (t == "survival") return Task::survival;
  throw ConfigError("task", "task must be multiclass, binary or survival, got '" + t + "'");
}

inline CsvColumns csv_columns(const json& cfg) {
  CsvColumns c;
  if (task_of(cfg) == Task::survival) {
    c.time = get<std::string>(cfg, "data.time");
    c.event = get<std::string>(cfg, "data.event");
  } else {
    c.label = get<std::string>(cfg, "data.label");
  }
  return c;
}

struct LoadedData {
  Dataset data;
  std::vector<std::size_t> informative;  // synthetic classification only
  std::vector<double> beta;              // synthetic survival only
};

inline SyntheticSpec synthetic_spec(const json& s, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n_samples = get_count(s, "n_samples");
  spec.n_features = get_count(s, "n_features");
  spec.n_informative = get_count(s, "n_informative");
  spec.n_classes = get_count(s, "n_classes");
  spec.class_sep = get<double>(s, "class_sep");
  spec.seed = seed;
  return spec;
}

inline SurvivalSpec survival_spec(const json& s, std::uint64_t seed) {
  SurvivalSpec spec;
  spec.n_samples = get_count(s, "n_samples");
  spec.n_features = get_count(s, "n_features");
  spec.n_informative = get_count(s, "n_informative");
  spec.censor_fraction = get<double>(s, "censor_fraction");
  spec.effect = get<double>(s, "effect");
  spec.seed = seed;
  return spec;
}

// Raw (unstandardized) data from the configured source.
inline LoadedData load_raw(Run& run) {
  const json& cfg = run.config;
  LoadedData out;
  if (is_set(cfg, "data.csv")) {
    out.data = load_csv(run.input(get<std::string>(cfg, "data.csv")), csv_columns(cfg));
  } else if (is_set(cfg, "data.survival_synthetic")) {
    auto s = make_survival(survival_spec(cfg.at("data").at("survival_synthetic"), run.seed()));
    out.data = std::move(s.data);
    out.beta = std::move(s.beta);
  } else if (is_set(cfg, "data.synthetic")) {
    auto s = make_classification(synthetic_spec(cfg.at("data").at("synthetic"), run.seed()));
    out.data = std::move(s.data);
    out.informative = std::move(s.informative);
  } else {
    throw ConfigError("data", "no data source: set data.csv, data.synthetic or data.survival_synthetic");
  }
  const Task task = task_of(cfg);
  if (task == Task::survival && !out.data.survival)
    throw ConfigError("task", "survival task needs time and event columns");
  if (task != Task::survival && !out.data.labels)
    throw ConfigError("task", "classification task needs a label column");
  if (task == Task::binary && out.data.n_classes() > 2)
    throw InvalidArgument("binary task needs labels in {0, 1}");
  return out;
}

inline LoadedData load_data(Run& run) {
  LoadedData d = load_raw(run);
  if (get<bool>(run.config, "standardize")) d.data = standardize(d.data).first;
  return d;
}

inline HeadSpec head_for_task(Task task, const Dataset& d) {
  switch (task) {
    case Task::multiclass: return {HeadKind::softmax_classifier, std::max<std::size_t>(d.n_classes(), 2)};
    case Task::binary: return {HeadKind::sigmoid_binary, 1};
    case Task::survival: return {HeadKind::linear_risk, 1};
  }
  return {};
}

inline SpecBuilder make_builder(Run& run, const Dataset& full) {
  const json& cfg = run.config;
  const auto arch = architecture(cfg);
  const HeadSpec head = head_for_task(task_of(cfg), full);
  const auto source = get<std::string>(cfg, "mask.source");
  if (source == "identity") return identity_builder(arch, head);
  if (source == "random_walk") return random_walk_builder(walk_options(cfg, 0), arch, head);
  if (source == "grouping") {
    if (!is_set(cfg, "mask.grouping_csv"))
      throw ConfigError("mask.grouping_csv", "grouping mask needs mask.grouping_csv");
    const auto groups = load_grouping_csv(run.input(get<std::string>(cfg, "mask.grouping_csv")));
    return fixed_mask_builder(groups_to_mask(groups, full.feature_names), arch, head);
  }
  if (source == "kmeans") {
    KSelection sel;
    if (is_set(cfg, "mask.k")) sel.k = get_count(cfg, "mask.k");
    return [sel, arch, head](const Dataset& train, std::uint64_t seed) {
      return make_network(train.n_features(), kmeans_mask(train.x, sel, seed, train.feature_names), head,
                          arch);
    };
  }
  throw ConfigError("mask.source", "mask.source must be identity, grouping, random_walk or kmeans, got '" +
                                       source + "'");
}

struct LoadedModel {
  ModelFile file;
  std::optional<ScalerParams> scaler;
  std::vector<std::string> feature_names;
};

inline LoadedModel load_model_input(Run& run) {
  if (!is_set(run.config, "model")) throw ConfigError("model", "this command needs a model (--model)");
  LoadedModel m;
  m.file = load_model(run.input(get<std::string>(run.config, "model")));
  const json& meta = m.file.metadata;
  if (meta.contains("scaler"))
    m.scaler = ScalerParams{meta["scaler"]["mean"].get<std::vector<double>>(),
                            meta["scaler"]["std"].get<std::vector<double>>()};
  if (meta.contains("feature_names")) m.feature_names = meta["feature_names"].get<std::vector<std::string>>();
  return m;
}

// Dataset prepared the way the model saw its training data.
inline Dataset model_view(const LoadedModel& m, Dataset d) {
  if (!m.feature_names.empty() && d.feature_names != m.feature_names)
    throw ShapeError("data features differ from the model's training features");
  if (m.scaler) d = apply_scaler(d, *m.scaler);
  return d;
}

inline TrainConfig model_train_config(const LoadedModel& m, const json& fallback) {
  const json& meta = m.file.metadata;
  return train_config(meta.contains("config") ? meta["config"] : fallback);
}

inline std::string metric_name(const NetworkSpec& spec) {
  return spec.head.kind == HeadKind::linear_risk ? "c_index" : "accuracy";
}

inline json summary_json(std::span<const double> v) {
  const Summary s = summarize(v);
  return {{"per_fold", std::vector<double>(v.begin(), v.end())}, {"mean", s.mean}, {"sd", s.sd}};
}

// ---------------------------------------------------------------------------
// Commands

inline void cmd_synth(Run& run) {
  json& cfg = run.config;
  if (!is_set(cfg, "data.synthetic") && !is_set(cfg, "data.survival_synthetic")) {
    if (task_of(cfg) == Task::survival) cfg["data"]["survival_synthetic"] = survival_defaults();
    else cfg["data"]["synthetic"] = synthetic_defaults();
  }
  if (is_set(cfg, "data.csv")) throw ConfigError("data.csv", "synth generates data; data.csv must be unset");
  const LoadedData d = load_raw(run);
  write_csv(d.data, run.path("data.csv"), get<std::string>(cfg, "data.label"),
            get<std::string>(cfg, "data.time"), get<std::string>(cfg, "data.event"));
  csv::Writer truth(run.path("truth.csv"));
  truth.comment("seed", std::to_string(run.seed()));
  if (!d.beta.empty()) {
    truth.row({"index", "feature", "beta"});
    for (std::size_t j = 0; j < d.beta.size(); ++j)
      if (d.beta[j] != 0.0)
        truth.row({std::to_string(j), d.data.feature_names[j], csv::format_double(d.beta[j])});
  } else {
    truth.row({"index", "feature"});
    for (auto j : d.informative) truth.row({std::to_string(j), d.data.feature_names[j]});
  }
  run.write_json("report.json", {{"rows", d.data.n_rows()},
                                 {"features", d.data.n_features()},
                                 {"informative", d.beta.empty() ? d.informative.size()
                                                                : static_cast<std::size_t>(std::count_if(
                                                                      d.beta.begin(), d.beta.end(),
                                                                      [](double b) { return b != 0.0; }))}});
}

inline void cmd_mask(Run& run) {
  const LoadedData d = load_data(run);
  const SpecBuilder builder = make_builder(run, d.data);
  const NetworkSpec spec = builder(d.data, run.seed());
  const MaskMatrix& m = spec.masks.front();
  write_mask_csv(m, run.path("mask.csv"));
  write_mask_metadata(m, run.path("mask_meta.txt"));
  run.write_json("report.json", {{"features", m.n_features()},
                                 {"units", m.n_units()},
                                 {"nnz", m.nnz()},
                                 {"pruned_columns", m.pruned_columns},
                                 {"warnings", m.warnings}});
}

inline void cmd_train(Run& run) {
  const json& cfg = run.config;
  LoadedData raw = load_raw(run);
  std::optional<ScalerParams> scaler;
  Dataset d = raw.data;
  if (get<bool>(cfg, "standardize")) {
    auto [std_data, params] = standardize(d);
    d = std::move(std_data);
    scaler = std::move(params);
  }
  const Split s = split(d, get<double>(cfg, "evaluation.test_fraction"), run.seed());
  const NetworkSpec spec = make_builder(run, d)(s.train, derive_seed(run.seed(), 11));
  TrainConfig tc = train_config(cfg);
  tc.seed = derive_seed(run.seed(), 12);
  const TrainResult r = train(spec, s.train, tc, &s.test);
  const double metric = evaluate(spec, r.params, s.test);

  json meta = {{"task", get<std::string>(cfg, "task")},
               {"feature_names", d.feature_names},
               {"config", result_config(cfg)},
               {"test_" + metric_name(spec), metric}};
  if (scaler) meta["scaler"] = {{"mean", scaler->mean}, {"std", scaler->std}};
  save_model(spec, r.params, run.path("model.bin"), meta);
  write_history_csv(r.history, run.path("history.csv"));
  run.write_json("report.json", {{"metric", metric_name(spec)},
                                 {"test", metric},
                                 {"n_train", s.train.n_rows()},
                                 {"n_test", s.test.n_rows()},
                                 {"final_loss", r.history.epochs.back().loss}});
}

inline void cmd_eval(Run& run) {
  const LoadedModel m = load_model_input(run);
  const Dataset d = model_view(m, load_raw(run).data);
  const NetworkSpec& spec = m.file.spec;
  const double model_score = evaluate(spec, m.file.params, d);
  json report = {{"metric", metric_name(spec)}, {"model_score", model_score}};
  const std::size_t repeats = get_count(run.config, "evaluation.repeats");
  if (repeats > 0) {
    const TrainConfig tc = model_train_config(m, run.config);
    const SpecBuilder same = [spec](const Dataset&, std::uint64_t) { return spec; };
    const double tf = get<double>(run.config, "evaluation.test_fraction");
    const auto folds = parallel_map<double>(repeats, run.threads(), [&](std::size_t r) {
      return run_trial(d, same, tc, tf, derive_seed(run.seed(), r)).metric;
    });
    report["repeats"] = repeats;
    report.update(summary_json(folds));
  }
  run.write_json("report.json", report);
}

inline void cmd_importance(Run& run) {
  const LoadedModel m = load_model_input(run);
  const Dataset d = model_view(m, load_raw(run).data);
  ImportanceReport r = feature_importance(m.file.spec, m.file.params, d);
  r.model_id = run.inputs.at(get<std::string>(run.config, "model")).substr(0, 16);
  r.dataset_id = is_set(run.config, "data.csv") ? run.inputs.at(get<std::string>(run.config, "data.csv")).substr(0, 16)
                                                : "synthetic";
  write_importance_csv(r, run.path("importance.csv"), {{"seed", std::to_string(run.seed())},
                                                        {"config_hash", config_hash(run.config)}});
  json top = json::array();
  for (auto j : r.descending()) {
    if (top.size() == 10) break;
    top.push_back({{"feature", r.feature_names[j]}, {"importance", r.importance[j]}});
  }
  run.write_json("report.json", {{"n_samples", r.n_samples}, {"top", top}});
}

inline std::map<std::string, std::string> csv_meta(const Run& run) {
  return {{"seed", std::to_string(run.seed())},
          {"config_hash", config_hash(run.config)},
          {"provenance", get<std::string>(run.config, "mask.source")}};
}

// Mean importance over several models trained on the full dataset.
inline ImportanceReport ensemble_importance(Run& run, const Dataset& d, const SpecBuilder& builder) {
  const std::size_t models = std::max<std::size_t>(1, get_count(run.config, "importance.models"));
  const TrainConfig base = train_config(run.config);
  const auto reports = parallel_map<ImportanceReport>(models, run.threads(), [&](std::size_t m) {
    const NetworkSpec spec = builder(d, derive_seed(run.seed(), 200 + m));
    TrainConfig tc = base;
    tc.seed = derive_seed(run.seed(), 300 + m);
    return feature_importance(spec, train(spec, d, tc).params, d);
  });
  return average_reports(reports);
}

inline void cmd_ablate(Run& run) {
  const json& cfg = run.config;
  const LoadedData loaded = load_data(run);
  const Dataset& d = loaded.data;
  const auto mode = get<std::string>(cfg, "ablation.mode");
  const double tf = get<double>(cfg, "evaluation.test_fraction");
  const std::size_t repeats = get_count(cfg, "evaluation.repeats");

  if (mode == "walk") {
    WalkAblationOptions opt;
    opt.mask = walk_options(cfg, 0);
    opt.arch = architecture(cfg);
    opt.repeats = repeats;
    opt.n_remove = get_count(cfg, "ablation.n_remove");
    opt.test_fraction = tf;
    opt.seed = run.seed();
    opt.train = train_config(cfg);
    opt.threads = run.threads();
    const WalkAblationSummary s = walk_ablation(d, opt);
    {
      csv::Writer w(run.path("walk_tally.csv"));
      for (const auto& [k, v] : csv_meta(run)) w.comment(k, v);
      w.row({"feature", "index", "count"});
      for (std::size_t j = 0; j < s.tally.size(); ++j)
        w.row({d.feature_names[j], std::to_string(j), std::to_string(s.tally[j])});
    }
    {
      csv::Writer w(run.path("walk_ablation.csv"));
      for (const auto& [k, v] : csv_meta(run)) w.comment(k, v);
      w.comment("positive_class", std::to_string(s.positive_class));
      w.row({"arm", "repeat", "accuracy", "false_positive", "false_negative", "removed"});
      auto names = [&](const std::vector<std::size_t>& idx) {
        std::string out;
        for (std::size_t k = 0; k < idx.size(); ++k) out += (k ? ";" : "") + d.feature_names[idx[k]];
        return out;
      };
      for (std::size_t r = 0; r < repeats; ++r) {
        w.row({"targeted", std::to_string(r), csv::format_double(s.targeted_metrics.accuracy[r]),
               csv::format_double(s.targeted_metrics.false_positive[r]),
               csv::format_double(s.targeted_metrics.false_negative[r]), names(s.targeted)});
        w.row({"random", std::to_string(r), csv::format_double(s.random_metrics.accuracy[r]),
               csv::format_double(s.random_metrics.false_positive[r]),
               csv::format_double(s.random_metrics.false_negative[r]), names(s.random_sets[r])});
      }
    }
    auto arm = [](const ArmMetrics& a) {
      return json{{"accuracy", a.mean_accuracy},
                  {"false_positive", a.mean_false_positive},
                  {"false_negative", a.mean_false_negative}};
    };
    run.write_json("report.json", {{"mode", mode},
                                   {"targeted", arm(s.targeted_metrics)},
                                   {"random", arm(s.random_metrics)},
                                   {"top_walk_members", s.top_walk_members}});
    return;
  }
  if (mode != "morf" && mode != "lerf")
    throw ConfigError("ablation.mode", "ablation.mode must be morf, lerf or walk, got '" + mode + "'");

  const SpecBuilder builder = make_builder(run, d);
  ImportanceReport importance = ensemble_importance(run, d, builder);
  write_importance_csv(importance, run.path("importance.csv"), csv_meta(run));
  AblationOptions opt;
  opt.steps = get_count(cfg, "ablation.steps");
  opt.repeats = repeats;
  opt.seed = derive_seed(run.seed(), 400);
  opt.test_fraction = tf;
  opt.train = train_config(cfg);
  opt.threads = run.threads();
  if (is_set(cfg, "ablation.checkpoints"))
    opt.checkpoints = get<std::vector<std::size_t>>(cfg, "ablation.checkpoints");
  const AblationCurve c = mode == "morf" ? morf(d, builder, importance, opt) : lerf(d, builder, importance, opt);
  auto meta = csv_meta(run);
  meta["mode"] = mode;
  write_ablation_csv(c, d, run.path("ablation.csv"), meta);
  run.write_json("report.json", {{"mode", mode}, {"removal_counts", c.removal_counts}, {"mean", c.mean}, {"sd", c.sd}});
}

inline void cmd_select(Run& run) {
  const json& cfg = run.config;
  const Dataset d = load_data(run).data;
  const SpecBuilder builder = make_builder(run, d);
  SelectionOptions opt;
  opt.lambdas = get<std::vector<double>>(cfg, "selection.lambdas");
  for (double l : opt.lambdas)
    if (!(l >= 0.0)) throw ConfigError("selection.lambdas", "selection.lambdas must be non-negative");
  opt.repeats = std::max<std::size_t>(1, get_count(cfg, "evaluation.repeats"));
  opt.seed = run.seed();
  opt.test_fraction = get<double>(cfg, "evaluation.test_fraction");
  opt.threshold = get<double>(cfg, "selection.threshold");
  opt.train = train_config(cfg);
  opt.threads = run.threads();
  const auto rows = l1_selection_sweep(d, builder, opt);
  TrainConfig plain = opt.train;
  plain.adam.l1_attention = 0.0;
  const auto full = parallel_map<double>(opt.repeats, opt.threads, [&](std::size_t r) {
    return run_trial(d, builder, plain, opt.test_fraction, derive_seed(opt.seed, r)).metric;
  });
  auto meta = csv_meta(run);
  meta["full_accuracy"] = csv::format_double(summarize(full).mean);
  write_selection_csv(rows, d, run.path("selection.csv"), meta);
  json jrows = json::array();
  for (const auto& r : rows)
    jrows.push_back({{"lambda", r.lambda},
                     {"mean_count", r.mean_count},
                     {"downstream", r.mean_downstream ? json(*r.mean_downstream) : json(nullptr)}});
  run.write_json("report.json", {{"full_accuracy", summarize(full).mean}, {"rows", jrows}});
}

inline void cmd_transfer(Run& run) {
  const json& cfg = run.config;
  if (task_of(cfg) != Task::binary) throw ConfigError("task", "transfer needs task = binary");
  const LoadedModel m = load_model_input(run);
  const auto mode = get<std::string>(cfg, "transfer.mode");
  if (mode != "finetune" && mode != "probe")
    throw ConfigError("transfer.mode", "transfer.mode must be finetune or probe, got '" + mode + "'");

  Dataset target = load_raw(run).data;
  std::vector<std::string> source_names = m.feature_names;
  if (source_names.empty()) source_names = default_feature_names(m.file.spec.input_dim);
  const Alignment aligned = align_features(target, source_names);
  write_alignment_csv(aligned, run.path("alignment.csv"));
  Dataset d = aligned.data;
  if (get<bool>(cfg, "standardize")) d = standardize(d).first;

  std::optional<std::size_t> cut;
  if (is_set(cfg, "transfer.cut")) cut = get_count(cfg, "transfer.cut");
  const FrozenTrunk trunk = make_trunk(m.file.spec, m.file.params, cut);
  const std::string hash_before = trunk_hash(trunk);
  FineTuneOptions ft;
  ft.head_layers = {LayerSpec::dense(get_count(cfg, "transfer.head_units"), Activation::relu)};
  ft.train_attention = get<bool>(cfg, "transfer.train_attention");
  ft.train = train_config(cfg);
  ProbeConfig probe;
  probe.epochs = get_count(cfg, "transfer.probe_epochs");
  probe.learning_rate = get<double>(cfg, "transfer.probe_learning_rate");

  const std::size_t repeats = std::max<std::size_t>(1, get_count(cfg, "evaluation.repeats"));
  const double tf = get<double>(cfg, "evaluation.test_fraction");
  struct Fold {
    double transfer = 0.0, raw = 0.0;
  };
  const auto folds = parallel_map<Fold>(repeats, run.threads(), [&](std::size_t r) {
    const Split s = split(d, tf, derive_seed(run.seed(), r));
    Fold f;
    if (mode == "finetune") {
      FineTuneOptions o = ft;
      o.train.seed = derive_seed(run.seed(), 500 + r);
      const FineTuned tuned = fine_tune(trunk, s.train, o);
      f.transfer = evaluate(tuned.spec, tuned.params, s.test);
    } else {
      const LinearProbe p = linear_probe(extract_features(trunk, s.train.x), *s.train.labels, probe);
      f.transfer = p.accuracy(extract_features(trunk, s.test.x), *s.test.labels);
    }
    f.raw = linear_probe(s.train.x, *s.train.labels, probe).accuracy(s.test.x, *s.test.labels);
    return f;
  });
  if (trunk_hash(trunk) != hash_before) throw NumericError("trunk parameters changed");

  std::vector<double> transfer, raw;
  {
    csv::Writer w(run.path("transfer_folds.csv"));
    w.comment("mode", mode);
    w.comment("seed", std::to_string(run.seed()));
    w.row({"fold", "transfer_accuracy", "raw_probe_accuracy"});
    for (std::size_t r = 0; r < folds.size(); ++r) {
      transfer.push_back(folds[r].transfer);
      raw.push_back(folds[r].raw);
      w.row({std::to_string(r), csv::format_double(folds[r].transfer), csv::format_double(folds[r].raw)});
    }
  }
  run.write_json("report.json", {{"mode", mode},
                                 {"cut", trunk.cut},
                                 {"trunk_width", trunk.output_width()},
                                 {"trunk_hash", hash_before},
                                 {"transfer", summary_json(transfer)},
                                 {"raw_probe", summary_json(raw)},
                                 {"alignment",
                                  {{"matched", aligned.count(AlignStatus::matched)},
                                   {"imputed", aligned.count(AlignStatus::imputed)},
                                   {"dropped", aligned.count(AlignStatus::dropped)}}}});
}

// Runs `command` and writes manifest.json; returns the manifest.
inline json execute(const std::string& command, json config) {
  Run run;
  run.command = command;
  run.config = std::move(config);
  run.out = get<std::string>(run.config, "out");
  task_of(run.config);
  fs::create_directories(run.out);
  if (command == "synth") cmd_synth(run);
  else if (command == "mask") cmd_mask(run);
  else if (command == "train") cmd_train(run);
  else if (command == "eval") cmd_eval(run);
  else if (command == "importance") cmd_importance(run);
  else if (command == "ablate") cmd_ablate(run);
  else if (command == "select") cmd_select(run);
  else if (command == "transfer") cmd_transfer(run);
  else throw ConfigError("command", "unknown command '" + command + "'");
  json manifest = make_manifest(run);
  run.write_json("manifest.json", manifest);
  return manifest;
}

// Re-executes a manifest into `out` and checks every output hash.
inline json replay(const std::string& manifest_path, const std::string& out) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest '" + manifest_path + "'");
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("manifest '" + manifest_path + "' is not valid JSON");
  }
  json config = resolve_config(manifest.at("config"));
  config["out"] = out;
  json again = execute(manifest.at("command").get<std::string>(), config);
  for (const auto& [path, hash] : manifest.at("inputs").items())
    if (again["inputs"].value(path, "") != hash)
      throw ChecksumError("input '" + path + "' changed since the manifest was written");
  if (again["outputs"] != manifest.at("outputs")) {
    for (const auto& [name, hash] : manifest.at("outputs").items())
      if (again["outputs"].value(name, "") != hash)
        throw ChecksumError("output '" + name + "' differs from the manifest");
    throw ChecksumError("replay produced a different set of output files");
  }
  return again;
}

}  // namespace sparsetab::cli
