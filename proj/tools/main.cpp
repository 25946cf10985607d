#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "cli/commands.hpp"

namespace {

using sparsetab::cli::json;

void fail_line(const std::string& category, const std::string& message, const std::string& key = "") {
  json j = {{"error", category}, {"message", message}};
  if (!key.empty()) j["key"] = key;
  std::cerr << j.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  namespace cli = sparsetab::cli;
  CLI::App app{"Sparse attention networks for tabular data"};
  app.require_subcommand(1);

  struct Flags {
    std::string config, out, data, model, mode, manifest;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads, repeats, epochs;
    std::optional<std::string> task, mask_source;
    std::vector<double> lambdas;
    bool no_standardize = false;
    std::optional<std::size_t> n_samples, n_features, n_informative, n_classes;
    std::optional<double> class_sep;
  } f;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "JSON experiment config");
    sub->add_option("--out", f.out, "Output directory");
    sub->add_option("--seed", f.seed, "Master seed");
    sub->add_option("--threads", f.threads, "Worker threads for repeats");
    sub->add_option("--task", f.task, "multiclass, binary or survival");
    sub->add_option("--epochs", f.epochs, "Training epochs");
    sub->add_flag("--no-standardize", f.no_standardize, "Keep raw feature scales");
  };
  auto needs_data = [&](CLI::App* sub) {
    sub->add_option("--data", f.data, "Input CSV");
    sub->add_option("--mask-source", f.mask_source, "identity, grouping, random_walk or kmeans");
    sub->add_option("--repeats", f.repeats, "Repeats / folds");
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  common(synth);
  synth->add_option("--n-samples", f.n_samples);
  synth->add_option("--n-features", f.n_features);
  synth->add_option("--n-informative", f.n_informative);
  synth->add_option("--n-classes", f.n_classes);
  synth->add_option("--class-sep", f.class_sep);

  for (const char* name : {"mask", "train", "select"}) needs_data(app.add_subcommand(name)), common(app.get_subcommand(name));
  app.get_subcommand("mask")->description("Build a connectivity mask");
  app.get_subcommand("train")->description("Train a model");
  app.get_subcommand("select")->description("L1 attention feature selection sweep");
  app.get_subcommand("select")->add_option("--lambdas", f.lambdas, "L1 strengths");

  for (const char* name : {"eval", "importance", "transfer"}) {
    auto* sub = app.add_subcommand(name);
    common(sub);
    needs_data(sub);
    sub->add_option("--model", f.model, "Model file");
  }
  app.get_subcommand("eval")->description("Score a model and retrain it over repeated splits");
  app.get_subcommand("importance")->description("Attention feature importance");
  app.get_subcommand("transfer")->description("Fine-tune or probe a frozen trunk on a target dataset");
  app.get_subcommand("transfer")->add_option("--mode", f.mode, "finetune or probe");

  auto* ablate = app.add_subcommand("ablate", "MoRF / LeRF / walk ablation");
  common(ablate);
  needs_data(ablate);
  ablate->add_option("--mode", f.mode, "morf, lerf or walk");

  auto* replay = app.add_subcommand("replay", "Re-run a manifest and verify its output hashes");
  replay->add_option("manifest", f.manifest, "manifest.json")->required();
  replay->add_option("--out", f.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fail_line("usage", e.what());
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (command == "replay") {
      const json m = cli::replay(f.manifest, f.out);
      std::cout << json{{"replayed", m["command"]}, {"outputs", m["outputs"].size()}}.dump() << '\n';
      return 0;
    }
    json user = f.config.empty() ? json::object() : cli::load_config_file(f.config);
    json cfg = cli::resolve_config(user);
    // Flags win over file values.
    if (!f.out.empty()) cfg["out"] = f.out;
    if (f.seed) cfg["seed"] = *f.seed;
    if (f.threads) cfg["threads"] = *f.threads;
    if (f.task) cfg["task"] = *f.task;
    if (f.epochs) cfg["train"]["epochs"] = *f.epochs;
    if (f.no_standardize) cfg["standardize"] = false;
    if (!f.data.empty()) cfg["data"]["csv"] = f.data;
    if (!f.model.empty()) cfg["model"] = f.model;
    if (f.mask_source) cfg["mask"]["source"] = *f.mask_source;
    if (f.repeats) cfg["evaluation"]["repeats"] = *f.repeats;
    if (!f.lambdas.empty()) cfg["selection"]["lambdas"] = f.lambdas;
    if (!f.mode.empty()) cfg[command == "ablate" ? "ablation" : "transfer"]["mode"] = f.mode;
    if (f.n_samples || f.n_features || f.n_informative || f.n_classes || f.class_sep) {
      json& s = cfg["data"]["synthetic"];
      if (s.is_null()) s = cli::synthetic_defaults();
      if (f.n_samples) s["n_samples"] = *f.n_samples;
      if (f.n_features) s["n_features"] = *f.n_features;
      if (f.n_informative) s["n_informative"] = *f.n_informative;
      if (f.n_classes) s["n_classes"] = *f.n_classes;
      if (f.class_sep) s["class_sep"] = *f.class_sep;
    }
    const json manifest = cli::execute(command, cfg);
    std::cout << json{{"command", command}, {"out", cfg["out"]}, {"config_hash", manifest["config_hash"]}}.dump()
              << '\n';
    return 0;
  } catch (const cli::ConfigError& e) {
    fail_line(e.category(), e.what(), e.key);
    return 2;
  } catch (const sparsetab::Error& e) {
    fail_line(e.category(), e.what());
    return 1;
  } catch (const std::exception& e) {
    fail_line("internal", e.what());
    return 1;
  }
}
