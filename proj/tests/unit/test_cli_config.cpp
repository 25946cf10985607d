#include <gtest/gtest.h>

#include "cli/commands.hpp"
#include "support/tempdir.hpp"

using namespace sparsetab;
using namespace sparsetab::cli;

namespace {

json small_config(const std::string& out) {
  return resolve_config({{"out", out},
                         {"seed", 5},
                         {"train", {{"epochs", 3}}},
                         {"evaluation", {{"repeats", 2}}},
                         {"importance", {{"models", 2}}},
                         {"selection", {{"lambdas", {1e-3, 1e-2}}}},
                         {"mask", {{"source", "identity"}}},
                         {"data", {{"synthetic", {{"n_samples", 120}, {"n_features", 10}, {"n_informative", 3},
                                                  {"n_classes", 3}}}}}});
}

}  // namespace

TEST(Config, DefaultsAreComplete) {
  const json c = resolve_config(json::object());
  EXPECT_EQ(get<std::string>(c, "mask.source"), "random_walk");
  EXPECT_EQ(get_count(c, "mask.walks_per_node"), 3u);
  EXPECT_EQ(get_count(c, "mask.walk_length"), 5u);
  EXPECT_EQ(get<double>(c, "mask.threshold"), 0.5);
  EXPECT_EQ(get<double>(c, "train.learning_rate"), 1e-3);
  EXPECT_EQ(get_count(c, "train.epochs"), 200u);
  EXPECT_EQ(get<std::vector<double>>(c, "selection.lambdas").size(), 10u);
  EXPECT_FALSE(is_set(c, "data.csv"));
}

TEST(Config, UnknownKeysAndTypeChangesAreRejected) {
  try {
    resolve_config({{"train", {{"epoch", 3}}}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key, "train.epoch");
  }
  try {
    resolve_config({{"train", {{"epochs", "many"}}}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key, "train.epochs");
  }
  EXPECT_THROW(resolve_config({{"data", {{"synthetic", {{"bogus", 1}}}}}}), ConfigError);
  EXPECT_THROW(resolve_config(json::array()), ConfigError);
}

TEST(Config, NullableObjectsAreFilledFromTheirSchema) {
  const json c = resolve_config({{"data", {{"synthetic", {{"n_samples", 50}}}}}});
  EXPECT_EQ(get_count(c, "data.synthetic.n_samples"), 50u);
  EXPECT_EQ(get_count(c, "data.synthetic.n_features"), 100u);
}

TEST(Config, ConvertsToLibraryOptions) {
  const json c = resolve_config({{"network", {{"attention", "dot"}, {"dense_units", 0}}},
                                 {"train", {{"l1_attention", 0.01}}},
                                 {"seed", 9}});
  const ArchitectureOptions a = architecture(c);
  EXPECT_EQ(a.attention, ScoreKind::dot);
  EXPECT_EQ(a.dense_units, 0u);
  const TrainConfig t = train_config(c);
  EXPECT_EQ(t.adam.l1_attention, 0.01);
  EXPECT_EQ(t.seed, 9u);
  EXPECT_THROW(architecture(resolve_config({{"network", {{"attention", "luong"}}}})), ConfigError);
  EXPECT_THROW(train_config(resolve_config({{"train", {{"epochs", 0}}}})), ConfigError);
  EXPECT_THROW(train_config(resolve_config({{"train", {{"epochs", -1}}}})), ConfigError);
}

TEST(Config, HashIgnoresOutputDirectoryAndThreads) {
  json a = small_config("x"), b = small_config("y");
  b["threads"] = 8;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b["seed"] = 6;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Commands, ManifestListsWrittenFilesAndReplays) {
  TempDir dir;
  const json m = execute("synth", small_config(dir.file("synth")));
  EXPECT_EQ(m.at("outputs").size(), 3u);
  EXPECT_TRUE(m.at("outputs").contains("data.csv"));
  EXPECT_EQ(m.at("versions").at("model_format"), kModelFormatVersion);
  const json again = replay(dir.file("synth/manifest.json"), dir.file("again"));
  EXPECT_EQ(again.at("outputs"), m.at("outputs"));
}

TEST(Commands, ReplayDetectsChangedInputs) {
  TempDir dir;
  execute("synth", small_config(dir.file("synth")));
  json cfg = small_config(dir.file("train"));
  cfg["data"]["csv"] = dir.file("synth/data.csv");
  execute("train", cfg);
  EXPECT_NO_THROW(replay(dir.file("train/manifest.json"), dir.file("again")));
  CsvColumns cols;
  cols.label = "label";
  Dataset d = load_csv(dir.file("synth/data.csv"), cols);
  d.x(0, 0) += 1.0;
  write_csv(d, dir.file("synth/data.csv"));
  EXPECT_THROW(replay(dir.file("train/manifest.json"), dir.file("again2")), ChecksumError);
}

TEST(Commands, ThreadCountDoesNotChangeResults) {
  TempDir dir;
  json one = small_config(dir.file("one"));
  json four = small_config(dir.file("four"));
  four["threads"] = 4;
  const json a = execute("select", one), b = execute("select", four);
  EXPECT_EQ(a.at("outputs"), b.at("outputs"));
}

TEST(Commands, TrainedModelCarriesItsScalerAndNames) {
  TempDir dir;
  const json m = execute("train", small_config(dir.file("train")));
  const ModelFile f = load_model(dir.file("train/model.bin"));
  EXPECT_EQ(f.metadata.at("feature_names").size(), 10u);
  EXPECT_TRUE(f.metadata.contains("scaler"));
  EXPECT_TRUE(m.at("outputs").contains("model.bin"));
}

TEST(Commands, UnknownCommandIsAConfigError) {
  TempDir dir;
  EXPECT_THROW(execute("bogus", small_config(dir.file("x"))), ConfigError);
}
