#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "sparsetab/sparsetab.hpp"

namespace sparsetab::cli {

using nlohmann::json;

// Bad configuration or flags; exits with status 2.
struct ConfigError : Error {
  std::string key;
  ConfigError(std::string key_, const std::string& what) : Error("config", what), key(std::move(key_)) {}
};

inline json synthetic_defaults() {
  const SyntheticSpec s;
  return {{"n_samples", s.n_samples}, {"n_features", s.n_features}, {"n_informative", s.n_informative},
          {"n_classes", s.n_classes}, {"class_sep", s.class_sep}};
}

inline json survival_defaults() {
  const SurvivalSpec s;
  return {{"n_samples", s.n_samples}, {"n_features", s.n_features}, {"n_informative", s.n_informative},
          {"censor_fraction", s.censor_fraction}, {"effect", s.effect}};
}

// Every recognised key with its default. null marks an optional value.
inline json default_config() {
  const ArchitectureOptions arch;
  const TrainConfig train;
  return {
      {"task", "multiclass"},
      {"seed", 0},
      {"out", "out"},
      {"threads", 1},
      {"standardize", true},
      {"model", nullptr},
      {"data",
       {{"csv", nullptr},
        {"label", "label"},
        {"time", "time"},
        {"event", "event"},
        {"synthetic", nullptr},
        {"survival_synthetic", nullptr}}},
      {"mask",
       {{"source", "random_walk"},
        {"grouping_csv", nullptr},
        {"walks_per_node", 3},
        {"walk_length", 5},
        {"p", 1.0},
        {"q", 1.0},
        {"threshold", 0.5},
        {"k", nullptr}}},
      {"network",
       {{"attention", to_string(arch.attention)},
        {"sparse_activation", to_string(arch.sparse_activation)},
        {"dense_units", arch.dense_units},
        {"dense_activation", to_string(arch.dense_activation)},
        {"dropout", arch.dropout},
        {"post_sparse_attention", arch.post_sparse_attention}}},
      {"train",
       {{"epochs", train.epochs},
        {"batch_size", train.batch_size},
        {"learning_rate", train.adam.learning_rate},
        {"l1_attention", train.adam.l1_attention}}},
      {"evaluation", {{"repeats", 10}, {"test_fraction", 0.2}}},
      {"importance", {{"models", 10}}},
      {"ablation", {{"mode", "morf"}, {"steps", 10}, {"checkpoints", nullptr}, {"n_remove", 5}}},
      {"selection",
       {{"lambdas", {1e-7, 5e-7, 1e-6, 5e-6, 1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3}}, {"threshold", 1e-6}}},
      {"transfer",
       {{"mode", "finetune"},
        {"cut", nullptr},
        {"train_attention", false},
        {"head_units", 32},
        {"probe_epochs", 500},
        {"probe_learning_rate", 0.1}}},
  };
}

namespace detail {

inline const char* type_name(const json& v) {
  if (v.is_boolean()) return "a boolean";
  if (v.is_number()) return "a number";
  if (v.is_string()) return "a string";
  if (v.is_array()) return "an array";
  if (v.is_object()) return "an object";
  return "null";
}

inline bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return true;
  return a.type() == b.type();
}

// Object-valued keys whose default is null still have a fixed schema.
inline const json* nullable_schema(const std::string& path) {
  static const json synth = synthetic_defaults();
  static const json surv = survival_defaults();
  if (path == "data.synthetic") return &synth;
  if (path == "data.survival_synthetic") return &surv;
  return nullptr;
}

inline void merge_checked(json& base, const json& user, const std::string& prefix) {
  if (!user.is_object())
    throw ConfigError(prefix, "config " + (prefix.empty() ? std::string("root") : "key '" + prefix + "'") +
                                  " must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw ConfigError(path, "unknown config key '" + path + "'");
    json& slot = base[key];
    if (const json* schema = nullable_schema(path)) {
      if (value.is_null()) {
        slot = nullptr;
        continue;
      }
      json filled = *schema;
      merge_checked(filled, value, path);
      slot = std::move(filled);
      continue;
    }
    if (slot.is_object()) {
      merge_checked(slot, value, path);
      continue;
    }
    if (!slot.is_null() && !same_kind(slot, value))
      throw ConfigError(path, "config key '" + path + "' must be " + type_name(slot) + ", got " +
                                  type_name(value));
    slot = value;
  }
}

}  // namespace detail

// Defaults overlaid with a user config; unknown keys and type changes throw.
inline json resolve_config(const json& user) {
  json cfg = default_config();
  detail::merge_checked(cfg, user, "");
  return cfg;
}

inline json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open config file '" + path + "'");
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", "config file '" + path + "' is not valid JSON: " + e.what());
  }
}

// Node at a dotted path ("train.epochs"), or nullptr when absent.
inline const json* find_path(const json& cfg, const std::string& path) {
  const json* node = &cfg;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const auto key = path.substr(start, dot - start);
    if (!node->is_object() || !node->contains(key)) return nullptr;
    node = &node->at(key);
    if (dot == std::string::npos) return node;
    start = dot + 1;
  }
}

inline bool is_set(const json& cfg, const std::string& path) {
  const json* node = find_path(cfg, path);
  return node && !node->is_null();
}

template <class T>
T get(const json& cfg, const std::string& path) {
  const json* node = find_path(cfg, path);
  if (!node) throw ConfigError(path, "missing config key '" + path + "'");
  try {
    return node->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(path, "config key '" + path + "' has the wrong type");
  }
}

inline std::size_t get_count(const json& cfg, const std::string& path) {
  const json* node = find_path(cfg, path);
  if (!node || !node->is_number_integer() || node->get<long long>() < 0)
    throw ConfigError(path, "config key '" + path + "' must be a non-negative integer");
  return node->get<std::size_t>();
}

inline TrainConfig train_config(const json& cfg) {
  TrainConfig t;
  t.epochs = get_count(cfg, "train.epochs");
  t.batch_size = get_count(cfg, "train.batch_size");
  t.adam.learning_rate = get<double>(cfg, "train.learning_rate");
  t.adam.l1_attention = get<double>(cfg, "train.l1_attention");
  t.seed = get<std::uint64_t>(cfg, "seed");
  try {
    t.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError("train", e.what());
  }
  return t;
}

inline ArchitectureOptions architecture(const json& cfg) {
  ArchitectureOptions a;
  try {
    a.attention = parse_score_kind(get<std::string>(cfg, "network.attention"));
    a.sparse_activation = parse_activation(get<std::string>(cfg, "network.sparse_activation"));
    a.dense_activation = parse_activation(get<std::string>(cfg, "network.dense_activation"));
  } catch (const InvalidArgument& e) {
    throw ConfigError("network", e.what());
  }
  a.dense_units = get_count(cfg, "network.dense_units");
  a.dropout = get<double>(cfg, "network.dropout");
  a.post_sparse_attention = get<bool>(cfg, "network.post_sparse_attention");
  return a;
}

inline RandomWalkMaskOptions walk_options(const json& cfg, std::uint64_t seed) {
  RandomWalkMaskOptions w;
  w.walks.walks_per_node = get_count(cfg, "mask.walks_per_node");
  w.walks.walk_length = get_count(cfg, "mask.walk_length");
  w.walks.p = get<double>(cfg, "mask.p");
  w.walks.q = get<double>(cfg, "mask.q");
  w.walks.seed = seed;
  w.threshold = get<double>(cfg, "mask.threshold");
  return w;
}

}  // namespace sparsetab::cli
