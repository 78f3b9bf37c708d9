/*
 * Copyright 2026 The maskfed Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "maskfed/config.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "maskfed/errors.hpp"

namespace maskfed {

namespace {

using json = nlohmann::ordered_json;

// Reads one section and refuses keys it does not consume.
class Section {
 public:
  Section(const json& root, std::string name) : name_(std::move(name)) {
    if (!root.contains(name_)) throw ConfigError(name_ + ": missing section");
    node_ = &root.at(name_);
    if (!node_->is_object()) throw ConfigError(name_ + ": expected an object");
  }

  void finish() const {
    for (const auto& [key, value] : node_->items()) {
      if (!seen_.contains(key)) throw ConfigError(path(key) + ": unknown key");
    }
  }

  template <typename T>
  void get(const std::string& key, T& out, bool required = true) {
    seen_.insert(key);
    if (!node_->contains(key)) {
      if (required) throw ConfigError(path(key) + ": missing key");
      return;
    }
    const json& v = node_->at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(path(key) + ": expected a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(path(key) + ": expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned()) {
          out = v.get<T>();
          return;
        }
        if (v.get<std::int64_t>() < 0) throw ConfigError(path(key) + ": must be non-negative");
      }
      out = v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(path(key) + ": expected a number");
      out = v.get<T>();
    } else {
      if (!v.is_string()) throw ConfigError(path(key) + ": expected a string");
      out = v.get<std::string>();
    }
  }

 private:
  std::string path(const std::string& key) const { return name_ + "." + key; }

  std::string name_;
  const json* node_ = nullptr;
  std::set<std::string> seen_;
};

// ViTConfig speaks in its own field names; report them as config paths.
const std::map<std::string, std::string>& vit_field_paths() {
  static const std::map<std::string, std::string> paths = {
      {"image_h", "dataset.image_size"}, {"image_w", "dataset.image_size"},
      {"channels", "dataset.channels"},  {"patch", "dataset.patch_size"},
      {"dim", "model.d"},                {"heads", "model.heads"},
      {"depth", "model.n_t"},            {"local_depth", "model.m"},
      {"mlp_ratio", "model.mlp_ratio"},  {"num_classes", "dataset.classes"},
  };
  return paths;
}

}  // namespace

ViTConfig ExperimentConfig::vit() const {
  ViTConfig v;
  v.image_h = dataset.image_size;
  v.image_w = dataset.image_size;
  v.channels = dataset.channels;
  v.patch = dataset.patch_size;
  v.dim = model.d;
  v.heads = model.heads;
  v.depth = model.n_t;
  v.local_depth = model.m;
  v.mlp_ratio = model.mlp_ratio;
  v.num_classes = dataset.classes;
  return v;
}

void ExperimentConfig::validate() const {
  if (dataset.kind != "toy" && dataset.kind != "binary") {
    throw ConfigError("dataset.kind: expected \"toy\" or \"binary\"");
  }
  if (dataset.kind == "binary" && (dataset.train_path.empty() || dataset.test_path.empty())) {
    throw ConfigError("dataset.train_path: binary datasets need train_path and test_path");
  }
  if (dataset.classes < 1 || dataset.classes > 255) {
    throw ConfigError("dataset.classes: must lie in [1, 255]");
  }
  if (dataset.kind == "toy") {
    if (dataset.train_per_class < 1) throw ConfigError("dataset.train_per_class: must be >= 1");
    if (dataset.test_per_class < 1) throw ConfigError("dataset.test_per_class: must be >= 1");
    if (!(dataset.noise >= 0.0)) throw ConfigError("dataset.noise: must be non-negative");
  }
  try {
    vit().validate();
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    const auto colon = msg.find(':');
    const auto field = msg.substr(0, colon);
    auto it = vit_field_paths().find(field);
    if (it == vit_field_paths().end()) throw;
    throw ConfigError(it->second + msg.substr(colon));
  }
  fl.validate();
  if (!(cost.bandwidth_mbps > 0.0)) throw ConfigError("cost.bandwidth_mbps: must be positive");
  if (baseline != "none" && baseline != "fed_full" && baseline != "fed_head") {
    throw ConfigError("baseline: expected none, fed_full or fed_head");
  }
}

ExperimentConfig parse_config_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config: expected an object");
  static const std::set<std::string> kSections = {"dataset", "model", "fl", "train", "cost",
                                                  "baseline"};
  for (const auto& [key, value] : root.items()) {
    if (!kSections.contains(key)) throw ConfigError(key + ": unknown key");
  }

  ExperimentConfig cfg;
  {
    Section s(root, "dataset");
    auto& d = cfg.dataset;
    s.get("kind", d.kind);
    s.get("classes", d.classes);
    s.get("image_size", d.image_size);
    s.get("patch_size", d.patch_size);
    s.get("channels", d.channels, false);
    s.get("train_per_class", d.train_per_class);
    s.get("test_per_class", d.test_per_class);
    s.get("noise", d.noise);
    s.get("train_path", d.train_path, false);
    s.get("test_path", d.test_path, false);
    s.finish();
  }
  {
    Section s(root, "model");
    auto& m = cfg.model;
    s.get("d", m.d);
    s.get("heads", m.heads);
    s.get("n_t", m.n_t);
    s.get("m", m.m);
    s.get("mlp_ratio", m.mlp_ratio);
    s.finish();
  }
  {
    Section s(root, "fl");
    auto& f = cfg.fl;
    s.get("k", f.num_clients);
    s.get("p", f.select_ratio);
    s.get("rounds", f.rounds);
    s.get("local_epochs", f.local_epochs);
    s.get("server_epochs", f.server_epochs);
    s.get("beta", f.beta);
    s.get("seed", f.seed);
    s.get("eval_every", f.eval_every, false);
    s.finish();
  }
  {
    Section s(root, "train");
    auto& f = cfg.fl;
    s.get("lr", f.lr);
    s.get("weight_decay", f.weight_decay);
    s.get("warmup_frac", f.warmup_frac);
    s.get("batch_size", f.batch_size);
    s.get("r_m", f.mask_ratio);
    s.get("augment", f.augment);
    s.finish();
  }
  {
    Section s(root, "cost");
    s.get("bandwidth_mbps", cfg.cost.bandwidth_mbps);
    s.finish();
  }
  if (root.contains("baseline")) {
    if (!root["baseline"].is_string()) throw ConfigError("baseline: expected a string");
    cfg.baseline = root["baseline"].get<std::string>();
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string render_config(const ExperimentConfig& cfg) {
  json root;
  const auto& d = cfg.dataset;
  root["dataset"] = {{"kind", d.kind},
                     {"classes", d.classes},
                     {"image_size", d.image_size},
                     {"patch_size", d.patch_size},
                     {"channels", d.channels},
                     {"train_per_class", d.train_per_class},
                     {"test_per_class", d.test_per_class},
                     {"noise", d.noise}};
  if (!d.train_path.empty()) root["dataset"]["train_path"] = d.train_path;
  if (!d.test_path.empty()) root["dataset"]["test_path"] = d.test_path;
  const auto& m = cfg.model;
  root["model"] = {{"d", m.d}, {"heads", m.heads}, {"n_t", m.n_t}, {"m", m.m},
                   {"mlp_ratio", m.mlp_ratio}};
  const auto& f = cfg.fl;
  root["fl"] = {{"k", f.num_clients},        {"p", f.select_ratio},
                {"rounds", f.rounds},        {"local_epochs", f.local_epochs},
                {"server_epochs", f.server_epochs}, {"beta", f.beta},
                {"seed", f.seed},            {"eval_every", f.eval_every}};
  root["train"] = {{"lr", f.lr},
                   {"weight_decay", f.weight_decay},
                   {"warmup_frac", f.warmup_frac},
                   {"batch_size", f.batch_size},
                   {"r_m", f.mask_ratio},
                   {"augment", f.augment}};
  root["cost"] = {{"bandwidth_mbps", cfg.cost.bandwidth_mbps}};
  root["baseline"] = cfg.baseline;
  return root.dump(2) + "\n";
}

}  // namespace maskfed
