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

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "maskfed/fl.hpp"
#include "maskfed/vit.hpp"

namespace maskfed {

struct DatasetConfig {
  std::string kind = "toy";  // "toy" or "binary"
  int classes = 4;
  std::int64_t image_size = 16;
  std::int64_t patch_size = 4;
  std::int64_t channels = 1;
  int train_per_class = 100;
  int test_per_class = 50;
  double noise = 0.1;
  std::string train_path;  // binary only
  std::string test_path;

  bool operator==(const DatasetConfig&) const = default;
};

struct ModelConfig {
  std::int64_t d = 64;
  std::int64_t heads = 4;
  std::int64_t n_t = 6;
  std::int64_t m = 2;
  std::int64_t mlp_ratio = 4;

  bool operator==(const ModelConfig&) const = default;
};

struct CostConfig {
  double bandwidth_mbps = 500.0;

  bool operator==(const CostConfig&) const = default;
};

// Sections: dataset, model, fl (k, p, rounds, local_epochs, server_epochs,
// beta, seed, eval_every), train (lr, weight_decay, warmup_frac, batch_size,
// r_m, augment), cost, plus the top-level "baseline" selector.
struct ExperimentConfig {
  DatasetConfig dataset;
  ModelConfig model;
  FLConfig fl;
  CostConfig cost;
  std::string baseline = "none";  // none, fed_full, fed_head

  ViTConfig vit() const;
  // Throws ConfigError whose message starts with the offending field path.
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::filesystem::path& path);
std::string render_config(const ExperimentConfig& cfg);

}  // namespace maskfed
