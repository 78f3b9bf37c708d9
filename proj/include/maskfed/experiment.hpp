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
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "maskfed/config.hpp"
#include "maskfed/data.hpp"
#include "maskfed/fl.hpp"

namespace maskfed {

// Toy data drawn from fl.seed, or the two binary files.
std::pair<Dataset, Dataset> build_datasets(const ExperimentConfig& cfg);

struct RunOptions {
  int threads = 1;
  std::optional<std::filesystem::path> out_dir;  // nothing is written when unset
  std::function<void(const RoundMetrics&)> on_round;
};

struct RunResult {
  std::string method;  // eftvit, fed_full or fed_head
  std::vector<RoundMetrics> rounds;
  EvalResult final_eval;
  std::uint64_t total_bytes_up = 0;
  std::uint64_t total_bytes_down = 0;
  std::uint64_t total_client_macs = 0;
  std::filesystem::path out_dir;

  std::string summary_json() const;
};

// `base` when free, else the first free "base-1", "base-2", ...; created.
std::filesystem::path unique_run_dir(const std::filesystem::path& base);

// Runs EFTViT or the configured baseline. With an output directory it writes
// config.json, metrics.jsonl, timing.jsonl, summary.json and checkpoints/.
RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& options);

}  // namespace maskfed
