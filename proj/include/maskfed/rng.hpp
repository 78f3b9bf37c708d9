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
#include <random>

namespace maskfed {

// What a random stream is used for; part of the stream key.
enum class StreamPurpose : std::uint64_t {
  kInit = 1,
  kData,
  kPartition,
  kSelect,
  kBatch,
  kMask,
  kAugment,
  kBalance,
  kServer,
};

// Counter-based split of the root seed: every (purpose, client, round, extra)
// key maps to an independent generator, so results never depend on which
// thread touches a stream first.
std::uint64_t derive_seed(std::uint64_t root, StreamPurpose purpose, std::uint64_t client,
                          std::uint64_t round, std::uint64_t extra = 0);

inline std::mt19937_64 make_stream(std::uint64_t root, StreamPurpose purpose,
                                   std::uint64_t client = 0, std::uint64_t round = 0,
                                   std::uint64_t extra = 0) {
  return std::mt19937_64(derive_seed(root, purpose, client, round, extra));
}

}  // namespace maskfed
