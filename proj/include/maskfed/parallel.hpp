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

#include <cstddef>
#include <functional>

namespace maskfed {

// Runs fn(0..n-1) on up to `threads` workers. Each index runs exactly once;
// callers write results into per-index slots so output never depends on
// scheduling. The first exception thrown is rethrown after all workers join.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

// Keeps large activation buffers on the heap instead of fresh mmaps. Call
// once from main; a no-op off glibc.
void tune_allocator();

}  // namespace maskfed
