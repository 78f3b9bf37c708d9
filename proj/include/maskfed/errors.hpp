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

#include <stdexcept>
#include <string>

namespace maskfed {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes that do not line up for an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value. The message starts with the offending field
// path when one is known (e.g. "model.m: ...").
class ConfigError : public Error {
 public:
  using Error::Error;
};

class LabelError : public Error {
 public:
  using Error::Error;
};

class GraphConsumedError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf produced by an engine operation.
class NumericError : public Error {
 public:
  using Error::Error;
};

class EmptyClientError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace maskfed
