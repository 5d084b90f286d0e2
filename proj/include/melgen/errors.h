// Copyright 2026 The Melgen Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MELGEN_ERRORS_H_
#define MELGEN_ERRORS_H_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace melgen {

// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedConstruct : public Error {
 public:
  UnsupportedConstruct(std::size_t position, std::string snippet)
      : Error("unsupported ABC construct at position " +
              std::to_string(position) + ": '" + snippet + "'"),
        position_(position),
        snippet_(std::move(snippet)) {}

  std::size_t position() const { return position_; }
  const std::string& snippet() const { return snippet_; }

 private:
  std::size_t position_;
  std::string snippet_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class EmptyCorpus : public Error {
 public:
  using Error::Error;
};

class LengthMismatch : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// A fitness function threw; the message carries the GA iteration.
class FitnessError : public Error {
 public:
  using Error::Error;
};

class StorageError : public Error {
 public:
  using Error::Error;
};

class UnknownMelody : public Error {
 public:
  using Error::Error;
};

class ScoreOutOfRange : public Error {
 public:
  using Error::Error;
};

class UnknownToken : public Error {
 public:
  using Error::Error;
};

class DivergenceDetected : public Error {
 public:
  using Error::Error;
};

class InsufficientScores : public Error {
 public:
  using Error::Error;
};

}  // namespace melgen

#endif  // MELGEN_ERRORS_H_
