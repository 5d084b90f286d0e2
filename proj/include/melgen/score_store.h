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

#ifndef MELGEN_SCORE_STORE_H_
#define MELGEN_SCORE_STORE_H_

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "melgen/ga_engine.h"

namespace melgen {

inline constexpr double kMinScore = 0.0;
inline constexpr double kMaxScore = 100.0;

// 16 hex digits of a 64-bit FNV-1a hash over the token codes.
std::string MelodyId(const Melody& melody);

struct ScoredMelody {
  std::string melody_id;
  Melody melody;
  std::vector<double> scores;

  // Arithmetic mean of `scores`, 0 when there are none.
  double mean_score() const;
};

struct TrainingExample {
  Melody melody;
  double target = 0.0;  // mean score in [0, 100]
};

// Archived melodies and their human scores.
//
// File format, one JSON object per line:
//   {"id":"<16 hex digits>","abc":"<ABC body>","scores":[<reals>]}
// The id must equal MelodyId of the parsed body.
//
// Writers are serialized; readers see the last completed write. A store
// opened on a file rewrites it (write-then-rename) after every mutation.
class ScoreStore {
 public:
  ScoreStore() = default;
  // Loads `backing_file` if it exists and persists to it afterwards.
  explicit ScoreStore(std::filesystem::path backing_file);

  ScoreStore(const ScoreStore&) = delete;
  ScoreStore& operator=(const ScoreStore&) = delete;

  // Idempotent. Throws StorageError when persisting fails.
  std::string PutMelody(const Melody& melody);
  std::vector<std::string> PutMelodies(std::span<const Melody> melodies);

  // Throws UnknownMelody or ScoreOutOfRange.
  ScoredMelody AddScore(const std::string& melody_id, double score);
  // All-or-nothing: validates every pair before applying any.
  void AddScores(std::span<const std::pair<std::string, double>> scores);

  std::optional<ScoredMelody> Find(const std::string& melody_id) const;
  std::size_t size() const;
  std::vector<ScoredMelody> Snapshot() const;  // ordered by id

  // Melodies with at least `min_scores` scores, ordered by id.
  std::vector<TrainingExample> TrainingSet(int min_scores = 1) const;

  // Up to `limit` records with the fewest scores (ties by id).
  std::vector<ScoredMelody> Pending(std::size_t limit) const;

  void Save(const std::filesystem::path& path) const;
  void WriteTo(std::ostream& out) const;
  // Merges records: new melodies are added, scores appended.
  // Throws StorageError on malformed input.
  void Import(const std::filesystem::path& path);
  void ReadFrom(std::istream& in);

 private:
  void PersistLocked() const;
  void WriteFileLocked(const std::filesystem::path& path) const;
  void WriteLocked(std::ostream& out) const;
  static void Validate(double score);

  std::filesystem::path backing_file_;
  mutable std::shared_mutex mu_;
  std::map<std::string, ScoredMelody> records_;
};

}  // namespace melgen

#endif  // MELGEN_SCORE_STORE_H_
