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

// End-to-end melody generation:
//   phase 1  GA driven by corpus similarity; every evaluated melody is
//            archived in the score store for rating
//   phase 2  Bi-LSTM surrogate trained on the mean ratings
//   phase 3  the same GA driven by the surrogate; the best distinct
//            melodies of the run are written out as ABC tunes

#ifndef MELGEN_PIPELINE_H_
#define MELGEN_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "melgen/abc.h"
#include "melgen/corpus_index.h"
#include "melgen/ga_engine.h"
#include "melgen/score_store.h"
#include "melgen/surrogate.h"

namespace melgen {

enum class FitnessKind { kNaive, kIndexed };
enum class ScorerKind { kStore, kSynthetic };

struct PipelineConfig {
  std::filesystem::path corpus_path;
  std::filesystem::path store_path = "melgen_store.jsonl";
  std::filesystem::path model_path = "melgen_model.txt";
  std::filesystem::path out_dir = "melgen_out";
  GaConfig phase1{.max_iterations = 2000};
  GaConfig phase3{.max_iterations = 500};
  TrainConfig train;
  int hidden_size = 50;
  int min_scores = 1;
  int output_count = 6;
  FitnessKind fitness = FitnessKind::kNaive;
  ScorerKind scorer = ScorerKind::kStore;

  // Throws ConfigError.
  void Validate() const;

  // JSON object; every key optional, unknown keys rejected. Relative paths
  // are taken as given (relative to the working directory).
  static PipelineConfig FromJson(const std::string& text);
  static PipelineConfig Load(const std::filesystem::path& path);
  std::string ToJson() const;
};

// Corpus load plus the index built from it.
struct Corpus {
  CorpusLoad load;
  CorpusIndex index;

  static Corpus Open(const std::filesystem::path& path);
};

// 100 * min(1, similarity fitness / upper bound for the melody's length).
double SyntheticScore(std::span<const Token> melody, const CorpusIndex& index);

struct Phase1Result {
  GaRun run;
  std::size_t new_melodies = 0;
  std::filesystem::path archive_file;
};

// Writes <out>/phase1_archive.tsv and puts every archived melody in `store`.
Phase1Result RunPhase1(const PipelineConfig& config, ScoreStore& store);
Phase1Result RunPhase1(const PipelineConfig& config);

struct Phase2Result {
  TrainResult training;
  std::size_t examples = 0;
  std::size_t synthetic_scores = 0;
  std::filesystem::path loss_trace_file;
};

// With ScorerKind::kSynthetic, every unscored melody first receives one
// SyntheticScore. Saves the model to config.model_path and the per-epoch
// mse to <out>/loss_trace.tsv. Throws InsufficientScores.
Phase2Result RunPhase2(const PipelineConfig& config, ScoreStore& store);
Phase2Result RunPhase2(const PipelineConfig& config);

struct GeneratedMelody {
  Melody melody;
  std::string melody_id;
  double predicted_score = 0.0;
  std::string abc;
  std::filesystem::path file;
};

struct Phase3Result {
  GaRun run;
  std::vector<GeneratedMelody> melodies;  // best first
};

// Top `output_count` distinct archive melodies by predicted score, ties in
// archive order.
std::vector<ArchiveEntry> TopDistinct(std::span<const ArchiveEntry> archive,
                                      std::size_t count);

// Writes <out>/phase3_NN.abc for each output and <out>/phase3_archive.tsv.
Phase3Result RunPhase3(const PipelineConfig& config,
                       const SurrogateModel& model);
Phase3Result RunPhase3(const PipelineConfig& config);

struct BenchConfig {
  std::int64_t base_corpus_tokens = 4000;
  std::vector<int> corpus_multipliers = {1, 2};
  std::vector<int> melody_lengths = {15, 30, 60};
  int tune_length = 40;
  int melodies = 16;
  int trials = 7;
  double min_trial_seconds = 0.02;
  int hidden_size = 50;
  std::uint64_t seed = 7;
};

struct TimingRow {
  std::string evaluator;  // "naive", "indexed" or "surrogate"
  std::int64_t corpus_tokens = 0;
  int melody_length = 0;
  double seconds_per_eval = 0.0;  // best trial
};

struct TimingReport {
  std::vector<TimingRow> rows;

  // Throws std::out_of_range when the row is missing.
  double SecondsPerEval(const std::string& evaluator,
                        std::int64_t corpus_tokens, int melody_length) const;
  // evaluator, corpus_tokens, melody_length, seconds_per_eval (TSV).
  void WriteTsv(std::ostream& out) const;
  void WriteTable(std::ostream& out) const;
};

// Synthetic corpora are sampled from the token distribution of `corpus`;
// the k-times corpus holds the base tunes plus (k - 1) x as many new ones.
TimingReport BenchTiming(const CorpusIndex& corpus, const BenchConfig& config);

}  // namespace melgen

#endif  // MELGEN_PIPELINE_H_
