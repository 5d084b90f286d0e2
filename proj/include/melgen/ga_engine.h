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

// Fixed-length melody genetic algorithm.
//
// Each generation the two fittest members become the only parents. The best
// member is carried over unchanged and the remaining population_size - 1
// slots are filled with children built by uniform crossover of the parents
// followed by per-gene mutation. New genes are always drawn from the corpus
// token distribution. Every evaluated melody is kept in the run archive.

#ifndef MELGEN_GA_ENGINE_H_
#define MELGEN_GA_ENGINE_H_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "melgen/abc.h"
#include "melgen/corpus_index.h"

namespace melgen {

using Rng = std::mt19937_64;

// Uniform on [0, 1) with 53 random bits; identical on every platform.
double Uniform01(Rng& rng);

struct Melody {
  std::vector<Token> tokens;

  std::size_t size() const { return tokens.size(); }
  friend auto operator<=>(const Melody&, const Melody&) = default;
};

// Categorical distribution over tokens, sampled by inverse CDF.
class TokenSampler {
 public:
  // Probabilities must be non-negative and sum to one within 1e-6.
  explicit TokenSampler(std::vector<std::pair<Token, double>> table);
  static TokenSampler FromIndex(const CorpusIndex& index);

  Token Sample(Rng& rng) const;
  const std::vector<Token>& tokens() const { return tokens_; }

 private:
  std::vector<Token> tokens_;
  std::vector<double> cumulative_;
};

struct GaConfig {
  int max_iterations = 2000;
  int population_size = 20;
  double crossover_rate = 0.5;
  double mutation_rate = 0.1;
  int melody_length = 30;
  std::uint64_t rng_seed = 1;

  // Throws ConfigError.
  void Validate() const;
};

struct ArchiveEntry {
  Melody melody;
  double fitness = 0.0;
  int iteration = 0;  // 0 is the initial population

  friend bool operator==(const ArchiveEntry&, const ArchiveEntry&) = default;
};

struct GaRun {
  Melody best;
  double best_fitness = 0.0;
  std::vector<ArchiveEntry> archive;
  // Best fitness of the initial population, then after every iteration.
  std::vector<double> fitness_trace;

  friend bool operator==(const GaRun&, const GaRun&) = default;
};

// Must be safe to call concurrently.
using FitnessFn = std::function<double(const Melody&)>;

Melody RandomMelody(const TokenSampler& sampler, int length, Rng& rng);

struct ParentIndices {
  std::size_t best1 = 0;
  std::size_t best2 = 0;
};

// Highest and second-highest fitness; ties go to the lower index.
ParentIndices SelectParents(std::span<const double> fitness);

// Gene i comes from best1 when rand >= 1 - rate, else from best2.
// Throws LengthMismatch.
Melody Crossover(const Melody& best1, const Melody& best2, double rate,
                 Rng& rng);

// Gene i is redrawn from the sampler when rand < rate, else kept.
Melody Mutate(Melody child, double rate, const TokenSampler& sampler,
              Rng& rng);

// Writes fitness(population[i]) into out[i]. The OpenMP version keeps the
// population order, so both produce identical output.
void EvaluatePopulation(std::span<const Melody> population,
                        const FitnessFn& fitness, std::span<double> out);
void EvaluatePopulationSerial(std::span<const Melody> population,
                              const FitnessFn& fitness, std::span<double> out);

struct RunOptions {
  bool parallel_evaluation = true;
};

// Throws ConfigError, or FitnessError naming the failing iteration.
GaRun RunGa(const GaConfig& config, const TokenSampler& sampler,
            const FitnessFn& fitness, const RunOptions& options = {});

// Archive text format, one line per evaluated melody:
//   <iteration> TAB <fitness> TAB <ABC body on one line>
void WriteArchive(std::ostream& out, std::span<const ArchiveEntry> archive);
std::vector<ArchiveEntry> ReadArchive(std::istream& in);

// Shortest decimal text that parses back to the same double.
std::string FormatDouble(double value);

}  // namespace melgen

#endif  // MELGEN_GA_ENGINE_H_
