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

#include "melgen/ga_engine.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "melgen/errors.h"

namespace melgen {

double Uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

TokenSampler::TokenSampler(std::vector<std::pair<Token, double>> table) {
  if (table.empty()) throw ConfigError("token distribution is empty");
  double total = 0.0;
  for (const auto& [token, p] : table) {
    if (!(p >= 0.0)) throw ConfigError("negative token probability");
    total += p;
    tokens_.push_back(token);
    cumulative_.push_back(total);
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw ConfigError("token probabilities sum to " + FormatDouble(total));
  }
  cumulative_.back() = 1.0;
}

TokenSampler TokenSampler::FromIndex(const CorpusIndex& index) {
  std::vector<std::pair<Token, double>> table;
  for (const auto& f : index.prob_table()) table.emplace_back(f.token, f.probability);
  return TokenSampler(std::move(table));
}

Token TokenSampler::Sample(Rng& rng) const {
  const double u = Uniform01(rng);
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  // Zero-probability entries share the cumulative value of their
  // predecessor and so are never selected.
  return tokens_[static_cast<std::size_t>(it - cumulative_.begin())];
}

void GaConfig::Validate() const {
  if (max_iterations < 0) throw ConfigError("max_iterations must be >= 0");
  if (population_size < 2) throw ConfigError("population_size must be >= 2");
  if (melody_length < 1) throw ConfigError("melody_length must be positive");
  if (!(crossover_rate >= 0.0 && crossover_rate <= 1.0)) {
    throw ConfigError("crossover_rate must lie in [0, 1]");
  }
  if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0)) {
    throw ConfigError("mutation_rate must lie in [0, 1]");
  }
}

Melody RandomMelody(const TokenSampler& sampler, int length, Rng& rng) {
  Melody m;
  m.tokens.reserve(static_cast<std::size_t>(length));
  for (int i = 0; i < length; ++i) m.tokens.push_back(sampler.Sample(rng));
  return m;
}

ParentIndices SelectParents(std::span<const double> fitness) {
  if (fitness.size() < 2) throw ConfigError("selection needs two members");
  ParentIndices p{0, 1};
  if (fitness[1] > fitness[0]) std::swap(p.best1, p.best2);
  for (std::size_t i = 2; i < fitness.size(); ++i) {
    if (fitness[i] > fitness[p.best1]) {
      p.best2 = p.best1;
      p.best1 = i;
    } else if (fitness[i] > fitness[p.best2]) {
      p.best2 = i;
    }
  }
  return p;
}

Melody Crossover(const Melody& best1, const Melody& best2, double rate,
                 Rng& rng) {
  if (best1.size() != best2.size()) {
    throw LengthMismatch("crossover parents have lengths " +
                         std::to_string(best1.size()) + " and " +
                         std::to_string(best2.size()));
  }
  const double threshold = 1.0 - rate;
  Melody child;
  child.tokens.reserve(best1.size());
  for (std::size_t i = 0; i < best1.size(); ++i) {
    child.tokens.push_back(Uniform01(rng) >= threshold ? best1.tokens[i]
                                                       : best2.tokens[i]);
  }
  return child;
}

Melody Mutate(Melody child, double rate, const TokenSampler& sampler,
              Rng& rng) {
  for (Token& gene : child.tokens) {
    if (Uniform01(rng) < rate) gene = sampler.Sample(rng);
  }
  return child;
}

void EvaluatePopulationSerial(std::span<const Melody> population,
                              const FitnessFn& fitness, std::span<double> out) {
  for (std::size_t i = 0; i < population.size(); ++i) {
    out[i] = fitness(population[i]);
  }
}

void EvaluatePopulation(std::span<const Melody> population,
                        const FitnessFn& fitness, std::span<double> out) {
  const auto n = static_cast<std::int64_t>(population.size());
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      out[i] = fitness(population[i]);
    } catch (...) {
#pragma omp critical(melgen_eval_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

namespace {

void Evaluate(std::span<const Melody> population, const FitnessFn& fitness,
              std::span<double> out, const RunOptions& options,
              int iteration) {
  try {
    if (options.parallel_evaluation) {
      EvaluatePopulation(population, fitness, out);
    } else {
      EvaluatePopulationSerial(population, fitness, out);
    }
  } catch (const std::exception& e) {
    throw FitnessError("fitness evaluation failed at iteration " +
                       std::to_string(iteration) + ": " + e.what());
  }
}

}  // namespace

GaRun RunGa(const GaConfig& config, const TokenSampler& sampler,
            const FitnessFn& fitness, const RunOptions& options) {
  config.Validate();
  Rng rng(config.rng_seed);
  const auto pop_size = static_cast<std::size_t>(config.population_size);

  GaRun run;
  run.archive.reserve(pop_size + static_cast<std::size_t>(config.max_iterations) *
                                     (pop_size - 1));
  run.fitness_trace.reserve(static_cast<std::size_t>(config.max_iterations) + 1);

  std::vector<Melody> population;
  population.reserve(pop_size);
  for (std::size_t i = 0; i < pop_size; ++i) {
    population.push_back(RandomMelody(sampler, config.melody_length, rng));
  }
  std::vector<double> scores(pop_size);
  Evaluate(population, fitness, scores, options, 0);
  for (std::size_t i = 0; i < pop_size; ++i) {
    run.archive.push_back({population[i], scores[i], 0});
  }

  std::vector<Melody> next(pop_size);
  std::vector<double> next_scores(pop_size);
  ParentIndices parents = SelectParents(scores);
  run.fitness_trace.push_back(scores[parents.best1]);

  for (int iteration = 1; iteration <= config.max_iterations; ++iteration) {
    const Melody& best1 = population[parents.best1];
    const Melody& best2 = population[parents.best2];
    next[0] = best1;
    next_scores[0] = scores[parents.best1];
    for (std::size_t c = 1; c < pop_size; ++c) {
      next[c] = Mutate(Crossover(best1, best2, config.crossover_rate, rng),
                       config.mutation_rate, sampler, rng);
    }
    Evaluate(std::span<const Melody>(next).subspan(1), fitness,
             std::span<double>(next_scores).subspan(1), options, iteration);
    for (std::size_t c = 1; c < pop_size; ++c) {
      run.archive.push_back({next[c], next_scores[c], iteration});
    }
    population.swap(next);
    scores.swap(next_scores);
    parents = SelectParents(scores);
    run.fitness_trace.push_back(scores[parents.best1]);
  }

  run.best = population[parents.best1];
  run.best_fitness = scores[parents.best1];
  return run;
}

std::string FormatDouble(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, end);
}

void WriteArchive(std::ostream& out, std::span<const ArchiveEntry> archive) {
  for (const ArchiveEntry& e : archive) {
    std::string body = RenderBody(e.melody.tokens);
    std::replace(body.begin(), body.end(), '\n', ' ');
    out << e.iteration << '\t' << FormatDouble(e.fitness) << '\t' << body
        << '\n';
  }
}

std::vector<ArchiveEntry> ReadArchive(std::istream& in) {
  std::vector<ArchiveEntry> archive;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab1 = line.find('\t');
    const auto tab2 = tab1 == std::string::npos ? tab1 : line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos) {
      throw StorageError("archive line " + std::to_string(line_no) +
                         ": expected three tab-separated fields");
    }
    ArchiveEntry e;
    const char* first = line.data();
    auto r1 = std::from_chars(first, first + tab1, e.iteration);
    auto r2 = std::from_chars(first + tab1 + 1, first + tab2, e.fitness);
    if (r1.ec != std::errc() || r2.ec != std::errc()) {
      throw StorageError("archive line " + std::to_string(line_no) +
                         ": malformed number");
    }
    e.melody.tokens = Tokenize(std::string_view(line).substr(tab2 + 1));
    archive.push_back(std::move(e));
  }
  return archive;
}

}  // namespace melgen
