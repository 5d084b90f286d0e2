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

// N-gram membership sets and token frequencies of a reference corpus, and
// the corpus-similarity fitness
//
//   fitness(m) = N2 + 10 N3 + 100 N4
//
// where Nn counts the length-n windows of m (with multiplicity) that occur
// somewhere inside a single corpus tune.

#ifndef MELGEN_CORPUS_INDEX_H_
#define MELGEN_CORPUS_INDEX_H_

#include <cstdint>
#include <span>
#include <unordered_set>
#include <vector>

#include "melgen/abc.h"

namespace melgen {

inline constexpr int kMinGramOrder = 2;
inline constexpr int kMaxGramOrder = 4;

struct FitnessWeights {
  std::int64_t bigram = 1;
  std::int64_t trigram = 10;
  std::int64_t fourgram = 100;
};

struct GramCounts {
  std::int64_t n2 = 0;
  std::int64_t n3 = 0;
  std::int64_t n4 = 0;

  std::int64_t Weighted(const FitnessWeights& w = {}) const {
    return w.bigram * n2 + w.trigram * n3 + w.fourgram * n4;
  }
  friend bool operator==(const GramCounts&, const GramCounts&) = default;
};

struct TokenFrequency {
  Token token;
  std::int64_t count = 0;
  double probability = 0.0;  // count / total_tokens
};

// Packs up to four tokens into one key (16 bits per token code).
std::uint64_t PackGram(std::span<const Token> gram);

class CorpusIndex {
 public:
  // Throws EmptyCorpus when `corpus` is empty.
  static CorpusIndex Build(std::span<const Tune> corpus);

  // `gram` must have length 2, 3 or 4.
  bool Contains(std::span<const Token> gram) const;
  const std::unordered_set<std::uint64_t>& grams(int order) const;

  // Ordered by token; probabilities sum to one.
  const std::vector<TokenFrequency>& prob_table() const { return prob_table_; }
  const std::vector<Token>& token_alphabet() const { return alphabet_; }
  std::int64_t total_tokens() const { return total_tokens_; }
  // Zero for tokens outside the alphabet.
  double Probability(const Token& token) const;

 private:
  CorpusIndex() = default;

  std::unordered_set<std::uint64_t> grams_[kMaxGramOrder - kMinGramOrder + 1];
  std::vector<TokenFrequency> prob_table_;
  std::vector<Token> alphabet_;
  std::int64_t total_tokens_ = 0;
};

// Constant-time membership per window.
GramCounts CountMatchingGrams(std::span<const Token> melody,
                              const CorpusIndex& index);
std::int64_t SimilarityFitness(std::span<const Token> melody,
                               const CorpusIndex& index,
                               const FitnessWeights& weights = {});

// Same value, computed by scanning every tune note by note for every window
// of every order. Cost grows linearly with the corpus size.
GramCounts CountMatchingGramsNaive(std::span<const Token> melody,
                                   std::span<const Tune> corpus);
std::int64_t SimilarityFitnessNaive(std::span<const Token> melody,
                                    std::span<const Tune> corpus,
                                    const FitnessWeights& weights = {});

// Fitness of a melody whose every window is in the corpus.
std::int64_t SimilarityUpperBound(int melody_length,
                                  const FitnessWeights& weights = {});

}  // namespace melgen

#endif  // MELGEN_CORPUS_INDEX_H_
