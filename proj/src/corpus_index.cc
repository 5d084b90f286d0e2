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

#include "melgen/corpus_index.h"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "melgen/errors.h"

namespace melgen {

std::uint64_t PackGram(std::span<const Token> gram) {
  std::uint64_t key = 0;
  for (const Token& t : gram) key = (key << 16) | (TokenCode(t) + 1u);
  return key;
}

CorpusIndex CorpusIndex::Build(std::span<const Tune> corpus) {
  if (corpus.empty()) throw EmptyCorpus("cannot index an empty corpus");
  CorpusIndex index;
  std::map<Token, std::int64_t> counts;
  for (const Tune& tune : corpus) {
    const std::span<const Token> body(tune.body);
    for (const Token& t : body) ++counts[t];
    index.total_tokens_ += static_cast<std::int64_t>(body.size());
    for (int order = kMinGramOrder; order <= kMaxGramOrder; ++order) {
      auto& set = index.grams_[order - kMinGramOrder];
      for (std::size_t i = 0; i + order <= body.size(); ++i) {
        set.insert(PackGram(body.subspan(i, order)));
      }
    }
  }
  if (index.total_tokens_ == 0) throw EmptyCorpus("corpus has no tokens");
  for (const auto& [token, count] : counts) {
    index.alphabet_.push_back(token);
    index.prob_table_.push_back(
        {token, count,
         static_cast<double>(count) / static_cast<double>(index.total_tokens_)});
  }
  return index;
}

const std::unordered_set<std::uint64_t>& CorpusIndex::grams(int order) const {
  if (order < kMinGramOrder || order > kMaxGramOrder) {
    throw std::out_of_range("gram order must be 2, 3 or 4");
  }
  return grams_[order - kMinGramOrder];
}

bool CorpusIndex::Contains(std::span<const Token> gram) const {
  return grams(static_cast<int>(gram.size())).contains(PackGram(gram));
}

double CorpusIndex::Probability(const Token& token) const {
  auto it = std::lower_bound(
      prob_table_.begin(), prob_table_.end(), token,
      [](const TokenFrequency& f, const Token& t) { return f.token < t; });
  return (it != prob_table_.end() && it->token == token) ? it->probability
                                                         : 0.0;
}

GramCounts CountMatchingGrams(std::span<const Token> melody,
                              const CorpusIndex& index) {
  std::int64_t found[kMaxGramOrder + 1] = {};
  for (int order = kMinGramOrder; order <= kMaxGramOrder; ++order) {
    const auto& set = index.grams(order);
    for (std::size_t i = 0; i + order <= melody.size(); ++i) {
      if (set.contains(PackGram(melody.subspan(i, order)))) ++found[order];
    }
  }
  return {found[2], found[3], found[4]};
}

std::int64_t SimilarityFitness(std::span<const Token> melody,
                               const CorpusIndex& index,
                               const FitnessWeights& weights) {
  return CountMatchingGrams(melody, index).Weighted(weights);
}

namespace {

bool OccursInCorpus(std::span<const Token> window,
                    std::span<const Tune> corpus) {
  const std::size_t n = window.size();
  for (const Tune& tune : corpus) {
    const auto& body = tune.body;
    for (std::size_t p = 0; p + n <= body.size(); ++p) {
      std::size_t k = 0;
      while (k < n && body[p + k] == window[k]) ++k;
      if (k == n) return true;
    }
  }
  return false;
}

}  // namespace

GramCounts CountMatchingGramsNaive(std::span<const Token> melody,
                                   std::span<const Tune> corpus) {
  std::int64_t found[kMaxGramOrder + 1] = {};
  for (int order = kMinGramOrder; order <= kMaxGramOrder; ++order) {
    for (std::size_t i = 0; i + order <= melody.size(); ++i) {
      if (OccursInCorpus(melody.subspan(i, order), corpus)) ++found[order];
    }
  }
  return {found[2], found[3], found[4]};
}

std::int64_t SimilarityFitnessNaive(std::span<const Token> melody,
                                    std::span<const Tune> corpus,
                                    const FitnessWeights& weights) {
  return CountMatchingGramsNaive(melody, corpus).Weighted(weights);
}

std::int64_t SimilarityUpperBound(int melody_length,
                                  const FitnessWeights& weights) {
  auto windows = [&](int order) {
    return static_cast<std::int64_t>(std::max(0, melody_length - order + 1));
  };
  return weights.bigram * windows(2) + weights.trigram * windows(3) +
         weights.fourgram * windows(4);
}

}  // namespace melgen
