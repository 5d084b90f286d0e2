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

#include "melgen/pipeline.h"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "gtest/gtest.h"
#include "melgen/errors.h"
#include "test_util.h"

namespace melgen {
namespace {

using testing::DataPath;
using testing::MakeMelody;
using testing::MakeTune;
using testing::TempDir;

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

PipelineConfig SmallConfig(const std::filesystem::path& dir) {
  PipelineConfig c;
  c.corpus_path = DataPath("corpus_b");
  c.store_path = dir / "store.jsonl";
  c.model_path = dir / "model" / "m.txt";
  c.out_dir = dir / "out";
  c.phase1 = {.max_iterations = 10, .population_size = 6, .melody_length = 16,
              .rng_seed = 3};
  c.phase3 = {.max_iterations = 8, .population_size = 6, .melody_length = 16,
              .rng_seed = 4};
  c.train = {.epochs = 15, .learning_rate = 0.1};
  c.hidden_size = 4;
  c.fitness = FitnessKind::kIndexed;
  c.scorer = ScorerKind::kSynthetic;
  return c;
}

TEST(PipelineConfigTest, JsonRoundTrip) {
  PipelineConfig c;
  c.corpus_path = "tunes/";
  c.hidden_size = 12;
  c.phase1.mutation_rate = 0.25;
  c.phase3.rng_seed = 99;
  c.train.learning_rate = 0.125;
  c.fitness = FitnessKind::kIndexed;
  c.scorer = ScorerKind::kSynthetic;
  const PipelineConfig back = PipelineConfig::FromJson(c.ToJson());
  EXPECT_EQ(back.ToJson(), c.ToJson());
  EXPECT_EQ(back.corpus_path, "tunes/");
  EXPECT_EQ(back.hidden_size, 12);
  EXPECT_EQ(back.phase1.mutation_rate, 0.25);
  EXPECT_EQ(back.phase3.rng_seed, 99u);
  EXPECT_EQ(back.train.learning_rate, 0.125);
  EXPECT_EQ(back.fitness, FitnessKind::kIndexed);
}

TEST(PipelineConfigTest, PartialJsonKeepsDefaults) {
  const PipelineConfig c =
      PipelineConfig::FromJson(R"({"phase1": {"max_iterations": 5}, "scorer": "synthetic"})");
  EXPECT_EQ(c.phase1.max_iterations, 5);
  EXPECT_EQ(c.phase1.population_size, 20);
  EXPECT_EQ(c.phase3.max_iterations, 500);
  EXPECT_EQ(c.scorer, ScorerKind::kSynthetic);
  EXPECT_EQ(c.output_count, 6);
}

TEST(PipelineConfigTest, RejectsBadInput) {
  for (const char* text :
       {"{", "[]", R"({"bogus": 1})", R"({"phase1": {"speed": 2}})",
        R"({"hidden_size": "big"})", R"({"fitness": "fast"})",
        R"({"hidden_size": 0})", R"({"output_count": 0})",
        R"({"phase3": {"crossover_rate": 2}})", R"({"train": {"epochs": 0}})"}) {
    EXPECT_THROW(PipelineConfig::FromJson(text), ConfigError) << text;
  }
}

TEST(SyntheticScoreTest, HandValues) {
  const std::vector<Tune> corpus = {MakeTune("t", "CDEFG")};
  const auto index = CorpusIndex::Build(corpus);
  EXPECT_EQ(SyntheticScore(Tokenize("CDEFG"), index), 100.0);
  // CD, DE and CDE match: (2 + 10) / 234.
  EXPECT_DOUBLE_EQ(SyntheticScore(Tokenize("CDEAA"), index), 100.0 * 12 / 234);
  EXPECT_EQ(SyntheticScore(Tokenize("AAAAA"), index), 0.0);
  EXPECT_EQ(SyntheticScore(Tokenize("C"), index), 0.0);
}

TEST(TopDistinctTest, SkipsDuplicatesAndKeepsArchiveOrderOnTies) {
  const std::vector<ArchiveEntry> archive = {
      {MakeMelody("C"), 5, 0}, {MakeMelody("D"), 9, 0}, {MakeMelody("D"), 9, 1},
      {MakeMelody("E"), 5, 1}, {MakeMelody("F"), 7, 2}};
  const auto top = TopDistinct(archive, 3);
  ASSERT_EQ(top.size(), 3u);
  EXPECT_EQ(top[0].melody, MakeMelody("D"));
  EXPECT_EQ(top[1].melody, MakeMelody("F"));
  EXPECT_EQ(top[2].melody, MakeMelody("C"));
  EXPECT_EQ(TopDistinct(archive, 10).size(), 4u);
}

TEST(PipelineTest, ThreePhasesEndToEnd) {
  TempDir dir;
  const PipelineConfig config = SmallConfig(dir.path());

  const Phase1Result p1 = RunPhase1(config);
  EXPECT_EQ(p1.run.archive.size(), 6u + 10u * 5u);
  const std::set<Melody> distinct = [&] {
    std::set<Melody> s;
    for (const auto& e : p1.run.archive) s.insert(e.melody);
    return s;
  }();
  EXPECT_EQ(p1.new_melodies, distinct.size());
  std::istringstream archive_text(ReadFile(p1.archive_file));
  EXPECT_EQ(ReadArchive(archive_text), p1.run.archive);

  // Phase 1 fitness is the corpus similarity.
  const Corpus corpus = Corpus::Open(config.corpus_path);
  for (const auto& e : p1.run.archive) {
    ASSERT_EQ(e.fitness, SimilarityFitnessNaive(e.melody.tokens, corpus.load.tunes));
  }

  const Phase2Result p2 = RunPhase2(config);
  EXPECT_EQ(p2.examples, distinct.size());
  EXPECT_EQ(p2.synthetic_scores, distinct.size());
  EXPECT_EQ(p2.training.loss_trace.size(), 15u);
  EXPECT_TRUE(std::filesystem::exists(config.model_path));
  const std::string trace = ReadFile(p2.loss_trace_file);
  EXPECT_EQ(std::count(trace.begin(), trace.end(), '\n'), 16);

  ScoreStore store(config.store_path);
  for (const auto& r : store.Snapshot()) {
    ASSERT_EQ(r.scores.size(), 1u);
    EXPECT_EQ(r.scores[0], SyntheticScore(r.melody.tokens, corpus.index));
  }

  // A second phase 2 run adds no synthetic scores.
  EXPECT_EQ(RunPhase2(config).synthetic_scores, 0u);

  const Phase3Result p3 = RunPhase3(config);
  ASSERT_EQ(p3.melodies.size(), 6u);
  const SurrogateModel model = SurrogateModel::Load(config.model_path);
  std::set<std::string> ids;
  for (std::size_t k = 0; k < p3.melodies.size(); ++k) {
    const GeneratedMelody& g = p3.melodies[k];
    EXPECT_TRUE(ids.insert(g.melody_id).second);
    if (k > 0) EXPECT_GE(p3.melodies[k - 1].predicted_score, g.predicted_score);
    EXPECT_EQ(g.predicted_score, Predict(model, g.melody));
    EXPECT_EQ(ReadFile(g.file), g.abc);
    const CorpusLoad parsed = ParseTunes(g.abc, g.file.string());
    ASSERT_EQ(parsed.tunes.size(), 1u);
    EXPECT_EQ(parsed.tunes[0].body, g.melody.tokens);
  }
  EXPECT_TRUE(std::filesystem::exists(config.out_dir / "phase3_archive.tsv"));
}

TEST(PipelineTest, NaiveAndIndexedPhaseOneAgree) {
  TempDir dir;
  PipelineConfig config = SmallConfig(dir.path());
  ScoreStore a;
  ScoreStore b;
  const Phase1Result indexed = RunPhase1(config, a);
  config.fitness = FitnessKind::kNaive;
  const Phase1Result naive = RunPhase1(config, b);
  EXPECT_EQ(indexed.run, naive.run);
}

TEST(PipelineTest, PhaseTwoWithoutScoresFails) {
  TempDir dir;
  PipelineConfig config = SmallConfig(dir.path());
  config.scorer = ScorerKind::kStore;
  ScoreStore store;
  EXPECT_THROW(RunPhase2(config, store), InsufficientScores);
  RunPhase1(config, store);
  EXPECT_THROW(RunPhase2(config, store), InsufficientScores);
  config.min_scores = 2;
  store.AddScore(store.Snapshot().front().melody_id, 60);
  EXPECT_THROW(RunPhase2(config, store), InsufficientScores);
  config.min_scores = 1;
  EXPECT_EQ(RunPhase2(config, store).examples, 1u);
}

TEST(PipelineTest, PhaseThreeSamplesOnlyModelTokens) {
  TempDir dir;
  PipelineConfig config = SmallConfig(dir.path());
  SurrogateModel model(Tokenize("DEFG"), 3);
  model.InitializeRandom(1, 0.3);
  const Phase3Result p3 = RunPhase3(config, model);
  const std::set<Token> allowed(model.alphabet().begin(), model.alphabet().end());
  for (const auto& e : p3.run.archive) {
    for (const Token& t : e.melody.tokens) ASSERT_TRUE(allowed.contains(t));
  }
}

TEST(PipelineTest, PhaseOneArchivesEveryEvaluation) {
  TempDir dir;
  PipelineConfig config;
  config.corpus_path = DataPath("corpus_a");
  config.out_dir = dir.path();
  config.phase1 = {.max_iterations = 50};
  config.fitness = FitnessKind::kIndexed;
  ScoreStore store;
  const Phase1Result r = RunPhase1(config, store);
  ASSERT_EQ(r.run.archive.size(), 970u);
  std::set<Melody> distinct;
  for (const auto& e : r.run.archive) distinct.insert(e.melody);
  // The store keys melodies by content, so repeats collapse.
  EXPECT_EQ(store.size(), distinct.size());
  EXPECT_EQ(r.new_melodies, distinct.size());
}

TEST(PipelineTest, PhaseOneIsReproducible) {
  TempDir dir;
  const PipelineConfig config = SmallConfig(dir.path());
  ScoreStore a;
  ScoreStore b;
  EXPECT_EQ(RunPhase1(config, a).run, RunPhase1(config, b).run);
  std::ostringstream ta;
  std::ostringstream tb;
  a.WriteTo(ta);
  b.WriteTo(tb);
  EXPECT_EQ(ta.str(), tb.str());
}

TEST(PipelineTest, PhaseOneBeatsRandomMelodies) {
  const Corpus corpus = Corpus::Open(DataPath("corpus_a"));
  const TokenSampler sampler = TokenSampler::FromIndex(corpus.index);
  Rng rng(99);
  double random_mean = 0.0;
  for (int i = 0; i < 1000; ++i) {
    random_mean += SimilarityFitness(RandomMelody(sampler, 30, rng).tokens, corpus.index);
  }
  random_mean /= 1000;
  TempDir dir;
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    PipelineConfig config;
    config.corpus_path = DataPath("corpus_a");
    config.out_dir = dir.path();
    config.phase1 = {.max_iterations = 50, .rng_seed = seed};
    config.fitness = FitnessKind::kIndexed;
    ScoreStore store;
    wins += RunPhase1(config, store).run.best_fitness > random_mean;
  }
  EXPECT_GE(wins, 19);
}

TEST(PipelineTest, EmittedMelodiesTopTheSurrogate) {
  TempDir dir;
  const PipelineConfig config = SmallConfig(dir.path());
  RunPhase1(config);
  RunPhase2(config);
  const Phase3Result p3 = RunPhase3(config);
  double best = 0.0;
  for (const auto& e : p3.run.archive) best = std::max(best, e.fitness);
  EXPECT_EQ(p3.melodies.front().predicted_score, best);

  // The saved model reproduces the run exactly.
  const SurrogateModel model = SurrogateModel::Load(config.model_path);
  const Phase3Result again = RunPhase3(config, model);
  EXPECT_EQ(again.run, p3.run);
}

TEST(PipelineTest, EndToEndIsDeterministic) {
  auto run = [](const std::filesystem::path& dir) {
    const PipelineConfig config = SmallConfig(dir);
    RunPhase1(config);
    RunPhase2(config);
    std::vector<std::string> abc;
    for (const auto& g : RunPhase3(config).melodies) abc.push_back(g.abc);
    return abc;
  };
  TempDir a;
  TempDir b;
  EXPECT_EQ(run(a.path()), run(b.path()));
}

TEST(PipelineTest, MissingCorpusIsReported) {
  TempDir dir;
  PipelineConfig config = SmallConfig(dir.path());
  config.corpus_path = dir.path() / "nope";
  EXPECT_THROW(RunPhase1(config), IoError);
  config.corpus_path = DataPath("empty");
  EXPECT_THROW(RunPhase1(config), EmptyCorpus);
}

TEST(BenchTimingTest, ReportsEveryCombination) {
  const Corpus corpus = Corpus::Open(DataPath("corpus_b"));
  BenchConfig bench{.base_corpus_tokens = 400, .melody_lengths = {8, 16},
                    .melodies = 4, .trials = 2, .min_trial_seconds = 0.001,
                    .hidden_size = 4};
  const TimingReport report = BenchTiming(corpus.index, bench);
  EXPECT_EQ(report.rows.size(), 3u * 2u * 2u);
  for (const auto& row : report.rows) EXPECT_GT(row.seconds_per_eval, 0.0);
  const auto big = report.rows.back().corpus_tokens;
  EXPECT_GE(big, 800);
  EXPECT_GT(report.SecondsPerEval("naive", big, 16), 0.0);
  EXPECT_THROW(report.SecondsPerEval("naive", 1, 16), std::out_of_range);
  std::ostringstream tsv;
  report.WriteTsv(tsv);
  const std::string text = tsv.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 13);
}

}  // namespace
}  // namespace melgen
