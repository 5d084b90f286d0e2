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
#include <atomic>
#include <cmath>
#include <set>
#include <sstream>

#include "gtest/gtest.h"
#include "melgen/errors.h"
#include "test_util.h"

namespace melgen {
namespace {

using testing::MakeMelody;

const Token kC = Tokenize("C")[0];
const Token kD = Tokenize("D")[0];
const Token kE = Tokenize("E")[0];
const Token kG = Tokenize("G")[0];

TokenSampler ThreeTokenSampler() {
  return TokenSampler({{kC, 0.5}, {kD, 0.25}, {kE, 0.25}});
}

double CountOf(const Melody& m, const Token& t) {
  return static_cast<double>(std::count(m.tokens.begin(), m.tokens.end(), t));
}

TEST(Uniform01Test, RangeAndDeterminism) {
  Rng a(5);
  Rng b(5);
  for (int i = 0; i < 10000; ++i) {
    const double u = Uniform01(a);
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_EQ(u, Uniform01(b));
  }
}

TEST(TokenSamplerTest, FrequenciesFollowTable) {
  const TokenSampler sampler = ThreeTokenSampler();
  Rng rng(3);
  constexpr int kDraws = 200000;
  int c = 0;
  int d = 0;
  for (int i = 0; i < kDraws; ++i) {
    const Token t = sampler.Sample(rng);
    c += t == kC;
    d += t == kD;
  }
  EXPECT_NEAR(c / double{kDraws}, 0.5, 0.005);
  EXPECT_NEAR(d / double{kDraws}, 0.25, 0.005);
}

TEST(TokenSamplerTest, ZeroProbabilityTokensAreNeverDrawn) {
  const TokenSampler sampler({{kC, 0.0}, {kD, 1.0}, {kE, 0.0}});
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) ASSERT_EQ(sampler.Sample(rng), kD);
}

TEST(TokenSamplerTest, RejectsBadTables) {
  EXPECT_THROW(TokenSampler({}), ConfigError);
  EXPECT_THROW(TokenSampler({{kC, 0.5}}), ConfigError);
  EXPECT_THROW(TokenSampler({{kC, 1.5}, {kD, -0.5}}), ConfigError);
}

TEST(RandomMelodyTest, DegenerateDistribution) {
  Rng rng(1);
  EXPECT_EQ(RandomMelody(TokenSampler({{kC, 1.0}}), 5, rng), MakeMelody("CCCCC"));
}

TEST(RandomMelodyTest, ExpectedTokenCount) {
  // P(G) = 0.02 over 100 tokens: two G per melody on average.
  const TokenSampler sampler({{kC, 0.98}, {kG, 0.02}});
  Rng rng(77);
  double total = 0.0;
  for (int i = 0; i < 10000; ++i) total += CountOf(RandomMelody(sampler, 100, rng), kG);
  EXPECT_NEAR(total / 10000, 2.0, 0.1);
}

TEST(RandomMelodyTest, ReplaysWithTheSameSeed) {
  Rng a(123);
  Rng b(123);
  EXPECT_EQ(RandomMelody(ThreeTokenSampler(), 30, a),
            RandomMelody(ThreeTokenSampler(), 30, b));
}

TEST(SelectParentsTest, SmallCases) {
  const std::vector<double> f = {3, 9, 5};
  EXPECT_EQ(SelectParents(f).best1, 1u);
  EXPECT_EQ(SelectParents(f).best2, 2u);
  const std::vector<double> tie = {7, 7};
  EXPECT_EQ(SelectParents(tie).best1, 0u);
  EXPECT_EQ(SelectParents(tie).best2, 1u);
}

TEST(SelectParentsTest, MatchesFullSortOracle) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> value(0, 12);  // small range forces ties
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> f(20);
    for (double& x : f) x = value(rng);
    std::vector<std::size_t> order(f.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return f[a] > f[b]; });
    const ParentIndices p = SelectParents(f);
    ASSERT_EQ(p.best1, order[0]);
    ASSERT_EQ(p.best2, order[1]);
  }
}

TEST(SelectParentsTest, HighestTwoWithLowIndexTieBreak) {
  const std::vector<double> f = {3, 9, 1, 9, 7};
  const ParentIndices p = SelectParents(f);
  EXPECT_EQ(p.best1, 1u);
  EXPECT_EQ(p.best2, 3u);

  const std::vector<double> flat(6, 2.0);
  const ParentIndices q = SelectParents(flat);
  EXPECT_EQ(q.best1, 0u);
  EXPECT_EQ(q.best2, 1u);

  const std::vector<double> g = {1, 2, 5, 4};
  EXPECT_EQ(SelectParents(g).best1, 2u);
  EXPECT_EQ(SelectParents(g).best2, 3u);
}

TEST(CrossoverTest, ExtremeRatesCopyOneParent) {
  const Melody a = MakeMelody("CCCCCCCCCC");
  const Melody b = MakeMelody("DDDDDDDDDD");
  Rng rng(9);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(Crossover(a, b, 1.0, rng), a);
    EXPECT_EQ(Crossover(a, b, 0.0, rng), b);
  }
}

TEST(CrossoverTest, IdenticalParents) {
  const Melody a = MakeMelody("CDECDEG");
  Rng rng(2);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(Crossover(a, a, 0.5, rng), a);
}

// Replays the draws of a seeded generator: a draw of at least 0.5 takes the
// gene from best1.
TEST(CrossoverTest, ThreeGeneReplay) {
  const Melody best1 = MakeMelody("CCC");
  const Melody best2 = MakeMelody("DDD");
  for (std::uint64_t seed = 0; seed < 32; ++seed) {
    Rng probe(seed);
    Melody expected;
    for (int i = 0; i < 3; ++i) expected.tokens.push_back(Uniform01(probe) >= 0.5 ? kC : kD);
    Rng rng(seed);
    EXPECT_EQ(Crossover(best1, best2, 0.5, rng), expected) << seed;
  }
}

TEST(CrossoverTest, LengthMismatchThrows) {
  Rng rng(1);
  EXPECT_THROW(Crossover(MakeMelody("CD"), MakeMelody("CDE"), 0.5, rng),
               LengthMismatch);
}

// A gene comes from best1 exactly when its draw is at least 1 - rate.
TEST(CrossoverTest, DecisionFollowsTheDraw) {
  const Melody a = MakeMelody("C");
  const Melody b = MakeMelody("D");
  for (std::uint64_t seed = 0; seed < 64; ++seed) {
    Rng probe(seed);
    const double u = Uniform01(probe);
    Rng rng(seed);
    EXPECT_EQ(Crossover(a, b, 0.5, rng), u >= 0.5 ? a : b) << seed;
  }
}

TEST(MutateTest, ExtremeRates) {
  const TokenSampler only_g({{kG, 1.0}});
  Rng rng(4);
  const Melody m = MakeMelody("CDECDECDEC");
  EXPECT_EQ(Mutate(m, 0.0, only_g, rng), m);
  EXPECT_EQ(Mutate(m, 1.0, only_g, rng), MakeMelody("GGGGGGGGGG"));
}

TEST(MutateTest, FullRateDrawsFromTheDistribution) {
  const Melody m{std::vector<Token>(100000, kG)};
  Rng rng(6);
  const Melody out = Mutate(m, 1.0, ThreeTokenSampler(), rng);
  EXPECT_EQ(CountOf(out, kG), 0.0);
  EXPECT_NEAR(CountOf(out, kC) / 100000, 0.5, 0.01);
  EXPECT_NEAR(CountOf(out, kD) / 100000, 0.25, 0.01);
}

TEST(OperatorStatisticsTest, CrossoverSourceFrequency) {
  const Melody a{std::vector<Token>(1000, kC)};
  const Melody b{std::vector<Token>(1000, kD)};
  Rng rng(21);
  double from_a = 0.0;
  double genes = 0.0;
  for (int i = 0; i < 200; ++i) {
    from_a += CountOf(Crossover(a, b, 0.5, rng), kC);
    genes += 1000;
  }
  EXPECT_NEAR(from_a / genes, 0.5, 0.02);

  // At other rates the share of best1 genes equals the rate.
  double from_a_03 = 0.0;
  for (int i = 0; i < 200; ++i) from_a_03 += CountOf(Crossover(a, b, 0.3, rng), kC);
  EXPECT_NEAR(from_a_03 / genes, 0.3, 0.02);
}

TEST(OperatorStatisticsTest, MutationFrequency) {
  const TokenSampler only_g({{kG, 1.0}});
  const Melody m{std::vector<Token>(1000, kC)};
  Rng rng(22);
  double mutated = 0.0;
  double genes = 0.0;
  for (int i = 0; i < 200; ++i) {
    mutated += CountOf(Mutate(m, 0.1, only_g, rng), kG);
    genes += 1000;
  }
  EXPECT_NEAR(mutated / genes, 0.1, 0.005);
}

TEST(GaConfigTest, Validation) {
  EXPECT_NO_THROW(GaConfig{}.Validate());
  EXPECT_THROW((GaConfig{.population_size = 1}).Validate(), ConfigError);
  EXPECT_THROW((GaConfig{.melody_length = 0}).Validate(), ConfigError);
  EXPECT_THROW((GaConfig{.crossover_rate = 1.5}).Validate(), ConfigError);
  EXPECT_THROW((GaConfig{.mutation_rate = -0.1}).Validate(), ConfigError);
  EXPECT_THROW((GaConfig{.mutation_rate = std::nan("")}).Validate(), ConfigError);
  EXPECT_THROW((GaConfig{.max_iterations = -1}).Validate(), ConfigError);
}

double CountC(const Melody& m) { return CountOf(m, kC); }

TEST(RunGaTest, ShapeOfTheRun) {
  const GaConfig config{.max_iterations = 7, .population_size = 5,
                        .melody_length = 12, .rng_seed = 3};
  const GaRun run = RunGa(config, ThreeTokenSampler(), CountC);
  EXPECT_EQ(run.archive.size(), 5u + 7u * 4u);
  EXPECT_EQ(run.fitness_trace.size(), 8u);
  EXPECT_EQ(run.best.size(), 12u);
  EXPECT_EQ(run.best_fitness, CountC(run.best));
  EXPECT_EQ(run.best_fitness, run.fitness_trace.back());
  for (const ArchiveEntry& e : run.archive) {
    EXPECT_EQ(e.fitness, CountC(e.melody));
    EXPECT_EQ(e.melody.size(), 12u);
  }
  for (int it = 0; it <= 7; ++it) {
    const auto n = std::count_if(run.archive.begin(), run.archive.end(),
                                 [&](const ArchiveEntry& e) { return e.iteration == it; });
    EXPECT_EQ(n, it == 0 ? 5 : 4);
  }
  // The trace is the best fitness archived so far.
  double best = -1;
  for (int it = 0; it <= 7; ++it) {
    for (const ArchiveEntry& e : run.archive) {
      if (e.iteration == it) best = std::max(best, e.fitness);
    }
    EXPECT_EQ(run.fitness_trace[static_cast<std::size_t>(it)], best);
  }
}

TEST(RunGaTest, ConstantFitnessBookkeeping) {
  const GaConfig config{.max_iterations = 25, .population_size = 20};
  const GaRun run = RunGa(config, ThreeTokenSampler(), [](const Melody&) { return 0.0; });
  EXPECT_EQ(run.best_fitness, 0.0);
  EXPECT_EQ(run.archive.size(), 20u + 25u * 19u);
}

TEST(RunGaTest, ImprovesOnFixtureCorpus) {
  const CorpusLoad load = LoadCorpus(testing::DataPath("corpus_a"));
  const auto index = CorpusIndex::Build(load.tunes);
  const TokenSampler sampler = TokenSampler::FromIndex(index);
  const FitnessFn fitness = [&index](const Melody& m) {
    return static_cast<double>(SimilarityFitness(m.tokens, index));
  };
  int improved = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const GaConfig config{.max_iterations = 50, .rng_seed = seed};
    const GaRun run = RunGa(config, sampler, fitness);
    ASSERT_TRUE(std::is_sorted(run.fitness_trace.begin(), run.fitness_trace.end()));
    improved += run.best_fitness > run.fitness_trace.front();
  }
  EXPECT_GE(improved, 19);
}

TEST(RunGaTest, ZeroIterationsEvaluatesOnlyTheInitialPopulation) {
  const GaConfig config{.max_iterations = 0, .population_size = 4};
  const GaRun run = RunGa(config, ThreeTokenSampler(), CountC);
  EXPECT_EQ(run.archive.size(), 4u);
  EXPECT_EQ(run.fitness_trace.size(), 1u);
}

TEST(RunGaTest, TokensComeFromTheSamplerAlphabet) {
  const GaConfig config{.max_iterations = 20, .population_size = 6};
  const GaRun run = RunGa(config, ThreeTokenSampler(), CountC);
  const std::set<Token> allowed = {kC, kD, kE};
  for (const ArchiveEntry& e : run.archive) {
    for (const Token& t : e.melody.tokens) ASSERT_TRUE(allowed.contains(t));
  }
}

TEST(RunGaTest, SeededRunsAreIdenticalAndTracesNonDecreasing) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const GaConfig config{.max_iterations = 50, .population_size = 20,
                          .melody_length = 30, .rng_seed = seed};
    const GaRun a = RunGa(config, ThreeTokenSampler(), CountC);
    const GaRun b = RunGa(config, ThreeTokenSampler(), CountC,
                          RunOptions{.parallel_evaluation = false});
    ASSERT_EQ(a, b) << seed;
    ASSERT_TRUE(std::is_sorted(a.fitness_trace.begin(), a.fitness_trace.end()));
  }
}

TEST(RunGaTest, ClimbsASimpleObjective) {
  const GaConfig config{.max_iterations = 200, .melody_length = 30, .rng_seed = 5};
  const GaRun run = RunGa(config, ThreeTokenSampler(), CountC);
  EXPECT_GT(run.best_fitness, run.fitness_trace.front());
  EXPECT_GE(run.best_fitness, 28.0);
}

TEST(RunGaTest, FitnessFailureNamesTheIteration) {
  std::atomic<int> calls = 0;
  const GaConfig config{.max_iterations = 5, .population_size = 4};
  auto flaky = [&](const Melody& m) {
    if (++calls > 10) throw std::runtime_error("boom");
    return CountC(m);
  };
  try {
    RunGa(config, ThreeTokenSampler(), flaky);
    FAIL();
  } catch (const FitnessError& e) {
    // 4 initial + 3 per iteration: the eleventh call is in iteration 3.
    EXPECT_NE(std::string(e.what()).find("iteration 3"), std::string::npos)
        << e.what();
    EXPECT_NE(std::string(e.what()).find("boom"), std::string::npos);
  }
}

TEST(EvaluatePopulationTest, ParallelMatchesSerial) {
  Rng rng(8);
  const TokenSampler sampler = ThreeTokenSampler();
  std::vector<Melody> population;
  for (int i = 0; i < 97; ++i) population.push_back(RandomMelody(sampler, 30, rng));
  auto fitness = [](const Melody& m) { return CountC(m) * 1.5 + CountOf(m, kD); };
  std::vector<double> a(population.size());
  std::vector<double> b(population.size());
  EvaluatePopulation(population, fitness, a);
  EvaluatePopulationSerial(population, fitness, b);
  EXPECT_EQ(a, b);
}

TEST(ArchiveTest, WriteReadRoundTrip) {
  const GaConfig config{.max_iterations = 3, .population_size = 3,
                        .melody_length = 40};
  const TokenSampler sampler({{Tokenize("^c'2")[0], 0.5}, {Tokenize("z4")[0], 0.25},
                              {Tokenize("_B,,3")[0], 0.25}});
  GaRun run = RunGa(config, sampler, [](const Melody& m) {
    return static_cast<double>(m.size()) / 3.0;
  });
  std::stringstream buffer;
  WriteArchive(buffer, run.archive);
  EXPECT_EQ(ReadArchive(buffer), run.archive);
}

TEST(ArchiveTest, MalformedLinesThrow) {
  std::stringstream missing("0\t1.5\n");
  EXPECT_THROW(ReadArchive(missing), StorageError);
  std::stringstream bad_number("x\t1.5\tCDE\n");
  EXPECT_THROW(ReadArchive(bad_number), StorageError);
}

TEST(FormatDoubleTest, ShortestRoundTrip) {
  EXPECT_EQ(FormatDouble(0.02), "0.02");
  EXPECT_EQ(FormatDouble(234), "234");
  EXPECT_EQ(std::stod(FormatDouble(0.1 + 0.2)), 0.1 + 0.2);
}

}  // namespace
}  // namespace melgen
