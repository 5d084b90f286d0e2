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

// Times the OpenMP kernels against their serial references:
//   population fitness evaluation (naive corpus similarity)
//   batch loss + gradient of the surrogate
//
// usage: melgen_kernel_bench [corpus.abc] [examples] [hidden]

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <vector>

#include "melgen/abc.h"
#include "melgen/corpus_index.h"
#include "melgen/ga_engine.h"
#include "melgen/surrogate.h"

using namespace melgen;
using h_clock = std::chrono::steady_clock;

template <typename Fn>
double Seconds(Fn&& fn, int reps) {
  auto t1 = h_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  auto t2 = h_clock::now();
  return std::chrono::duration<double>(t2 - t1).count() / reps;
}

int main(int argc, char** argv) {
  std::vector<Tune> tunes;
  if (argc > 1) {
    tunes = LoadCorpus(argv[1]).tunes;
  } else {
    tunes.push_back({"scale", Tokenize("CDEFGABc BAGFEDC2 EGce gecE"), {}});
  }
  const int examples = argc > 2 ? std::atoi(argv[2]) : 256;
  const int hidden = argc > 3 ? std::atoi(argv[3]) : 50;

  const CorpusIndex index = CorpusIndex::Build(tunes);
  const TokenSampler sampler = TokenSampler::FromIndex(index);
  Rng rng(42);

  std::vector<Melody> population;
  for (int i = 0; i < 64; ++i) population.push_back(RandomMelody(sampler, 30, rng));
  const FitnessFn naive = [&tunes](const Melody& m) {
    return static_cast<double>(SimilarityFitnessNaive(m.tokens, tunes));
  };
  std::vector<double> serial(population.size()), parallel(population.size());

  std::printf("threads: %d\n", omp_get_max_threads());
  const double t_eval_serial =
      Seconds([&] { EvaluatePopulationSerial(population, naive, serial); }, 20);
  const double t_eval_omp =
      Seconds([&] { EvaluatePopulation(population, naive, parallel); }, 20);
  std::printf("population eval  serial %10.3f ms  omp %10.3f ms  speedup %.2f  %s\n",
              t_eval_serial * 1e3, t_eval_omp * 1e3, t_eval_serial / t_eval_omp,
              serial == parallel ? "identical" : "MISMATCH");

  SurrogateModel model(index.token_alphabet(), hidden);
  model.InitializeRandom(1);
  std::vector<TrainingExample> batch;
  for (int i = 0; i < examples; ++i) {
    batch.push_back({RandomMelody(sampler, 30, rng), 100.0 * Uniform01(rng)});
  }
  LossGradient ref, omp;
  const double t_grad_serial =
      Seconds([&] { ref = LossAndGradientsSerial(model, batch); }, 3);
  const double t_grad_omp = Seconds([&] { omp = LossAndGradients(model, batch); }, 3);
  double max_diff = 0.0;
  for (std::size_t j = 0; j < ref.gradient.size(); ++j) {
    max_diff = std::max(max_diff, std::abs(ref.gradient[j] - omp.gradient[j]));
  }
  std::printf("loss+gradient    serial %10.3f ms  omp %10.3f ms  speedup %.2f  max|diff| %.3g\n",
              t_grad_serial * 1e3, t_grad_omp * 1e3, t_grad_serial / t_grad_omp,
              max_diff);
  return 0;
}
