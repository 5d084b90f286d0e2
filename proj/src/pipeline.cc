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
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "json.hpp"
#include "melgen/errors.h"

namespace melgen {

namespace {

using Json = nlohmann::ordered_json;

template <typename T>
void ReadKey(const Json& obj, const char* key, T& out) {
  if (auto it = obj.find(key); it != obj.end()) out = it->get<T>();
}

void CheckKeys(const Json& obj, std::initializer_list<std::string_view> allowed,
               const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

GaConfig GaFromJson(const Json& obj, GaConfig ga, const std::string& where) {
  CheckKeys(obj,
            {"max_iterations", "population_size", "crossover_rate",
             "mutation_rate", "melody_length", "seed"},
            where);
  ReadKey(obj, "max_iterations", ga.max_iterations);
  ReadKey(obj, "population_size", ga.population_size);
  ReadKey(obj, "crossover_rate", ga.crossover_rate);
  ReadKey(obj, "mutation_rate", ga.mutation_rate);
  ReadKey(obj, "melody_length", ga.melody_length);
  ReadKey(obj, "seed", ga.rng_seed);
  return ga;
}

Json GaToJson(const GaConfig& ga) {
  return Json{{"max_iterations", ga.max_iterations},
              {"population_size", ga.population_size},
              {"crossover_rate", ga.crossover_rate},
              {"mutation_rate", ga.mutation_rate},
              {"melody_length", ga.melody_length},
              {"seed", ga.rng_seed}};
}

void EnsureDirectory(const std::filesystem::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void WriteTextFile(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out || !(out << text) || !out.flush()) {
    throw IoError("cannot write " + path.string());
  }
}

void WriteArchiveFile(const std::filesystem::path& path,
                      std::span<const ArchiveEntry> archive) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  WriteArchive(out, archive);
  if (!out.flush()) throw IoError("write failed for " + path.string());
}

}  // namespace

void PipelineConfig::Validate() const {
  phase1.Validate();
  phase3.Validate();
  train.Validate();
  if (hidden_size < 1) throw ConfigError("hidden_size must be positive");
  if (min_scores < 1) throw ConfigError("min_scores must be positive");
  if (output_count < 1) throw ConfigError("output_count must be positive");
}

PipelineConfig PipelineConfig::FromJson(const std::string& text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  CheckKeys(root,
            {"corpus", "store", "model", "out", "fitness", "scorer",
             "hidden_size", "min_scores", "output_count", "phase1", "phase3",
             "train"},
            "config");
  PipelineConfig c;
  try {
    if (root.contains("corpus")) c.corpus_path = root["corpus"].get<std::string>();
    if (root.contains("store")) c.store_path = root["store"].get<std::string>();
    if (root.contains("model")) c.model_path = root["model"].get<std::string>();
    if (root.contains("out")) c.out_dir = root["out"].get<std::string>();
    if (root.contains("fitness")) {
      const auto f = root["fitness"].get<std::string>();
      if (f != "naive" && f != "indexed") throw ConfigError("fitness must be naive or indexed");
      c.fitness = f == "naive" ? FitnessKind::kNaive : FitnessKind::kIndexed;
    }
    if (root.contains("scorer")) {
      const auto s = root["scorer"].get<std::string>();
      if (s != "store" && s != "synthetic") throw ConfigError("scorer must be store or synthetic");
      c.scorer = s == "store" ? ScorerKind::kStore : ScorerKind::kSynthetic;
    }
    ReadKey(root, "hidden_size", c.hidden_size);
    ReadKey(root, "min_scores", c.min_scores);
    ReadKey(root, "output_count", c.output_count);
    if (root.contains("phase1")) c.phase1 = GaFromJson(root["phase1"], c.phase1, "phase1");
    if (root.contains("phase3")) c.phase3 = GaFromJson(root["phase3"], c.phase3, "phase3");
    if (root.contains("train")) {
      const Json& t = root["train"];
      CheckKeys(t,
                {"epochs", "learning_rate", "clip_norm", "init_range",
                 "forget_bias", "seed", "holdout_fraction"},
                "train");
      ReadKey(t, "epochs", c.train.epochs);
      ReadKey(t, "learning_rate", c.train.learning_rate);
      ReadKey(t, "clip_norm", c.train.clip_norm);
      ReadKey(t, "init_range", c.train.init_range);
      ReadKey(t, "forget_bias", c.train.forget_bias);
      ReadKey(t, "seed", c.train.seed);
      ReadKey(t, "holdout_fraction", c.train.holdout_fraction);
    }
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  c.Validate();
  return c;
}

PipelineConfig PipelineConfig::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return FromJson(text.str());
}

std::string PipelineConfig::ToJson() const {
  Json root{
      {"corpus", corpus_path.string()},
      {"store", store_path.string()},
      {"model", model_path.string()},
      {"out", out_dir.string()},
      {"fitness", fitness == FitnessKind::kNaive ? "naive" : "indexed"},
      {"scorer", scorer == ScorerKind::kStore ? "store" : "synthetic"},
      {"hidden_size", hidden_size},
      {"min_scores", min_scores},
      {"output_count", output_count},
      {"phase1", GaToJson(phase1)},
      {"phase3", GaToJson(phase3)},
      {"train",
       {{"epochs", train.epochs},
        {"learning_rate", train.learning_rate},
        {"clip_norm", train.clip_norm},
        {"init_range", train.init_range},
        {"forget_bias", train.forget_bias},
        {"seed", train.seed},
        {"holdout_fraction", train.holdout_fraction}}}};
  return root.dump(2);
}

Corpus Corpus::Open(const std::filesystem::path& path) {
  if (path.empty()) throw ConfigError("no corpus path configured");
  CorpusLoad load = LoadCorpus(path);
  CorpusIndex index = CorpusIndex::Build(load.tunes);
  return {std::move(load), std::move(index)};
}

double SyntheticScore(std::span<const Token> melody, const CorpusIndex& index) {
  const auto bound = SimilarityUpperBound(static_cast<int>(melody.size()));
  if (bound <= 0) return 0.0;
  const double ratio = static_cast<double>(SimilarityFitness(melody, index)) /
                       static_cast<double>(bound);
  return 100.0 * std::min(1.0, ratio);
}

Phase1Result RunPhase1(const PipelineConfig& config, ScoreStore& store) {
  config.Validate();
  const Corpus corpus = Corpus::Open(config.corpus_path);
  const TokenSampler sampler = TokenSampler::FromIndex(corpus.index);

  FitnessFn fitness;
  if (config.fitness == FitnessKind::kNaive) {
    fitness = [&corpus](const Melody& m) {
      return static_cast<double>(SimilarityFitnessNaive(m.tokens, corpus.load.tunes));
    };
  } else {
    fitness = [&corpus](const Melody& m) {
      return static_cast<double>(SimilarityFitness(m.tokens, corpus.index));
    };
  }

  Phase1Result result;
  result.run = RunGa(config.phase1, sampler, fitness);

  std::vector<Melody> melodies;
  melodies.reserve(result.run.archive.size());
  for (const auto& entry : result.run.archive) melodies.push_back(entry.melody);
  const std::size_t before = store.size();
  store.PutMelodies(melodies);
  result.new_melodies = store.size() - before;

  EnsureDirectory(config.out_dir);
  result.archive_file = config.out_dir / "phase1_archive.tsv";
  WriteArchiveFile(result.archive_file, result.run.archive);
  return result;
}

Phase1Result RunPhase1(const PipelineConfig& config) {
  ScoreStore store(config.store_path);
  return RunPhase1(config, store);
}

Phase2Result RunPhase2(const PipelineConfig& config, ScoreStore& store) {
  config.Validate();
  std::size_t synthetic_scores = 0;

  std::set<Token> alphabet;
  if (!config.corpus_path.empty()) {
    const Corpus corpus = Corpus::Open(config.corpus_path);
    alphabet.insert(corpus.index.token_alphabet().begin(),
                    corpus.index.token_alphabet().end());
    if (config.scorer == ScorerKind::kSynthetic) {
      std::vector<std::pair<std::string, double>> scores;
      for (const ScoredMelody& record : store.Snapshot()) {
        if (record.scores.empty()) {
          scores.emplace_back(record.melody_id,
                              SyntheticScore(record.melody.tokens, corpus.index));
        }
      }
      store.AddScores(scores);
      synthetic_scores = scores.size();
    }
  } else if (config.scorer == ScorerKind::kSynthetic) {
    throw ConfigError("the synthetic scorer needs a corpus");
  }

  const std::vector<TrainingExample> data = store.TrainingSet(config.min_scores);
  if (data.empty()) {
    throw InsufficientScores("no melody has at least " +
                             std::to_string(config.min_scores) + " score(s)");
  }
  for (const auto& ex : data) {
    alphabet.insert(ex.melody.tokens.begin(), ex.melody.tokens.end());
  }

  SurrogateModel model(std::vector<Token>(alphabet.begin(), alphabet.end()),
                       config.hidden_size);
  model.InitializeRandom(config.train.seed, config.train.init_range,
                         config.train.forget_bias);
  Phase2Result result{Train(std::move(model), data, config.train), data.size(),
                      synthetic_scores, config.out_dir / "loss_trace.tsv"};

  if (config.model_path.has_parent_path()) {
    EnsureDirectory(config.model_path.parent_path());
  }
  result.training.model.Save(config.model_path);

  EnsureDirectory(config.out_dir);
  std::ostringstream trace;
  trace << "epoch\tmse\n";
  for (std::size_t i = 0; i < result.training.loss_trace.size(); ++i) {
    trace << i << '\t' << FormatDouble(result.training.loss_trace[i]) << '\n';
  }
  WriteTextFile(result.loss_trace_file, trace.str());
  return result;
}

Phase2Result RunPhase2(const PipelineConfig& config) {
  ScoreStore store(config.store_path);
  return RunPhase2(config, store);
}

std::vector<ArchiveEntry> TopDistinct(std::span<const ArchiveEntry> archive,
                                      std::size_t count) {
  std::vector<std::size_t> order(archive.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return archive[a].fitness > archive[b].fitness;
  });
  std::vector<ArchiveEntry> top;
  std::set<Melody> seen;
  for (std::size_t i : order) {
    if (top.size() == count) break;
    if (seen.insert(archive[i].melody).second) top.push_back(archive[i]);
  }
  return top;
}

Phase3Result RunPhase3(const PipelineConfig& config,
                       const SurrogateModel& model) {
  config.Validate();
  const Corpus corpus = Corpus::Open(config.corpus_path);
  // Draw only tokens the model knows.
  std::vector<std::pair<Token, double>> table;
  double mass = 0.0;
  const std::set<Token> known(model.alphabet().begin(), model.alphabet().end());
  for (const auto& f : corpus.index.prob_table()) {
    if (known.contains(f.token)) {
      table.emplace_back(f.token, f.probability);
      mass += f.probability;
    }
  }
  if (table.empty()) throw ConfigError("model alphabet shares no token with the corpus");
  for (auto& entry : table) entry.second /= mass;
  const TokenSampler sampler(std::move(table));

  auto shared = std::make_shared<const SurrogateModel>(model);
  Phase3Result result;
  result.run = RunGa(config.phase3, sampler, AsFitness(shared));

  EnsureDirectory(config.out_dir);
  WriteArchiveFile(config.out_dir / "phase3_archive.tsv", result.run.archive);

  const auto top = TopDistinct(result.run.archive,
                               static_cast<std::size_t>(config.output_count));
  for (std::size_t k = 0; k < top.size(); ++k) {
    GeneratedMelody g;
    g.melody = top[k].melody;
    g.melody_id = MelodyId(g.melody);
    g.predicted_score = top[k].fitness;
    char title[96];
    std::snprintf(title, sizeof(title), "melgen %s (predicted %.2f)",
                  g.melody_id.c_str(), g.predicted_score);
    g.abc = Render(g.melody.tokens, {{'X', std::to_string(k + 1)},
                                     {'T', title},
                                     {'M', "4/4"},
                                     {'L', "1/8"},
                                     {'K', "C"}});
    char name[32];
    std::snprintf(name, sizeof(name), "phase3_%02zu.abc", k + 1);
    g.file = config.out_dir / name;
    WriteTextFile(g.file, g.abc);
    result.melodies.push_back(std::move(g));
  }
  return result;
}

Phase3Result RunPhase3(const PipelineConfig& config) {
  return RunPhase3(config, SurrogateModel::Load(config.model_path));
}

double TimingReport::SecondsPerEval(const std::string& evaluator,
                                    std::int64_t corpus_tokens,
                                    int melody_length) const {
  for (const auto& row : rows) {
    if (row.evaluator == evaluator && row.corpus_tokens == corpus_tokens &&
        row.melody_length == melody_length) {
      return row.seconds_per_eval;
    }
  }
  throw std::out_of_range("no timing row for " + evaluator);
}

void TimingReport::WriteTsv(std::ostream& out) const {
  out << "evaluator\tcorpus_tokens\tmelody_length\tseconds_per_eval\n";
  for (const auto& row : rows) {
    out << row.evaluator << '\t' << row.corpus_tokens << '\t'
        << row.melody_length << '\t' << FormatDouble(row.seconds_per_eval)
        << '\n';
  }
}

void TimingReport::WriteTable(std::ostream& out) const {
  out << std::left << std::setw(11) << "evaluator" << std::right
      << std::setw(14) << "corpus_tokens" << std::setw(8) << "length"
      << std::setw(16) << "us/eval" << '\n';
  for (const auto& row : rows) {
    out << std::left << std::setw(11) << row.evaluator << std::right
        << std::setw(14) << row.corpus_tokens << std::setw(8)
        << row.melody_length << std::setw(16) << std::fixed
        << std::setprecision(3) << row.seconds_per_eval * 1e6 << '\n';
  }
  out << std::defaultfloat;
}

namespace {

using Clock = std::chrono::steady_clock;

// Seconds per call of `fn` over `melodies`, best of the trial.
template <typename Fn>
double TimeTrial(const std::vector<Melody>& melodies, double min_seconds,
                 Fn&& fn) {
  volatile double sink = 0.0;
  std::int64_t calls = 0;
  const auto start = Clock::now();
  double elapsed = 0.0;
  do {
    for (const Melody& m : melodies) sink = sink + fn(m);
    calls += static_cast<std::int64_t>(melodies.size());
    elapsed = std::chrono::duration<double>(Clock::now() - start).count();
  } while (elapsed < min_seconds);
  return elapsed / static_cast<double>(calls);
}

}  // namespace

TimingReport BenchTiming(const CorpusIndex& corpus, const BenchConfig& config) {
  if (config.corpus_multipliers.empty() || config.melody_lengths.empty() ||
      config.trials < 1 || config.melodies < 1 || config.tune_length < 4) {
    throw ConfigError("bench configuration is empty");
  }
  const TokenSampler sampler = TokenSampler::FromIndex(corpus);
  Rng rng(config.seed);

  const int max_multiplier = *std::max_element(config.corpus_multipliers.begin(),
                                                config.corpus_multipliers.end());
  const std::int64_t base_tunes =
      std::max<std::int64_t>(1, config.base_corpus_tokens / config.tune_length);
  std::vector<Tune> pool;
  for (std::int64_t i = 0; i < base_tunes * max_multiplier; ++i) {
    pool.push_back({"bench:" + std::to_string(i),
                    RandomMelody(sampler, config.tune_length, rng).tokens,
                    DefaultHeaders()});
  }

  SurrogateModel model(corpus.token_alphabet(), config.hidden_size);
  model.InitializeRandom(config.seed);

  struct Cell {
    std::string evaluator;
    std::int64_t tokens;
    int length;
    std::function<double(const Melody&)> fn;
    std::vector<Melody> melodies;
    double best = 0.0;
  };
  std::vector<std::vector<Tune>> corpora;
  std::vector<CorpusIndex> indices;
  corpora.reserve(config.corpus_multipliers.size());
  for (int k : config.corpus_multipliers) {
    corpora.emplace_back(pool.begin(), pool.begin() + base_tunes * k);
    indices.push_back(CorpusIndex::Build(corpora.back()));
  }

  std::vector<Cell> cells;
  for (std::size_t c = 0; c < corpora.size(); ++c) {
    const std::span<const Tune> tunes = corpora[c];
    const CorpusIndex* index = &indices[c];
    const std::int64_t tokens = index->total_tokens();
    for (int length : config.melody_lengths) {
      std::vector<Melody> melodies;
      for (int i = 0; i < config.melodies; ++i) {
        melodies.push_back(RandomMelody(sampler, length, rng));
      }
      cells.push_back({"naive", tokens, length,
                       [tunes](const Melody& m) {
                         return static_cast<double>(SimilarityFitnessNaive(m.tokens, tunes));
                       },
                       melodies});
      cells.push_back({"indexed", tokens, length,
                       [index](const Melody& m) {
                         return static_cast<double>(SimilarityFitness(m.tokens, *index));
                       },
                       melodies});
      cells.push_back({"surrogate", tokens, length,
                       [&model](const Melody& m) { return Predict(model, m); },
                       melodies});
    }
  }

  // Trials are interleaved across cells so drift hits every cell alike.
  for (int trial = 0; trial < config.trials; ++trial) {
    for (Cell& cell : cells) {
      const double t = TimeTrial(cell.melodies, config.min_trial_seconds, cell.fn);
      cell.best = trial == 0 ? t : std::min(cell.best, t);
    }
  }

  TimingReport report;
  for (const Cell& cell : cells) {
    report.rows.push_back({cell.evaluator, cell.tokens, cell.length, cell.best});
  }
  std::stable_sort(report.rows.begin(), report.rows.end(),
                   [](const TimingRow& a, const TimingRow& b) {
                     return std::tie(a.evaluator, a.melody_length, a.corpus_tokens) <
                            std::tie(b.evaluator, b.melody_length, b.corpus_tokens);
                   });
  return report;
}

}  // namespace melgen
