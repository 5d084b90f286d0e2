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

// melgen: command-line front end of the melody generation pipeline.

#include <csignal>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "melgen/abc.h"
#include "melgen/corpus_index.h"
#include "melgen/errors.h"
#include "melgen/pipeline.h"
#include "melgen/score_store.h"
#include "melgen/scoring_service.h"

namespace {

using namespace melgen;

struct Overrides {
  std::string config;
  std::string corpus;
  std::string store;
  std::string model;
  std::string out;
  std::string scorer;
  std::string fitness;
  std::optional<std::uint64_t> seed;
  std::optional<int> iterations;
  std::optional<int> epochs;
  std::optional<int> hidden;
  std::optional<double> learning_rate;
  std::optional<int> count;
};

PipelineConfig Resolve(const Overrides& o, bool phase3_iterations = false) {
  PipelineConfig c = o.config.empty() ? PipelineConfig{} : PipelineConfig::Load(o.config);
  if (!o.corpus.empty()) c.corpus_path = o.corpus;
  if (!o.store.empty()) c.store_path = o.store;
  if (!o.model.empty()) c.model_path = o.model;
  if (!o.out.empty()) c.out_dir = o.out;
  if (!o.scorer.empty()) {
    c.scorer = o.scorer == "synthetic" ? ScorerKind::kSynthetic : ScorerKind::kStore;
  }
  if (!o.fitness.empty()) {
    c.fitness = o.fitness == "naive" ? FitnessKind::kNaive : FitnessKind::kIndexed;
  }
  if (o.seed) {
    c.phase1.rng_seed = *o.seed;
    c.phase3.rng_seed = *o.seed;
    c.train.seed = *o.seed;
  }
  if (o.iterations) {
    (phase3_iterations ? c.phase3 : c.phase1).max_iterations = *o.iterations;
  }
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.hidden) c.hidden_size = *o.hidden;
  if (o.learning_rate) c.train.learning_rate = *o.learning_rate;
  if (o.count) c.output_count = *o.count;
  c.Validate();
  return c;
}

int CorpusStats(const std::string& path) {
  const Corpus corpus = Corpus::Open(path);
  for (const auto& skip : corpus.load.skipped) {
    std::cerr << "skipped " << skip.source << " " << skip.tune << ": "
              << skip.reason << "\n";
  }
  std::cout << "tunes\t" << corpus.load.tunes.size() << "\n";
  std::cout << "skipped\t" << corpus.load.skipped.size() << "\n";
  std::cout << "total_tokens\t" << corpus.index.total_tokens() << "\n";
  std::cout << "token\tcount\tprobability\n";
  double sum = 0.0;
  for (const auto& f : corpus.index.prob_table()) {
    std::cout << ToAbc(f.token) << "\t" << f.count << "\t"
              << FormatDouble(f.probability) << "\n";
    sum += f.probability;
  }
  std::cout << "sum\t" << corpus.index.total_tokens() << "\t" << FormatDouble(sum)
            << "\n";
  return 0;
}

int Bench(const PipelineConfig& config) {
  const Corpus corpus = Corpus::Open(config.corpus_path);
  BenchConfig bench;
  bench.seed = config.phase1.rng_seed;
  bench.hidden_size = config.hidden_size;
  const TimingReport report = BenchTiming(corpus.index, bench);
  report.WriteTable(std::cout);

  std::filesystem::create_directories(config.out_dir);
  const auto path = config.out_dir / "timing.tsv";
  std::ofstream out(path);
  report.WriteTsv(out);
  if (!out.flush()) throw IoError("cannot write " + path.string());

  const auto base = report.rows.front().corpus_tokens;
  std::int64_t doubled = 0;
  for (const auto& row : report.rows) {
    if (row.corpus_tokens > base) doubled = row.corpus_tokens;
  }
  if (doubled > 0) {
    for (int length : bench.melody_lengths) {
      std::cout << "ratio_2x\tlength=" << length << "\tnaive="
                << report.SecondsPerEval("naive", doubled, length) /
                       report.SecondsPerEval("naive", base, length)
                << "\tsurrogate="
                << report.SecondsPerEval("surrogate", doubled, length) /
                       report.SecondsPerEval("surrogate", base, length)
                << "\n";
    }
  }
  std::cout << "timing data: " << path.string() << "\n";
  return 0;
}

ScoringService* g_service = nullptr;

void HandleSignal(int) {
  if (g_service != nullptr) g_service->Stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"melgen: interactive evolutionary melody generation"};
  app.require_subcommand(1);
  app.fallthrough();

  Overrides o;
  app.add_option("--config", o.config, "JSON pipeline configuration");
  app.add_option("--corpus", o.corpus, "ABC file or directory of .abc files");
  app.add_option("--store", o.store, "score store file");
  app.add_option("--model", o.model, "surrogate model file");
  app.add_option("--out", o.out, "output directory");
  app.add_option("--seed", o.seed, "seed for every random stream");
  app.add_option("--scorer", o.scorer, "where phase 2 scores come from")
      ->check(CLI::IsMember({"store", "synthetic"}));
  app.add_option("--fitness", o.fitness, "phase 1 similarity evaluator")
      ->check(CLI::IsMember({"naive", "indexed"}));

  auto* corpus_cmd = app.add_subcommand("corpus", "corpus utilities");
  corpus_cmd->require_subcommand(1);
  auto* stats_cmd = corpus_cmd->add_subcommand("stats", "token probability table");

  auto* phase1_cmd = app.add_subcommand("phase1", "GA against corpus similarity");
  phase1_cmd->add_option("--iterations", o.iterations, "maximum iterations");

  auto* phase2_cmd = app.add_subcommand("phase2", "train the surrogate");
  phase2_cmd->add_option("--epochs", o.epochs, "training epochs");
  phase2_cmd->add_option("--hidden", o.hidden, "LSTM hidden size");
  phase2_cmd->add_option("--learning-rate", o.learning_rate, "gradient step");

  auto* phase3_cmd = app.add_subcommand("phase3", "GA against the surrogate");
  phase3_cmd->add_option("--iterations", o.iterations, "maximum iterations");
  phase3_cmd->add_option("--count", o.count, "number of melodies to emit");

  auto* bench_cmd = app.add_subcommand("bench", "per-evaluation timing");

  auto* score_cmd = app.add_subcommand("score", "score store import/export");
  score_cmd->require_subcommand(1);
  std::string transfer_file;
  auto* import_cmd = score_cmd->add_subcommand("import", "merge records into the store");
  import_cmd->add_option("file", transfer_file)->required();
  auto* export_cmd = score_cmd->add_subcommand("export", "write the store to a file");
  export_cmd->add_option("file", transfer_file)->required();

  auto* serve_cmd = app.add_subcommand("serve", "HTTP scoring service");
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string static_dir;
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--port", port);
  serve_cmd->add_option("--static", static_dir, "directory of the built UI");

  CLI11_PARSE(app, argc, argv);

  try {
    if (stats_cmd->parsed()) {
      const PipelineConfig c = Resolve(o);
      return CorpusStats(c.corpus_path.string());
    }
    if (phase1_cmd->parsed()) {
      const PipelineConfig c = Resolve(o);
      const Phase1Result r = RunPhase1(c);
      std::cout << "archived\t" << r.run.archive.size() << "\n";
      std::cout << "new_melodies\t" << r.new_melodies << "\n";
      std::cout << "best_fitness\t" << r.run.best_fitness << "\n";
      std::cout << "best\t" << RenderBody(r.run.best.tokens) << "\n";
      std::cout << "archive\t" << r.archive_file.string() << "\n";
      return 0;
    }
    if (phase2_cmd->parsed()) {
      const PipelineConfig c = Resolve(o);
      const Phase2Result r = RunPhase2(c);
      std::cout << "synthetic_scores\t" << r.synthetic_scores << "\n";
      std::cout << "examples\t" << r.examples << "\n";
      std::cout << "final_mse\t" << r.training.final_mse << "\n";
      std::cout << "model\t" << c.model_path.string() << "\n";
      std::cout << "loss_trace\t" << r.loss_trace_file.string() << "\n";
      return 0;
    }
    if (phase3_cmd->parsed()) {
      const PipelineConfig c = Resolve(o, /*phase3_iterations=*/true);
      const Phase3Result r = RunPhase3(c);
      for (const auto& g : r.melodies) {
        std::cout << g.file.string() << "\t" << g.predicted_score << "\t"
                  << g.melody_id << "\n";
      }
      return 0;
    }
    if (bench_cmd->parsed()) return Bench(Resolve(o));
    if (import_cmd->parsed() || export_cmd->parsed()) {
      const PipelineConfig c = Resolve(o);
      ScoreStore store(c.store_path);
      if (import_cmd->parsed()) {
        store.Import(transfer_file);
        std::cout << "records\t" << store.size() << "\n";
      } else {
        store.Save(transfer_file);
        std::cout << "exported\t" << store.size() << "\n";
      }
      return 0;
    }
    if (serve_cmd->parsed()) {
      ServiceOptions options{Resolve(o), static_dir};
      ScoringService service(std::move(options));
      if (!service.Bind(host, port)) {
        std::cerr << "cannot bind " << host << ":" << port << "\n";
        return 1;
      }
      g_service = &service;
      std::signal(SIGINT, HandleSignal);
      std::signal(SIGTERM, HandleSignal);
      std::cerr << "listening on http://" << host << ":" << port << "\n";
      service.ListenAfterBind();
      g_service = nullptr;
      return 0;
    }
  } catch (const melgen::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
