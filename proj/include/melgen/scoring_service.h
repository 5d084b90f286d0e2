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

// HTTP/JSON front of the score store for human raters.
//
//   GET  /api/pending?limit=N   up to N melodies with the fewest scores
//   POST /api/scores            {"melody_id": "...", "score": 73.5}
//   POST /api/train             starts a phase 2 job
//   POST /api/generate          starts a phase 3 job
//   GET  /api/jobs/{id}         job state and result
//   GET  /                      static files of the rating UI, if configured
//
// All state lives in the store and model files named by the pipeline
// config. At most one job of each kind runs at a time.

#ifndef MELGEN_SCORING_SERVICE_H_
#define MELGEN_SCORING_SERVICE_H_

#include <filesystem>
#include <memory>
#include <string>

#include "melgen/pipeline.h"
#include "melgen/score_store.h"

namespace melgen {

inline constexpr int kDefaultPendingLimit = 10;

struct ServiceOptions {
  PipelineConfig pipeline;
  std::filesystem::path static_dir;  // empty: no UI served
};

class ScoringService {
 public:
  explicit ScoringService(ServiceOptions options);
  ~ScoringService();

  ScoringService(const ScoringService&) = delete;
  ScoringService& operator=(const ScoringService&) = delete;

  // Returns the bound port, or -1.
  int BindToAnyPort(const std::string& host = "127.0.0.1");
  bool Bind(const std::string& host, int port);
  // Blocks until Stop().
  bool ListenAfterBind();
  void Stop();
  // Waits for every started job to finish.
  void WaitForJobs();

  ScoreStore& store();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace melgen

#endif  // MELGEN_SCORING_SERVICE_H_
