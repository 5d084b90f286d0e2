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

#include "melgen/scoring_service.h"

#include <charconv>
#include <functional>
#include <map>
#include <mutex>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "melgen/errors.h"

namespace melgen {

namespace {

using Json = nlohmann::ordered_json;

void Reply(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void ReplyError(httplib::Response& res, int status, const std::string& message) {
  Reply(res, status, Json{{"error", message}});
}

struct Job {
  std::string id;
  std::string kind;
  std::string state = "running";  // running, succeeded, failed
  std::string error;
  std::string error_type;
  Json result;
};

}  // namespace

struct ScoringService::Impl {
  explicit Impl(ServiceOptions opts)
      : options(std::move(opts)), store(options.pipeline.store_path) {}

  ServiceOptions options;
  ScoreStore store;
  httplib::Server server;

  std::mutex jobs_mu;
  std::map<std::string, Job> jobs;
  std::map<std::string, std::string> running;  // kind -> job id
  std::vector<std::thread> workers;
  int next_job = 1;

  void Routes();
  void HandlePending(const httplib::Request& req, httplib::Response& res);
  void HandleScore(const httplib::Request& req, httplib::Response& res);
  void StartJob(const std::string& kind, std::function<Json()> work,
                httplib::Response& res);
  void HandleJob(const httplib::Request& req, httplib::Response& res);
};

void ScoringService::Impl::Routes() {
  server.Get("/api/pending", [this](const auto& req, auto& res) {
    HandlePending(req, res);
  });
  server.Post("/api/scores", [this](const auto& req, auto& res) {
    HandleScore(req, res);
  });
  server.Post("/api/train", [this](const auto&, auto& res) {
    StartJob("train", [this] {
      const Phase2Result r = RunPhase2(options.pipeline, store);
      return Json{{"final_mse", r.training.final_mse},
                  {"examples", r.examples},
                  {"epochs", r.training.loss_trace.size()}};
    }, res);
  });
  server.Post("/api/generate", [this](const auto&, auto& res) {
    StartJob("generate", [this] {
      const Phase3Result r = RunPhase3(options.pipeline);
      Json melodies = Json::array();
      for (const auto& g : r.melodies) {
        melodies.push_back({{"melody_id", g.melody_id},
                            {"predicted_score", g.predicted_score},
                            {"abc_text", g.abc}});
      }
      return Json{{"melodies", melodies}};
    }, res);
  });
  server.Get(R"(/api/jobs/([A-Za-z0-9-]+))", [this](const auto& req, auto& res) {
    HandleJob(req, res);
  });
  if (!options.static_dir.empty()) {
    server.set_mount_point("/", options.static_dir.string());
  }
  server.set_exception_handler([](const auto&, auto& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      ReplyError(res, 500, e.what());
    } catch (...) {
      ReplyError(res, 500, "unknown error");
    }
  });
}

void ScoringService::Impl::HandlePending(const httplib::Request& req,
                                         httplib::Response& res) {
  int limit = kDefaultPendingLimit;
  if (req.has_param("limit")) {
    const std::string text = req.get_param_value("limit");
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), limit);
    if (ec != std::errc() || end != text.data() + text.size() || limit < 1) {
      ReplyError(res, 400, "limit must be a positive integer");
      return;
    }
  }
  Json items = Json::array();
  for (const ScoredMelody& m : store.Pending(static_cast<std::size_t>(limit))) {
    items.push_back({{"melody_id", m.melody_id},
                     {"abc_text", Render(m.melody.tokens,
                                         {{'X', "1"},
                                          {'T', m.melody_id},
                                          {'M', "4/4"},
                                          {'L', "1/8"},
                                          {'K', "C"}})},
                     {"score_count", m.scores.size()}});
  }
  Reply(res, 200, items);
}

void ScoringService::Impl::HandleScore(const httplib::Request& req,
                                       httplib::Response& res) {
  std::string id;
  double score = 0.0;
  try {
    const Json body = Json::parse(req.body);
    id = body.at("melody_id").get<std::string>();
    score = body.at("score").get<double>();
  } catch (const Json::exception& e) {
    ReplyError(res, 400, std::string("malformed body: ") + e.what());
    return;
  }
  try {
    const ScoredMelody updated = store.AddScore(id, score);
    Reply(res, 200, Json{{"melody_id", id},
                         {"score_count", updated.scores.size()},
                         {"mean_score", updated.mean_score()}});
  } catch (const UnknownMelody& e) {
    ReplyError(res, 404, e.what());
  } catch (const ScoreOutOfRange& e) {
    ReplyError(res, 422, e.what());
  }
}

void ScoringService::Impl::StartJob(const std::string& kind,
                                    std::function<Json()> work,
                                    httplib::Response& res) {
  std::unique_lock lock(jobs_mu);
  if (running.contains(kind)) {
    ReplyError(res, 409, "a " + kind + " job is already running: " + running[kind]);
    return;
  }
  const std::string id = kind + "-" + std::to_string(next_job++);
  Job& job = jobs[id];
  job.id = id;
  job.kind = kind;
  running[kind] = id;
  workers.emplace_back([this, id, kind, work = std::move(work)] {
    Json result;
    std::string error, error_type;
    try {
      result = work();
    } catch (const InsufficientScores& e) {
      error_type = "InsufficientScores";
      error = e.what();
    } catch (const std::exception& e) {
      error_type = "Error";
      error = e.what();
    }
    std::lock_guard lock(jobs_mu);
    Job& job = jobs[id];
    job.state = error.empty() ? "succeeded" : "failed";
    job.error = error;
    job.error_type = error_type;
    job.result = std::move(result);
    running.erase(kind);
  });
  lock.unlock();
  Reply(res, 202, Json{{"job_id", id}, {"kind", kind}, {"state", "running"}});
}

void ScoringService::Impl::HandleJob(const httplib::Request& req,
                                     httplib::Response& res) {
  std::lock_guard lock(jobs_mu);
  auto it = jobs.find(req.matches[1].str());
  if (it == jobs.end()) {
    ReplyError(res, 404, "unknown job");
    return;
  }
  const Job& job = it->second;
  Json body{{"job_id", job.id}, {"kind", job.kind}, {"state", job.state}};
  if (!job.error.empty()) {
    body["error"] = job.error;
    body["error_type"] = job.error_type;
  }
  if (job.state == "succeeded") body["result"] = job.result;
  Reply(res, 200, body);
}

ScoringService::ScoringService(ServiceOptions options)
    : impl_(std::make_unique<Impl>(std::move(options))) {
  impl_->Routes();
}

ScoringService::~ScoringService() {
  Stop();
  WaitForJobs();
}

int ScoringService::BindToAnyPort(const std::string& host) {
  return impl_->server.bind_to_any_port(host);
}

bool ScoringService::Bind(const std::string& host, int port) {
  return impl_->server.bind_to_port(host, port);
}

bool ScoringService::ListenAfterBind() { return impl_->server.listen_after_bind(); }

void ScoringService::Stop() { impl_->server.stop(); }

void ScoringService::WaitForJobs() {
  // Request handlers may still append workers while we join.
  for (;;) {
    std::vector<std::thread> batch;
    {
      std::lock_guard lock(impl_->jobs_mu);
      batch.swap(impl_->workers);
    }
    if (batch.empty()) return;
    for (auto& t : batch) t.join();
  }
}

ScoreStore& ScoringService::store() { return impl_->store; }

}  // namespace melgen
