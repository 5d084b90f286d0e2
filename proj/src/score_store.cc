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

#include "melgen/score_store.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numeric>

#include "json.hpp"
#include "melgen/errors.h"

namespace melgen {

namespace {

using Json = nlohmann::ordered_json;

std::string OneLineBody(const Melody& m) {
  std::string body = RenderBody(m.tokens);
  std::replace(body.begin(), body.end(), '\n', ' ');
  return body;
}

}  // namespace

std::string MelodyId(const Melody& melody) {
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&h](std::uint8_t byte) {
    h ^= byte;
    h *= 1099511628211ull;
  };
  for (const Token& t : melody.tokens) {
    const std::uint16_t code = TokenCode(t);
    mix(static_cast<std::uint8_t>(code & 0xff));
    mix(static_cast<std::uint8_t>(code >> 8));
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double ScoredMelody::mean_score() const {
  if (scores.empty()) return 0.0;
  return std::accumulate(scores.begin(), scores.end(), 0.0) /
         static_cast<double>(scores.size());
}

ScoreStore::ScoreStore(std::filesystem::path backing_file) {
  std::error_code ec;
  if (std::filesystem::exists(backing_file, ec)) {
    std::ifstream in(backing_file);
    if (!in) throw StorageError("cannot open " + backing_file.string());
    ReadFrom(in);
  }
  backing_file_ = std::move(backing_file);
}

void ScoreStore::Validate(double score) {
  if (!(score >= kMinScore && score <= kMaxScore)) {
    throw ScoreOutOfRange("score " + FormatDouble(score) +
                          " is outside [0, 100]");
  }
}

std::string ScoreStore::PutMelody(const Melody& melody) {
  return PutMelodies(std::span<const Melody>(&melody, 1)).front();
}

std::vector<std::string> ScoreStore::PutMelodies(
    std::span<const Melody> melodies) {
  std::vector<std::string> ids;
  ids.reserve(melodies.size());
  std::unique_lock lock(mu_);
  bool changed = false;
  for (const Melody& m : melodies) {
    std::string id = MelodyId(m);
    auto [it, inserted] = records_.try_emplace(id);
    if (inserted) {
      it->second.melody_id = id;
      it->second.melody = m;
      changed = true;
    } else if (it->second.melody != m) {
      throw StorageError("melody id collision on " + id);
    }
    ids.push_back(std::move(id));
  }
  if (changed) PersistLocked();
  return ids;
}

ScoredMelody ScoreStore::AddScore(const std::string& melody_id, double score) {
  const std::pair<std::string, double> entry(melody_id, score);
  AddScores(std::span(&entry, 1));
  return *Find(melody_id);
}

void ScoreStore::AddScores(
    std::span<const std::pair<std::string, double>> scores) {
  std::unique_lock lock(mu_);
  for (const auto& [id, score] : scores) {
    if (!records_.contains(id)) throw UnknownMelody("unknown melody " + id);
    Validate(score);
  }
  for (const auto& [id, score] : scores) records_[id].scores.push_back(score);
  if (!scores.empty()) PersistLocked();
}

std::optional<ScoredMelody> ScoreStore::Find(const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = records_.find(id);
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

std::size_t ScoreStore::size() const {
  std::shared_lock lock(mu_);
  return records_.size();
}

std::vector<ScoredMelody> ScoreStore::Snapshot() const {
  std::shared_lock lock(mu_);
  std::vector<ScoredMelody> out;
  out.reserve(records_.size());
  for (const auto& [id, record] : records_) out.push_back(record);
  return out;
}

std::vector<TrainingExample> ScoreStore::TrainingSet(int min_scores) const {
  std::shared_lock lock(mu_);
  std::vector<TrainingExample> out;
  for (const auto& [id, record] : records_) {
    if (static_cast<int>(record.scores.size()) >= min_scores &&
        !record.scores.empty()) {
      out.push_back({record.melody, record.mean_score()});
    }
  }
  return out;
}

std::vector<ScoredMelody> ScoreStore::Pending(std::size_t limit) const {
  std::vector<ScoredMelody> all = Snapshot();
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.scores.size() < b.scores.size();
  });
  if (all.size() > limit) all.resize(limit);
  return all;
}

void ScoreStore::WriteLocked(std::ostream& out) const {
  for (const auto& [id, record] : records_) {
    Json line;
    line["id"] = id;
    line["abc"] = OneLineBody(record.melody);
    line["scores"] = record.scores;
    out << line.dump() << '\n';
  }
}

void ScoreStore::WriteTo(std::ostream& out) const {
  std::shared_lock lock(mu_);
  WriteLocked(out);
}

void ScoreStore::Save(const std::filesystem::path& path) const {
  std::shared_lock lock(mu_);
  WriteFileLocked(path);
}

void ScoreStore::PersistLocked() const {
  if (!backing_file_.empty()) WriteFileLocked(backing_file_);
}

void ScoreStore::WriteFileLocked(const std::filesystem::path& path) const {
  const std::filesystem::path tmp = path.string() + ".tmp";
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw StorageError("cannot create " + path.parent_path().string());
  }
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw StorageError("cannot write " + tmp.string());
    WriteLocked(out);
    if (!out.flush()) throw StorageError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw StorageError("cannot replace " + path.string() + ": " + ec.message());
  }
}

void ScoreStore::ReadFrom(std::istream& in) {
  std::vector<ScoredMelody> parsed;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "store line " + std::to_string(line_no) + ": ";
    ScoredMelody record;
    try {
      const Json j = Json::parse(line);
      record.melody_id = j.at("id").get<std::string>();
      record.melody.tokens = Tokenize(j.at("abc").get<std::string>());
      record.scores = j.at("scores").get<std::vector<double>>();
    } catch (const std::exception& e) {
      throw StorageError(where + e.what());
    }
    if (record.melody.tokens.empty()) throw StorageError(where + "empty melody");
    if (MelodyId(record.melody) != record.melody_id) {
      throw StorageError(where + "id does not match melody content");
    }
    for (double s : record.scores) {
      if (!(s >= kMinScore && s <= kMaxScore)) {
        throw StorageError(where + "score out of range");
      }
    }
    parsed.push_back(std::move(record));
  }

  std::unique_lock lock(mu_);
  for (auto& record : parsed) {
    auto [it, inserted] = records_.try_emplace(record.melody_id, record);
    if (!inserted) {
      it->second.scores.insert(it->second.scores.end(), record.scores.begin(),
                               record.scores.end());
    }
  }
  if (!parsed.empty()) PersistLocked();
}

void ScoreStore::Import(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StorageError("cannot open " + path.string());
  ReadFrom(in);
}

}  // namespace melgen
