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

#include "melgen/abc.h"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "melgen/errors.h"

namespace melgen {

namespace {

constexpr std::string_view kPitchLetters = "CDEFGABcdefgabz";

bool IsUpper(Pitch p) { return p <= Pitch::B; }
bool IsLower(Pitch p) { return p >= Pitch::c && p <= Pitch::b; }

std::string Snippet(std::string_view text, std::size_t pos) {
  return std::string(text.substr(pos, 8));
}

std::string_view Trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

bool IsFieldLine(std::string_view line) {
  return line.size() >= 2 && std::isalpha(static_cast<unsigned char>(line[0])) &&
         line[1] == ':';
}

std::vector<std::string_view> SplitLines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

}  // namespace

bool IsValid(const Token& t) {
  if (t.duration < 1 || t.duration > kMaxDuration) return false;
  if (t.is_rest()) {
    return t.accidental == Accidental::kNone && t.octave_shift == 0;
  }
  if (t.pitch > Pitch::Rest) return false;
  if (IsUpper(t.pitch)) {
    return t.octave_shift <= 0 && t.octave_shift >= -kMaxOctaveMarks;
  }
  return t.octave_shift >= 0 && t.octave_shift <= kMaxOctaveMarks;
}

std::uint16_t TokenCode(const Token& t) {
  int code = static_cast<int>(t.accidental);
  code = code * kNumPitches + static_cast<int>(t.pitch);
  code = code * 5 + (t.octave_shift + kMaxOctaveMarks);
  code = code * kMaxDuration + (t.duration - 1);
  return static_cast<std::uint16_t>(code);
}

Token TokenFromCode(std::uint16_t code) {
  Token t;
  t.duration = code % kMaxDuration + 1;
  code /= kMaxDuration;
  t.octave_shift = code % 5 - kMaxOctaveMarks;
  code /= 5;
  t.pitch = static_cast<Pitch>(code % kNumPitches);
  code /= kNumPitches;
  t.accidental = static_cast<Accidental>(code);
  return t;
}

std::string ToAbc(const Token& t) {
  std::string out;
  if (t.accidental == Accidental::kSharp) out += '^';
  if (t.accidental == Accidental::kFlat) out += '_';
  out += kPitchLetters[static_cast<int>(t.pitch)];
  for (int i = 0; i < t.octave_shift; ++i) out += '\'';
  for (int i = 0; i > t.octave_shift; --i) out += ',';
  if (t.duration != 1) out += static_cast<char>('0' + t.duration);
  return out;
}

HeaderList DefaultHeaders() {
  return {{'X', "1"}, {'T', "generated"}, {'M', "4/4"}, {'L', "1/8"},
          {'K', "C"}};
}

std::vector<Token> Tokenize(std::string_view body) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  const std::size_t n = body.size();
  auto unsupported = [&](std::size_t pos) {
    return UnsupportedConstruct(pos, Snippet(body, pos));
  };

  while (i < n) {
    const char ch = body[i];
    if (std::isspace(static_cast<unsigned char>(ch)) || ch == '\\') {
      ++i;
      continue;
    }
    if (ch == '%') {
      while (i < n && body[i] != '\n') ++i;
      continue;
    }
    if (ch == '|' || ch == ':') {
      // Bar lines and repeats: | || |] |: :| :: followed by ending numbers.
      while (i < n && (body[i] == '|' || body[i] == ':' || body[i] == ']')) ++i;
      while (i < n && std::isdigit(static_cast<unsigned char>(body[i]))) ++i;
      continue;
    }
    if (ch == '[') {
      if (i + 1 < n && body[i + 1] == '|') {
        i += 2;
        while (i < n && (body[i] == '|' || body[i] == ':' || body[i] == ']')) {
          ++i;
        }
        continue;
      }
      if (i + 1 < n && std::isdigit(static_cast<unsigned char>(body[i + 1]))) {
        i += 2;
        continue;
      }
      throw unsupported(i);  // chord or inline field
    }

    const std::size_t start = i;
    Token token;
    if (ch == '^' || ch == '_') {
      token.accidental = ch == '^' ? Accidental::kSharp : Accidental::kFlat;
      ++i;
    }
    if (i >= n) throw unsupported(start);
    const std::size_t letter = kPitchLetters.find(body[i]);
    if (letter == std::string_view::npos) throw unsupported(start);
    token.pitch = static_cast<Pitch>(letter);
    if (token.is_rest() && token.accidental != Accidental::kNone) {
      throw unsupported(start);
    }
    ++i;

    while (i < n && (body[i] == '\'' || body[i] == ',')) {
      const bool up = body[i] == '\'';
      if (token.is_rest() || (up && !IsLower(token.pitch)) ||
          (!up && !IsUpper(token.pitch)) ||
          std::abs(token.octave_shift) == kMaxOctaveMarks) {
        throw unsupported(start);
      }
      token.octave_shift += up ? 1 : -1;
      ++i;
    }

    if (i < n && std::isdigit(static_cast<unsigned char>(body[i]))) {
      const int d = body[i] - '0';
      if (d < 1 || d > kMaxDuration) throw unsupported(start);
      if (i + 1 < n && std::isdigit(static_cast<unsigned char>(body[i + 1]))) {
        throw unsupported(start);
      }
      token.duration = d;
      ++i;
    }
    tokens.push_back(token);
  }
  return tokens;
}

std::string RenderBody(const std::vector<Token>& tokens) {
  constexpr std::size_t kTokensPerBar = 8;
  constexpr std::size_t kBarsPerLine = 4;
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0 && i % kTokensPerBar == 0) {
      out += (i % (kTokensPerBar * kBarsPerLine) == 0) ? " |\n" : " | ";
    }
    out += ToAbc(tokens[i]);
  }
  return out;
}

std::string Render(const std::vector<Token>& tokens, const HeaderList& headers) {
  const HeaderList& fields = headers.empty() ? DefaultHeaders() : headers;
  std::string x_value = "1";
  std::string k_value = "C";
  for (const auto& [key, value] : fields) {
    if (key == 'X') x_value = value;
    if (key == 'K') k_value = value;
  }
  std::string out = "X:" + x_value + "\n";
  for (const auto& [key, value] : fields) {
    if (key == 'X' || key == 'K') continue;
    out += key;
    out += ':';
    out += value;
    out += '\n';
  }
  out += "K:" + k_value + "\n";
  out += RenderBody(tokens);
  out += '\n';
  return out;
}

std::string ExtractBody(std::string_view tune_text) {
  const auto lines = SplitLines(tune_text);
  const bool has_key = std::any_of(lines.begin(), lines.end(), [](auto line) {
    return line.size() >= 2 && line[0] == 'K' && line[1] == ':';
  });
  bool in_body = !has_key;
  std::string body;
  for (std::string_view line : lines) {
    if (!in_body) {
      if (line.size() >= 2 && line[0] == 'K' && line[1] == ':') in_body = true;
      continue;
    }
    if (IsFieldLine(line) || (!line.empty() && line[0] == '%')) continue;
    body += line;
    body += '\n';
  }
  return body;
}

CorpusLoad ParseTunes(std::string_view text, const std::string& source) {
  CorpusLoad result;
  const std::string stem = std::filesystem::path(source).stem().string();
  std::set<std::string> used_ids;

  const auto lines = SplitLines(text);
  std::size_t i = 0;
  while (i < lines.size()) {
    if (Trim(lines[i]).empty()) {
      ++i;
      continue;
    }
    std::size_t end = i;
    while (end < lines.size() && !Trim(lines[end]).empty()) ++end;

    std::size_t first = i;
    while (first < end && lines[first].starts_with('%')) ++first;
    if (first == end || !lines[first].starts_with("X:")) {
      i = end;  // free text or file-level header block
      continue;
    }

    Tune tune;
    std::string body;
    std::string failure;
    bool in_body = false;
    for (std::size_t k = first; k < end; ++k) {
      std::string_view line = lines[k];
      if (line.starts_with('%')) continue;
      if (!in_body && IsFieldLine(line)) {
        tune.source_headers.emplace_back(line[0],
                                         std::string(Trim(line.substr(2))));
        if (line[0] == 'K') in_body = true;
        continue;
      }
      if (in_body && IsFieldLine(line)) {
        failure = "inline field line '" + std::string(line) + "'";
        break;
      }
      in_body = true;
      body += line;
      body += '\n';
    }

    std::string x_value = std::string(Trim(lines[first].substr(2)));
    std::string id = stem + ":" + x_value;
    for (int suffix = 2; used_ids.contains(id); ++suffix) {
      id = stem + ":" + x_value + "#" + std::to_string(suffix);
    }
    used_ids.insert(id);
    tune.id = id;

    if (failure.empty()) {
      try {
        tune.body = Tokenize(body);
        if (tune.body.empty()) failure = "empty body";
      } catch (const UnsupportedConstruct& e) {
        failure = e.what();
      }
    }
    if (failure.empty()) {
      result.tunes.push_back(std::move(tune));
    } else {
      result.skipped.push_back({source, id, failure});
    }
    i = end;
  }
  return result;
}

CorpusLoad LoadCorpus(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::exists(path, ec)) {
    throw IoError("corpus path does not exist: " + path.string());
  }
  std::vector<fs::path> files;
  if (fs::is_directory(path, ec)) {
    for (const auto& entry : fs::directory_iterator(path, ec)) {
      std::string ext = entry.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(),
                     [](unsigned char c) { return std::tolower(c); });
      if (entry.is_regular_file() && ext == ".abc") files.push_back(entry.path());
    }
    if (ec) throw IoError("cannot list " + path.string() + ": " + ec.message());
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(path);
  }

  CorpusLoad result;
  for (const auto& file : files) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot read " + file.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    CorpusLoad part = ParseTunes(buffer.str(), file.filename().string());
    std::move(part.tunes.begin(), part.tunes.end(),
              std::back_inserter(result.tunes));
    std::move(part.skipped.begin(), part.skipped.end(),
              std::back_inserter(result.skipped));
  }
  if (result.tunes.empty()) {
    throw EmptyCorpus("no parseable tunes under " + path.string() + " (" +
                      std::to_string(result.skipped.size()) + " skipped)");
  }
  return result;
}

}  // namespace melgen
