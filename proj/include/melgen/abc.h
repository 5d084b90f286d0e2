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

// A restricted subset of ABC notation: single-voice note events and rests.
//
//   token      := accidental? pitch octave-mark* duration?
//   accidental := '^' | '_'
//   pitch      := 'A'..'G' | 'a'..'g' | 'z'
//   octave     := ',' (uppercase only) | '\'' (lowercase only), at most two
//   duration   := '1' | '2' | '3' | '4'        (absent means 1)
//
// Bar lines, repeat marks, ending numbers, whitespace, line continuations
// and % comments are skipped. Anything else (chords, ties, grace notes,
// slurs, inline fields, fractional durations, ...) is rejected.

#ifndef MELGEN_ABC_H_
#define MELGEN_ABC_H_

#include <compare>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace melgen {

enum class Accidental : std::uint8_t { kNone, kSharp, kFlat };

// Uppercase letters are the lower octave, lowercase the upper one.
enum class Pitch : std::uint8_t {
  C, D, E, F, G, A, B,
  c, d, e, f, g, a, b,
  Rest
};

inline constexpr int kNumPitches = 15;
inline constexpr int kMaxOctaveMarks = 2;
inline constexpr int kMaxDuration = 4;
// Number of distinct codes produced by TokenCode().
inline constexpr int kTokenCodeSpace = 3 * kNumPitches * 5 * kMaxDuration;

struct Token {
  Accidental accidental = Accidental::kNone;
  Pitch pitch = Pitch::C;
  int octave_shift = 0;  // +n for n "'" marks, -n for n "," marks
  int duration = 1;      // multiples of the unit note length

  bool is_rest() const { return pitch == Pitch::Rest; }

  friend auto operator<=>(const Token&, const Token&) = default;
};

// True iff the token can be produced by the grammar above.
bool IsValid(const Token& token);

// Dense code in [0, kTokenCodeSpace). Order-preserving w.r.t. operator<=>.
std::uint16_t TokenCode(const Token& token);
Token TokenFromCode(std::uint16_t code);

// ABC spelling of a single token, e.g. "^c'2".
std::string ToAbc(const Token& token);

// Ordered header fields, e.g. {'X', "1"}, {'K', "G"}.
using HeaderList = std::vector<std::pair<char, std::string>>;

// X:1, T:generated, M:4/4, L:1/8, K:C.
HeaderList DefaultHeaders();

struct Tune {
  std::string id;
  std::vector<Token> body;
  HeaderList source_headers;
};

// Parses a tune body (headers already stripped). Throws UnsupportedConstruct.
std::vector<Token> Tokenize(std::string_view abc_body);

// Body text only: tokens in groups of eight separated by bar lines.
std::string RenderBody(const std::vector<Token>& tokens);

// A complete tune: X first, K last, body after. Empty headers fall back to
// DefaultHeaders().
std::string Render(const std::vector<Token>& tokens,
                   const HeaderList& headers = {});

// Extracts the body lines of a single rendered or hand-written tune text.
std::string ExtractBody(std::string_view tune_text);

struct SkipReport {
  std::string source;
  std::string tune;
  std::string reason;
};

struct CorpusLoad {
  std::vector<Tune> tunes;
  std::vector<SkipReport> skipped;
};

// Parses tunes from `text`; `source` names the origin in reports and ids.
CorpusLoad ParseTunes(std::string_view text, const std::string& source);

// Loads a single .abc file or every *.abc file of a directory (sorted by
// name). Tunes using unsupported constructs are skipped and reported.
// Throws IoError, or EmptyCorpus when nothing parses.
CorpusLoad LoadCorpus(const std::filesystem::path& path);

}  // namespace melgen

#endif  // MELGEN_ABC_H_
