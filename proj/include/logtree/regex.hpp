// Copyright 2026 The logtree Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace logtree::regex {

struct Program;
struct Ast;

/// A compiled variable pattern.
///
/// The accepted dialect is a portable subset shared by every mainstream engine:
/// literals, `.`, character classes with ranges and negation, the escapes
/// `\d \D \s \S \w \W \t \n \r \f \v \xHH` plus escaped punctuation, the
/// quantifiers `* + ? {m} {m,} {m,n}` (a trailing lazy `?` is accepted and has
/// no effect on the match set), alternation, and plain or `(?:...)` groups.
/// Anchors, word boundaries, backreferences and lookaround are rejected.
///
/// Matching is a Thompson-NFA simulation over bytes, linear in
/// `text.size() * states`.
class Pattern {
public:
  /// Throws CompileError carrying the byte offset of the first problem.
  static Pattern compile(std::string_view source);

  /// Returns the offending diagnostic, or an empty string when `source` compiles.
  static std::string check(std::string_view source);

  const std::string& source() const noexcept { return source_; }

  bool full_match(std::string_view text) const;

  /// Every `end` with `start <= end <= text.size()` such that `text[start, end)`
  /// is in the language, written to `ends` in descending order (greedy first).
  void match_ends(std::string_view text, std::size_t start, std::vector<std::size_t>& ends) const;

  /// Draws a random member of the language. Bytes are taken from printable
  /// ASCII whenever the pattern allows it; unbounded repeats add at most four
  /// extra iterations.
  std::string sample(std::mt19937_64& rng) const;

  std::size_t state_count() const noexcept;

private:
  std::string source_;
  std::shared_ptr<const Program> program_;
  std::shared_ptr<const Ast> ast_;
};

}  // namespace logtree::regex
