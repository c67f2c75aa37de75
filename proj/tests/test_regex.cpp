#include <random>
#include <regex>
#include <string>
#include <vector>

#include "doctest.h"
#include "logtree/error.hpp"
#include "logtree/regex.hpp"

using logtree::CompileError;
using logtree::regex::Pattern;

namespace {

std::string random_pattern(std::mt19937_64& rng, int depth) {
  static const std::vector<std::string> atoms = {"a", "b", "1", " ", ".", "\\d", "\\s", "\\S", "\\w",
                                                 "[ab]", "[^a]", "[0-9]", "[a-b1]", "\\.", "x"};
  std::uniform_int_distribution<int> pick(0, 9);
  std::string out;
  int items = 1 + static_cast<int>(rng() % 3);
  for (int i = 0; i < items; ++i) {
    std::string atom;
    if (depth > 0 && pick(rng) < 2) {
      atom = "(?:" + random_pattern(rng, depth - 1);
      if (pick(rng) < 4) atom += "|" + random_pattern(rng, depth - 1);
      atom += ")";
    } else {
      atom = atoms[rng() % atoms.size()];
    }
    switch (pick(rng)) {
      case 0: atom += "*"; break;
      case 1: atom += "+"; break;
      case 2: atom += "?"; break;
      case 3: atom += "{1,2}"; break;
      case 4: atom += "{2}"; break;
      default: break;
    }
    out += atom;
  }
  return out;
}

std::string random_text(std::mt19937_64& rng) {
  static const std::string alphabet = "ab1 .x";
  std::string s;
  std::size_t n = rng() % 7;
  for (std::size_t i = 0; i < n; ++i) s += alphabet[rng() % alphabet.size()];
  return s;
}

}  // namespace

TEST_CASE("regex: basic dialect") {
  Pattern date = Pattern::compile(R"(\S+\s+\d+\s+\d+:\d+:\d+)");
  CHECK(date.full_match("Mar  9 23:46:29"));
  CHECK_FALSE(date.full_match("Mar  9 23:46"));
  CHECK(Pattern::compile(R"(\d{1,3}(?:\.\d{1,3}){3})").full_match("10.35.161.71"));
  CHECK(Pattern::compile("a|bc").full_match("bc"));
  CHECK(Pattern::compile("[^\\]]+").full_match("abc"));
  CHECK(Pattern::compile("\\x41").full_match("A"));
  CHECK(Pattern::compile("a+?").full_match("aaa"));
  CHECK(Pattern::compile("").full_match(""));
}

TEST_CASE("regex: rejected constructs carry an offset") {
  for (const char* bad : {"^a", "a$", "\\b", "(a)\\1", "(?=a)", "(?!a)", "a++", "[[:digit:]]", "(a", "a)", "[a",
                          "*a", "a{3,2}", "\\x4"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(Pattern::compile(bad), CompileError);
    CHECK_FALSE(Pattern::check(bad).empty());
  }
  try {
    Pattern::compile("ab(?=c)");
  } catch (const CompileError& e) {
    CHECK(e.offset() == 3);  // the "?=" after the group opener
  }
}

TEST_CASE("regex: match_ends is descending and exact") {
  Pattern p = Pattern::compile("a*");
  std::vector<std::size_t> ends;
  p.match_ends("xaaab", 1, ends);
  CHECK(ends == std::vector<std::size_t>{4, 3, 2, 1});
  Pattern::compile("b").match_ends("xaaab", 1, ends);
  CHECK(ends.empty());
}

TEST_CASE("regex: agrees with std::regex on random patterns") {
  std::mt19937_64 rng(7);
  int checked = 0;
  for (int iter = 0; iter < 600; ++iter) {
    std::string src = random_pattern(rng, 2);
    CAPTURE(src);
    Pattern p = Pattern::compile(src);
    std::regex oracle(src, std::regex::ECMAScript);
    for (int k = 0; k < 20; ++k) {
      std::string text = random_text(rng);
      CAPTURE(text);
      CHECK(p.full_match(text) == std::regex_match(text, oracle));
      std::vector<std::size_t> ends;
      std::size_t start = text.empty() ? 0 : rng() % (text.size() + 1);
      p.match_ends(text, start, ends);
      std::vector<std::size_t> expect;
      for (std::size_t e = text.size() + 1; e-- > start;)
        if (std::regex_match(text.substr(start, e - start), oracle)) expect.push_back(e);
      CHECK(ends == expect);
      ++checked;
    }
  }
  CHECK(checked == 12000);
}

TEST_CASE("regex: samples belong to the language") {
  std::mt19937_64 rng(11);
  for (int iter = 0; iter < 300; ++iter) {
    std::string src = random_pattern(rng, 2);
    Pattern p = Pattern::compile(src);
    for (int k = 0; k < 5; ++k) {
      std::string s = p.sample(rng);
      CAPTURE(src);
      CAPTURE(s);
      CHECK(p.full_match(s));
    }
  }
}
