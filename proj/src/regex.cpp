// Copyright 2026 The logtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "logtree/regex.hpp"

#include <algorithm>
#include <array>
#include <bitset>
#include <cstdint>

#include "logtree/error.hpp"

namespace logtree::regex {

using ByteSet = std::bitset<256>;

namespace {

constexpr int kUnbounded = -1;
constexpr int kMaxRepeat = 1000;
constexpr std::size_t kMaxStates = 20000;

enum class AstKind { empty, set, concat, alternate, repeat };

struct AstNode {
  AstKind kind = AstKind::empty;
  ByteSet set;
  std::vector<int> kids;
  int min = 0;
  int max = 0;
};

}  // namespace

struct Ast {
  std::vector<AstNode> nodes;
  int root = -1;
};

namespace {

ByteSet digit_set() {
  ByteSet s;
  for (int c = '0'; c <= '9'; ++c) s.set(c);
  return s;
}

ByteSet space_set() {
  ByteSet s;
  for (char c : {' ', '\t', '\n', '\r', '\f', '\v'}) s.set(static_cast<unsigned char>(c));
  return s;
}

ByteSet word_set() {
  ByteSet s = digit_set();
  for (int c = 'a'; c <= 'z'; ++c) s.set(c);
  for (int c = 'A'; c <= 'Z'; ++c) s.set(c);
  s.set('_');
  return s;
}

ByteSet single(unsigned char c) {
  ByteSet s;
  s.set(c);
  return s;
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

class Parser {
public:
  explicit Parser(std::string_view src) : src_(src) {}

  Ast parse() {
    ast_.root = parse_alternate();
    if (pos_ != src_.size()) fail("unbalanced ')'");
    return std::move(ast_);
  }

private:
  [[noreturn]] void fail(const std::string& what) const {
    throw CompileError("pattern '" + std::string(src_) + "': " + what + " at offset " + std::to_string(pos_),
                       CompileError::npos, pos_);
  }

  bool at_end() const { return pos_ >= src_.size(); }
  char peek() const { return src_[pos_]; }

  int add(AstNode node) {
    ast_.nodes.push_back(std::move(node));
    return static_cast<int>(ast_.nodes.size()) - 1;
  }

  int parse_alternate() {
    std::vector<int> branches{parse_concat()};
    while (!at_end() && peek() == '|') {
      ++pos_;
      branches.push_back(parse_concat());
    }
    if (branches.size() == 1) return branches.front();
    AstNode node;
    node.kind = AstKind::alternate;
    node.kids = std::move(branches);
    return add(std::move(node));
  }

  int parse_concat() {
    std::vector<int> items;
    while (!at_end() && peek() != '|' && peek() != ')') items.push_back(parse_repeat());
    if (items.empty()) return add(AstNode{});
    if (items.size() == 1) return items.front();
    AstNode node;
    node.kind = AstKind::concat;
    node.kids = std::move(items);
    return add(std::move(node));
  }

  // Parses "{m}", "{m,}" or "{m,n}" at pos_; leaves pos_ untouched when the
  // brace does not start a quantifier (it is then a literal).
  bool try_braces(int& min, int& max) {
    std::size_t p = pos_ + 1;
    auto read_int = [&](int& out) {
      std::size_t begin = p;
      long value = 0;
      while (p < src_.size() && src_[p] >= '0' && src_[p] <= '9') {
        value = value * 10 + (src_[p] - '0');
        if (value > kMaxRepeat) {
          pos_ = begin;
          fail("repeat count exceeds " + std::to_string(kMaxRepeat));
        }
        ++p;
      }
      out = static_cast<int>(value);
      return p > begin;
    };
    if (!read_int(min)) return false;
    if (p < src_.size() && src_[p] == '}') {
      max = min;
    } else if (p < src_.size() && src_[p] == ',') {
      ++p;
      if (p < src_.size() && src_[p] == '}') {
        max = kUnbounded;
      } else if (!read_int(max) || p >= src_.size() || src_[p] != '}') {
        return false;
      }
    } else {
      return false;
    }
    pos_ = p + 1;
    if (max != kUnbounded && max < min) fail("repeat range {m,n} with n < m");
    return true;
  }

  int parse_repeat() {
    int atom = parse_atom();
    while (!at_end()) {
      int min = 0;
      int max = 0;
      char c = peek();
      if (c == '*') {
        min = 0, max = kUnbounded, ++pos_;
      } else if (c == '+') {
        min = 1, max = kUnbounded, ++pos_;
      } else if (c == '?') {
        min = 0, max = 1, ++pos_;
      } else if (c == '{' && try_braces(min, max)) {
      } else {
        break;
      }
      if (!at_end() && peek() == '?') {
        ++pos_;  // lazy: same language
      } else if (!at_end() && peek() == '+') {
        fail("possessive quantifiers are not supported");
      }
      AstNode node;
      node.kind = AstKind::repeat;
      node.kids = {atom};
      node.min = min;
      node.max = max;
      atom = add(std::move(node));
    }
    return atom;
  }

  int set_node(ByteSet set) {
    AstNode node;
    node.kind = AstKind::set;
    node.set = set;
    return add(std::move(node));
  }

  // Escape after the backslash; `in_class` allows only set-valued escapes.
  ByteSet parse_escape(bool in_class) {
    if (at_end()) fail("trailing backslash");
    char c = src_[pos_++];
    switch (c) {
      case 'd': return digit_set();
      case 'D': return ~digit_set();
      case 's': return space_set();
      case 'S': return ~space_set();
      case 'w': return word_set();
      case 'W': return ~word_set();
      case 't': return single('\t');
      case 'n': return single('\n');
      case 'r': return single('\r');
      case 'f': return single('\f');
      case 'v': return single('\v');
      case 'x': {
        if (pos_ + 2 > src_.size()) fail("truncated \\x escape");
        int hi = hex_value(src_[pos_]);
        int lo = hex_value(src_[pos_ + 1]);
        if (hi < 0 || lo < 0) fail("malformed \\x escape");
        pos_ += 2;
        return single(static_cast<unsigned char>(hi * 16 + lo));
      }
      case 'b':
      case 'B':
        if (in_class && c == 'b') return single('\b');
        --pos_;
        fail("word-boundary assertions are not supported");
      case 'A':
      case 'z':
      case 'Z':
      case 'G':
        --pos_;
        fail("anchors are not supported");
      default:
        break;
    }
    if (c >= '0' && c <= '9') {
      --pos_;
      fail("backreferences are not supported");
    }
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) {
      --pos_;
      fail(std::string("unknown escape \\") + c);
    }
    return single(static_cast<unsigned char>(c));
  }

  int parse_class() {
    ++pos_;  // '['
    bool negate = false;
    if (!at_end() && peek() == '^') {
      negate = true;
      ++pos_;
    }
    ByteSet set;
    bool first = true;
    while (true) {
      if (at_end()) fail("unterminated character class");
      char c = peek();
      if (c == ']' && !first) {
        ++pos_;
        break;
      }
      first = false;
      ByteSet item;
      int lo = -1;
      if (c == '\\') {
        ++pos_;
        item = parse_escape(true);
        if (item.count() == 1) {
          for (int b = 0; b < 256; ++b)
            if (item.test(b)) lo = b;
        }
      } else {
        if (c == '[' && pos_ + 1 < src_.size() && src_[pos_ + 1] == ':') fail("POSIX classes are not supported");
        ++pos_;
        lo = static_cast<unsigned char>(c);
        item = single(static_cast<unsigned char>(c));
      }
      if (lo >= 0 && pos_ + 1 < src_.size() && peek() == '-' && src_[pos_ + 1] != ']') {
        ++pos_;
        int hi = -1;
        if (peek() == '\\') {
          ++pos_;
          ByteSet hs = parse_escape(true);
          if (hs.count() != 1) fail("class escape cannot end a range");
          for (int b = 0; b < 256; ++b)
            if (hs.test(b)) hi = b;
        } else {
          hi = static_cast<unsigned char>(src_[pos_++]);
        }
        if (hi < lo) fail("reversed character range");
        for (int b = lo; b <= hi; ++b) item.set(b);
      }
      set |= item;
    }
    return set_node(negate ? ~set : set);
  }

  int parse_atom() {
    char c = peek();
    switch (c) {
      case '(': {
        ++pos_;
        if (!at_end() && peek() == '?') {
          if (pos_ + 1 < src_.size() && src_[pos_ + 1] == ':') {
            pos_ += 2;
          } else {
            fail("lookaround and named/flagged groups are not supported");
          }
        }
        int inner = parse_alternate();
        if (at_end() || peek() != ')') fail("missing ')'");
        ++pos_;
        return inner;
      }
      case ')':
        fail("unbalanced ')'");
      case '[':
        return parse_class();
      case '.':
        ++pos_;
        return set_node(~single('\n'));
      case '\\':
        ++pos_;
        return set_node(parse_escape(false));
      case '^':
      case '$':
        fail("anchors are not supported");
      case '*':
      case '+':
      case '?':
        fail("quantifier without operand");
      default:
        ++pos_;
        return set_node(single(static_cast<unsigned char>(c)));
    }
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  Ast ast_;
};

enum class Op : std::uint8_t { set, split, match };

struct State {
  Op op = Op::match;
  int set = -1;
  int out = -1;
  int out2 = -1;
};

}  // namespace

struct Program {
  std::vector<State> states;
  std::vector<ByteSet> sets;
  int start = -1;
};

namespace {

// Thompson construction. A fragment's dangling exits are patched later.
struct Exit {
  int state;
  bool second;
};

struct Fragment {
  int start;
  std::vector<Exit> exits;
};

class Compiler {
public:
  Compiler(const Ast& ast, const std::string& src) : ast_(ast), src_(src) {}

  Program compile() {
    Fragment f = build(ast_.root);
    int match = emit(State{Op::match, -1, -1, -1});
    patch(f, match);
    prog_.start = f.start;
    return std::move(prog_);
  }

private:
  int emit(State s) {
    if (prog_.states.size() >= kMaxStates)
      throw CompileError("pattern '" + src_ + "': expands to more than " + std::to_string(kMaxStates) + " states");
    prog_.states.push_back(s);
    return static_cast<int>(prog_.states.size()) - 1;
  }

  void patch(Fragment& f, int target) {
    for (const Exit& e : f.exits) {
      State& st = prog_.states[e.state];
      (e.second ? st.out2 : st.out) = target;
    }
    f.exits.clear();
  }

  Fragment empty() {
    int s = emit(State{Op::split, -1, -1, -1});
    // A split with a single used exit acts as an epsilon edge.
    prog_.states[s].out2 = -2;
    return Fragment{s, {Exit{s, false}}};
  }

  Fragment build(int idx) {
    const AstNode& n = ast_.nodes[idx];
    switch (n.kind) {
      case AstKind::empty:
        return empty();
      case AstKind::set: {
        prog_.sets.push_back(n.set);
        int s = emit(State{Op::set, static_cast<int>(prog_.sets.size()) - 1, -1, -1});
        return Fragment{s, {Exit{s, false}}};
      }
      case AstKind::concat: {
        Fragment acc = build(n.kids.front());
        for (std::size_t i = 1; i < n.kids.size(); ++i) {
          Fragment next = build(n.kids[i]);
          patch(acc, next.start);
          acc.exits = std::move(next.exits);
        }
        return acc;
      }
      case AstKind::alternate: {
        Fragment acc = build(n.kids.front());
        for (std::size_t i = 1; i < n.kids.size(); ++i) {
          Fragment next = build(n.kids[i]);
          int s = emit(State{Op::split, -1, acc.start, next.start});
          Fragment joined{s, std::move(acc.exits)};
          joined.exits.insert(joined.exits.end(), next.exits.begin(), next.exits.end());
          acc = std::move(joined);
        }
        return acc;
      }
      case AstKind::repeat:
        return build_repeat(n);
    }
    return empty();
  }

  Fragment optional(int kid) {
    Fragment body = build(kid);
    int s = emit(State{Op::split, -1, body.start, -1});
    Fragment f{s, std::move(body.exits)};
    f.exits.push_back(Exit{s, true});
    return f;
  }

  Fragment star(int kid) {
    Fragment body = build(kid);
    int s = emit(State{Op::split, -1, body.start, -1});
    patch(body, s);
    return Fragment{s, {Exit{s, true}}};
  }

  Fragment build_repeat(const AstNode& n) {
    int kid = n.kids.front();
    std::vector<Fragment> parts;
    for (int i = 0; i < n.min; ++i) parts.push_back(build(kid));
    if (n.max == kUnbounded) {
      parts.push_back(star(kid));
    } else {
      for (int i = n.min; i < n.max; ++i) parts.push_back(optional(kid));
    }
    if (parts.empty()) return empty();
    Fragment acc = std::move(parts.front());
    for (std::size_t i = 1; i < parts.size(); ++i) {
      patch(acc, parts[i].start);
      acc.exits = std::move(parts[i].exits);
    }
    return acc;
  }

  const Ast& ast_;
  const std::string& src_;
  Program prog_;
};

// Per-thread scratch reused across programs; marks are compared against a
// strictly increasing generation so stale entries never alias.
struct Scratch {
  std::vector<std::uint32_t> mark;
  std::uint32_t gen = 0;
  std::vector<int> current;
  std::vector<int> next;
};

class Simulator {
public:
  Simulator(const Program& p, Scratch& scratch) : p_(p), mark_(scratch.mark), gen_(scratch.gen), s_(scratch) {
    if (mark_.size() < p.states.size()) mark_.resize(p.states.size(), 0);
  }

  void add(std::vector<int>& list, int s) {
    if (s < 0) return;
    if (mark_[s] == gen_) return;
    mark_[s] = gen_;
    const State& st = p_.states[s];
    if (st.op == Op::split) {
      add(list, st.out);
      add(list, st.out2);
      return;
    }
    list.push_back(s);
  }

  void run(std::string_view text, std::size_t start, std::vector<std::size_t>& ends) {
    ends.clear();
    std::vector<int>& current = s_.current;
    std::vector<int>& next = s_.next;
    current.clear();
    ++gen_;
    add(current, p_.start);
    std::size_t pos = start;
    while (true) {
      bool accepted = false;
      for (int s : current)
        if (p_.states[s].op == Op::match) accepted = true;
      if (accepted) ends.push_back(pos);
      if (pos >= text.size() || current.empty()) break;
      unsigned char b = static_cast<unsigned char>(text[pos]);
      next.clear();
      ++gen_;
      for (int s : current) {
        const State& st = p_.states[s];
        if (st.op == Op::set && p_.sets[st.set].test(b)) add(next, st.out);
      }
      current.swap(next);
      ++pos;
    }
    std::reverse(ends.begin(), ends.end());
  }

private:
  const Program& p_;
  std::vector<std::uint32_t>& mark_;
  std::uint32_t& gen_;
  Scratch& s_;
};

void sample_into(const Ast& ast, int idx, std::mt19937_64& rng, std::string& out) {
  const AstNode& n = ast.nodes[idx];
  switch (n.kind) {
    case AstKind::empty:
      return;
    case AstKind::set: {
      std::array<unsigned char, 256> pool{};
      int count = 0;
      for (int b = 0x20; b < 0x7f; ++b)
        if (n.set.test(b)) pool[count++] = static_cast<unsigned char>(b);
      if (count == 0) {
        for (int b = 0; b < 256; ++b)
          if (n.set.test(b) && b != '\n') pool[count++] = static_cast<unsigned char>(b);
      }
      if (count == 0) pool[count++] = '\n';
      std::uniform_int_distribution<int> pick(0, count - 1);
      out.push_back(static_cast<char>(pool[pick(rng)]));
      return;
    }
    case AstKind::concat:
      for (int k : n.kids) sample_into(ast, k, rng, out);
      return;
    case AstKind::alternate: {
      std::uniform_int_distribution<std::size_t> pick(0, n.kids.size() - 1);
      sample_into(ast, n.kids[pick(rng)], rng, out);
      return;
    }
    case AstKind::repeat: {
      int hi = n.max == kUnbounded ? n.min + 4 : std::min(n.max, n.min + 4);
      std::uniform_int_distribution<int> pick(n.min, hi);
      int times = pick(rng);
      for (int i = 0; i < times; ++i) sample_into(ast, n.kids.front(), rng, out);
      return;
    }
  }
}

}  // namespace

Pattern Pattern::compile(std::string_view source) {
  Pattern p;
  p.source_ = std::string(source);
  auto ast = std::make_shared<Ast>(Parser(source).parse());
  p.program_ = std::make_shared<Program>(Compiler(*ast, p.source_).compile());
  p.ast_ = std::move(ast);
  return p;
}

std::string Pattern::check(std::string_view source) {
  try {
    compile(source);
    return {};
  } catch (const CompileError& e) {
    return e.what();
  }
}

bool Pattern::full_match(std::string_view text) const {
  std::vector<std::size_t> ends;
  match_ends(text, 0, ends);
  return !ends.empty() && ends.front() == text.size();
}

void Pattern::match_ends(std::string_view text, std::size_t start, std::vector<std::size_t>& ends) const {
  thread_local Scratch scratch;
  Simulator sim(*program_, scratch);
  sim.run(text, start, ends);
}

std::string Pattern::sample(std::mt19937_64& rng) const {
  std::string out;
  sample_into(*ast_, ast_->root, rng, out);
  return out;
}

std::size_t Pattern::state_count() const noexcept { return program_ ? program_->states.size() : 0; }

}  // namespace logtree::regex
