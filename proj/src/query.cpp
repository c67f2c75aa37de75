// Copyright 2026 The logtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "logtree/query.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>

#include "logtree/error.hpp"

namespace logtree::query {

namespace {

// ---- reader ---------------------------------------------------------------

struct Atom {
  enum class Type { open, close, word, string, end } type = Type::end;
  std::string text;
  std::size_t line = 1, column = 1;
};

class Lexer {
public:
  explicit Lexer(std::string_view text) : text_(text) {}

  Atom next() {
    skip();
    Atom a;
    a.line = line_;
    a.column = column_;
    if (pos_ >= text_.size()) return a;
    char c = text_[pos_];
    if (c == '(' || c == ')') {
      advance();
      a.type = c == '(' ? Atom::Type::open : Atom::Type::close;
      return a;
    }
    if (c == '"') {
      advance();
      a.type = Atom::Type::string;
      while (true) {
        if (pos_ >= text_.size()) throw error(a, "unterminated string");
        char d = text_[pos_];
        advance();
        if (d == '"') break;
        if (d == '\\') {
          if (pos_ >= text_.size()) throw error(a, "unterminated string");
          char e = text_[pos_];
          advance();
          if (e == 'n') a.text += '\n';
          else if (e == 't') a.text += '\t';
          else a.text += e;
        } else {
          a.text += d;
        }
      }
      return a;
    }
    a.type = Atom::Type::word;
    while (pos_ < text_.size()) {
      char d = text_[pos_];
      if (std::isspace(static_cast<unsigned char>(d)) || d == '(' || d == ')' || d == '"' || d == ';') break;
      a.text += d;
      advance();
    }
    return a;
  }

  static ParseError error(const Atom& at, const std::string& message) {
    return ParseError(message, std::to_string(at.line) + ":" + std::to_string(at.column));
  }

private:
  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    ++pos_;
  }
  void skip() {
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == ';') {
        while (pos_ < text_.size() && text_[pos_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0, line_ = 1, column_ = 1;
};

const std::map<std::string, Expr::Kind>& kinds() {
  static const std::map<std::string, Expr::Kind> k = {
      {"and", Expr::Kind::all},          {"or", Expr::Kind::any},      {"not", Expr::Kind::negate},
      {"exists", Expr::Kind::exists},    {"eq", Expr::Kind::eq},       {"ne", Expr::Kind::ne},
      {"contains", Expr::Kind::contains}, {"lt", Expr::Kind::lt},      {"le", Expr::Kind::le},
      {"gt", Expr::Kind::gt},            {"ge", Expr::Kind::ge},       {"range", Expr::Kind::range},
      {"const", Expr::Kind::constant}};
  return k;
}

const char* kind_name(Expr::Kind kind) {
  for (const auto& [name, k] : kinds())
    if (k == kind) return name.c_str();
  return "?";
}

std::optional<double> as_number(std::string_view s) {
  double v = 0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || first == last) return std::nullopt;
  return v;
}

class Reader {
public:
  explicit Reader(std::string_view text) : lex_(text) { look_ = lex_.next(); }

  QuerySpec document() {
    QuerySpec spec;
    if (look_.type == Atom::Type::open) {
      Atom open = take();
      if (look_.type == Atom::Type::word && look_.text == "query") {
        take();
        Atom form = take();
        if (form.type != Atom::Type::word || (form.text != "custom" && form.text != "standardized"))
          throw Lexer::error(form, "expected form 'custom' or 'standardized'");
        spec.form = form.text == "custom" ? Form::custom : Form::standardized;
        spec.root = expr();
        expect_close();
      } else {
        spec.root = body(open);
      }
    } else {
      throw Lexer::error(look_, "expected '('");
    }
    if (look_.type != Atom::Type::end) throw Lexer::error(look_, "trailing input after the query");
    return spec;
  }

private:
  Atom take() {
    Atom a = look_;
    look_ = lex_.next();
    return a;
  }

  void expect_close() {
    if (look_.type != Atom::Type::close) throw Lexer::error(look_, "expected ')'");
    take();
  }

  Expr expr() {
    if (look_.type != Atom::Type::open) throw Lexer::error(look_, "expected '('");
    return body(take());
  }

  std::string operand(const char* what) {
    Atom a = take();
    if (a.type != Atom::Type::word && a.type != Atom::Type::string) throw Lexer::error(a, std::string("expected ") + what);
    return a.text;
  }

  // After the opening parenthesis.
  Expr body(const Atom& open) {
    Atom head = take();
    if (head.type != Atom::Type::word) throw Lexer::error(head, "expected an operator");
    auto it = kinds().find(head.text);
    if (it == kinds().end()) throw Lexer::error(head, "unknown operator '" + head.text + "'");
    Expr e;
    e.kind = it->second;
    switch (e.kind) {
      case Expr::Kind::all:
      case Expr::Kind::any:
        while (look_.type == Atom::Type::open) e.children.push_back(expr());
        if (e.children.empty()) throw Lexer::error(open, head.text + " needs at least one operand");
        break;
      case Expr::Kind::negate:
        e.children.push_back(expr());
        break;
      case Expr::Kind::constant:
        e.value = operand("a substring");
        break;
      default: {
        Atom n = take();
        if (n.type != Atom::Type::word && n.type != Atom::Type::string) throw Lexer::error(n, "expected a name");
        std::string name = n.text;
        if (name.rfind("field:", 0) == 0) {
          e.space = Expr::Space::field;
          name = name.substr(6);
        } else if (name.rfind("attr:", 0) == 0) {
          e.space = Expr::Space::attr;
          name = name.substr(5);
        }
        if (name.empty()) throw Lexer::error(n, "empty name");
        e.name = name;
        if (e.kind == Expr::Kind::eq || e.kind == Expr::Kind::ne || e.kind == Expr::Kind::contains) {
          e.value = operand("a value");
        } else if (e.kind == Expr::Kind::range) {
          e.value = operand("a lower bound");
          e.upper = operand("an upper bound");
        } else if (e.kind != Expr::Kind::exists) {
          Atom v = look_;
          auto num = as_number(operand("a number"));
          if (!num) throw Lexer::error(v, "expected a number");
          e.number = *num;
        }
      }
    }
    expect_close();
    return e;
  }

  Lexer lex_;
  Atom look_;
};

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out + "\"";
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

void write(const Expr& e, std::string& out) {
  out += "(";
  out += kind_name(e.kind);
  switch (e.kind) {
    case Expr::Kind::all:
    case Expr::Kind::any:
    case Expr::Kind::negate:
      for (const auto& c : e.children) {
        out += " ";
        write(c, out);
      }
      break;
    case Expr::Kind::constant:
      out += " " + quote(e.value);
      break;
    default:
      out += " ";
      out += e.space == Expr::Space::field ? "field:" : e.space == Expr::Space::attr ? "attr:" : "";
      out += e.name;
      if (e.kind == Expr::Kind::eq || e.kind == Expr::Kind::ne || e.kind == Expr::Kind::contains) out += " " + quote(e.value);
      else if (e.kind == Expr::Kind::range) out += " " + quote(e.value) + " " + quote(e.upper);
      else if (e.kind != Expr::Kind::exists) out += " " + format_number(e.number);
  }
  out += ")";
}

// ---- evaluation -----------------------------------------------------------

bool uses_attr(const Expr& e, Form form) {
  return e.space == Expr::Space::attr || (e.space == Expr::Space::form && form == Form::standardized);
}

struct Context {
  const Bundle& bundle;
  Form form;
  std::map<NodeId, std::string> constants;  // template -> wildcard form
  std::set<std::string> temporal_fields;
  std::set<std::string> temporal_attrs;
};

Context make_context(const Bundle& bundle, Form form) {
  Context ctx{bundle, form, {}, {}, {}};
  for (const auto& t : bundle.tree.templates()) ctx.constants[t.leaf_id] = wildcard_form(bundle.tree, t);
  for (const auto& f : bundle.schema.fields())
    if (f.temporal) {
      ctx.temporal_fields.insert(f.name);
      if (auto it = bundle.mappings.find(f.name); it != bundle.mappings.end())
        ctx.temporal_attrs.insert(it->second.begin(), it->second.end());
    }
  return ctx;
}

bool eval(const Expr& e, const Row& row, const Context& ctx) {
  switch (e.kind) {
    case Expr::Kind::all:
      for (const auto& c : e.children)
        if (!eval(c, row, ctx)) return false;
      return true;
    case Expr::Kind::any:
      for (const auto& c : e.children)
        if (eval(c, row, ctx)) return true;
      return false;
    case Expr::Kind::negate:
      return !eval(e.children[0], row, ctx);
    case Expr::Kind::constant: {
      auto it = ctx.constants.find(row.template_id);
      return it != ctx.constants.end() && it->second.find(e.value) != std::string::npos;
    }
    default:
      break;
  }
  bool attr = uses_attr(e, ctx.form);
  const auto& values = attr ? row.attrs : row.fields;
  bool temporal = attr ? ctx.temporal_attrs.count(e.name) != 0 : ctx.temporal_fields.count(e.name) != 0;
  bool present = false, any_equal = false;
  for (const auto& [key, v] : values) {
    if (key != e.name) continue;
    present = true;
    switch (e.kind) {
      case Expr::Kind::exists:
        return true;
      case Expr::Kind::eq:
      case Expr::Kind::ne:
        any_equal = any_equal || v == e.value;
        break;
      case Expr::Kind::contains:
        if (v.find(e.value) != std::string::npos) return true;
        break;
      case Expr::Kind::range: {
        if (temporal) {
          std::string n = normalize_timestamp(v);
          if (normalize_timestamp(e.value) <= n && n < normalize_timestamp(e.upper)) return true;
        } else if (e.value <= v && v < e.upper) {
          return true;
        }
        break;
      }
      default: {
        auto num = as_number(v);
        if (!num) break;
        double x = *num;
        bool ok = e.kind == Expr::Kind::lt ? x < e.number
                  : e.kind == Expr::Kind::le ? x <= e.number
                  : e.kind == Expr::Kind::gt ? x > e.number
                                             : x >= e.number;
        if (ok) return true;
      }
    }
  }
  if (e.kind == Expr::Kind::eq) return any_equal;
  if (e.kind == Expr::Kind::ne) return present && !any_equal;
  return false;
}

void check_names(const Expr& e, Form form, const Bundle& bundle, const std::set<std::string>& attrs) {
  for (const auto& c : e.children) check_names(c, form, bundle, attrs);
  if (e.name.empty()) return;
  if (uses_attr(e, form)) {
    if (!attrs.count(e.name)) throw QueryError("unknown taxonomy attribute '" + e.name + "'");
  } else if (!bundle.schema.contains(e.name)) {
    throw QueryError("unknown field '" + e.name + "'");
  }
}

const char* const kMonths[] = {"Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};

}  // namespace

QuerySpec parse_query(std::string_view text) { return Reader(text).document(); }

std::string to_text(const QuerySpec& spec) {
  std::string out = spec.form == Form::custom ? "(query custom " : "(query standardized ";
  write(spec.root, out);
  return out + ")";
}

Row row_of(const StructuredRecord& record, const Bundle& bundle) {
  Row r;
  r.line_number = record.line_number;
  r.template_id = record.template_id;
  for (const auto& c : record.captures) r.fields.emplace_back(c.key, c.value);
  r.attrs = taxonomy_view(record, bundle);
  return r;
}

std::vector<Row> ingest_rows(const Bundle& bundle, const std::vector<std::string>& lines) {
  CompiledTree tree(bundle.tree);
  std::vector<Row> rows;
  for (const auto& m : ingest_parallel(tree, lines))
    if (m.matched()) rows.push_back(row_of(*m.record, bundle));
  return rows;
}

std::vector<Row> rows_from_jsonl(std::string_view text) {
  std::vector<Row> rows;
  std::size_t n = 0;
  for (const auto& line : split_lines(text)) {
    ++n;
    if (line.empty()) continue;
    std::string at = "record " + std::to_string(n);
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), at);
    }
    if (!j.is_object() || !j.contains("line_number") || !j["line_number"].is_number_integer())
      throw ParseError("missing integer line_number", at);
    if (!j.contains("template_id") || j["template_id"].is_null()) continue;
    if (!j["template_id"].is_number_integer()) throw ParseError("template_id must be an integer", at);
    Row r;
    r.line_number = j["line_number"].get<std::size_t>();
    r.template_id = j["template_id"].get<NodeId>();
    auto pairs = [&](const char* key, std::vector<std::pair<std::string, std::string>>& out) {
      if (!j.contains(key)) return;
      if (!j[key].is_object()) throw ParseError(std::string(key) + " must be an object", at);
      for (const auto& [k, v] : j[key].items()) {
        std::string name = k.substr(0, k.find('#'));
        if (v.is_string()) {
          out.emplace_back(name, v.get<std::string>());
        } else if (v.is_array()) {
          for (const auto& x : v) {
            if (!x.is_string()) throw ParseError(std::string(key) + "/" + k + " values must be strings", at);
            out.emplace_back(name, x.get<std::string>());
          }
        } else {
          throw ParseError(std::string(key) + "/" + k + " must be a string", at);
        }
      }
    };
    pairs("captures", r.fields);
    pairs("taxonomy", r.attrs);
    rows.push_back(std::move(r));
  }
  return rows;
}

void check_query(const QuerySpec& spec, const Bundle& bundle, const std::set<std::string>* taxonomy) {
  std::set<std::string> mapped;
  if (!taxonomy) {
    for (const auto& [_, attrs] : bundle.mappings) mapped.insert(attrs.begin(), attrs.end());
    taxonomy = &mapped;
  }
  check_names(spec.root, spec.form, bundle, *taxonomy);
}

std::vector<std::size_t> run_query_serial(const std::vector<Row>& rows, const QuerySpec& spec, const Bundle& bundle,
                                          const std::set<std::string>* taxonomy) {
  check_query(spec, bundle, taxonomy);
  Context ctx = make_context(bundle, spec.form);
  std::vector<std::size_t> out;
  for (const auto& r : rows)
    if (eval(spec.root, r, ctx)) out.push_back(r.line_number);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::size_t> run_query(const std::vector<Row>& rows, const QuerySpec& spec, const Bundle& bundle,
                                   const std::set<std::string>* taxonomy) {
  check_query(spec, bundle, taxonomy);
  Context ctx = make_context(bundle, spec.form);
  std::vector<char> hit(rows.size(), 0);
  const long n = static_cast<long>(rows.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) hit[i] = eval(spec.root, rows[i], ctx) ? 1 : 0;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (hit[i]) out.push_back(rows[i].line_number);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::string normalize_timestamp(std::string_view value) {
  std::size_t b = 0, e = value.size();
  while (b < e && std::isspace(static_cast<unsigned char>(value[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(value[e - 1]))) --e;
  std::string_view v = value.substr(b, e - b);
  if (v.size() < 5) return std::string(v);
  for (int m = 0; m < 12; ++m) {
    if (v.substr(0, 3) != kMonths[m]) continue;
    std::size_t p = 3;
    if (p >= v.size() || v[p] != ' ') break;
    while (p < v.size() && v[p] == ' ') ++p;
    std::size_t d = p;
    while (p < v.size() && std::isdigit(static_cast<unsigned char>(v[p]))) ++p;
    if (p == d || p - d > 2) break;
    std::string day(v.substr(d, p - d));
    if (day.size() == 1) day = "0" + day;
    std::string month = std::to_string(m + 1);
    if (month.size() == 1) month = "0" + month;
    return month + "-" + day + std::string(v.substr(p));
  }
  return std::string(v);
}

SubstringPipeline parse_pipeline(std::string_view text) {
  SubstringPipeline out;
  Lexer lex(text);
  Atom a = lex.next();
  while (true) {
    if (a.type != Atom::Type::word || a.text != "fgrep") throw Lexer::error(a, "expected 'fgrep'");
    SubstringStage s;
    a = lex.next();
    if (a.type == Atom::Type::word && a.text == "-v") {
      s.include = false;
      a = lex.next();
    }
    if (a.type != Atom::Type::string && a.type != Atom::Type::word) throw Lexer::error(a, "expected a substring");
    if (a.type == Atom::Type::word && a.text == "|") throw Lexer::error(a, "expected a substring");
    s.text = a.text;
    out.push_back(std::move(s));
    a = lex.next();
    if (a.type == Atom::Type::end) break;
    if (a.type != Atom::Type::word || a.text != "|") throw Lexer::error(a, "expected '|'");
    a = lex.next();
  }
  return out;
}

std::vector<std::size_t> run_substring(const std::vector<std::string>& lines, const SubstringPipeline& pipeline) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    bool keep = true;
    for (const auto& s : pipeline) {
      bool has = lines[i].find(s.text) != std::string::npos;
      if (has != s.include) {
        keep = false;
        break;
      }
    }
    if (keep) out.push_back(i + 1);
  }
  return out;
}

Score score(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& golden) {
  std::set<std::size_t> p(predicted.begin(), predicted.end()), g(golden.begin(), golden.end());
  std::size_t both = 0;
  for (auto x : p) both += g.count(x);
  Score s;
  if (p.empty()) {
    s.precision = g.empty() ? 1.0 : 0.0;
    s.flagged = !g.empty();
  } else {
    s.precision = static_cast<double>(both) / static_cast<double>(p.size());
  }
  s.recall = g.empty() ? 1.0 : static_cast<double>(both) / static_cast<double>(g.size());
  return s;
}

std::vector<SuiteQuery> parse_suite(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("queries") || !doc["queries"].is_array())
    throw ParseError("expected an object with a 'queries' array", "/queries");
  std::vector<SuiteQuery> out;
  std::set<std::string> names;
  for (std::size_t i = 0; i < doc["queries"].size(); ++i) {
    const auto& q = doc["queries"][i];
    std::string at = "/queries/" + std::to_string(i);
    if (!q.is_object()) throw ParseError("query must be an object", at);
    SuiteQuery s;
    if (!q.contains("name") || !q["name"].is_string()) throw ParseError("missing name", at + "/name");
    s.name = q["name"].get<std::string>();
    if (!names.insert(s.name).second) throw ParseError("duplicate query name '" + s.name + "'", at + "/name");
    auto text = [&](const char* key) -> std::optional<std::string> {
      if (!q.contains(key)) return std::nullopt;
      if (!q[key].is_string()) throw ParseError("must be a string", at + "/" + key);
      return q[key].get<std::string>();
    };
    try {
      if (auto t = text("custom")) {
        s.custom = parse_query(*t);
        if (s.custom->form != Form::custom) throw ParseError("declares the standardized form");
      }
      if (auto t = text("standardized")) {
        QuerySpec spec = parse_query(*t);
        spec.form = Form::standardized;
        s.standardized = spec;
      }
      if (auto t = text("substring")) s.substring = parse_pipeline(*t);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), at);
    }
    if (!q.contains("golden") || !q["golden"].is_array()) throw ParseError("missing golden array", at + "/golden");
    for (const auto& g : q["golden"]) {
      if (!g.is_number_integer() || g.get<std::int64_t>() < 1) throw ParseError("golden entries are line numbers", at + "/golden");
      s.golden.push_back(g.get<std::size_t>());
    }
    out.push_back(std::move(s));
  }
  return out;
}

nlohmann::ordered_json SuiteReport::to_json() const {
  nlohmann::ordered_json j;
  nlohmann::ordered_json qs = nlohmann::ordered_json::array();
  auto form = [](const FormResult& f) -> nlohmann::ordered_json {
    if (!f.present) return nullptr;
    return {{"precision", f.score.precision}, {"recall", f.score.recall}, {"f1", f.score.f1()},
            {"flagged", f.score.flagged}, {"matches", f.matches.size()}};
  };
  for (const auto& r : rows)
    qs.push_back({{"name", r.name}, {"custom", form(r.custom)}, {"standardized", form(r.standardized)},
                  {"substring", form(r.substring)}});
  j["queries"] = qs;
  j["mean_f1"] = {{"custom", custom_f1}, {"standardized", standardized_f1}, {"substring", substring_f1}};
  j["custom_ge_standardized"] = custom_ge_standardized;
  j["custom_ge_substring"] = custom_ge_substring;
  return j;
}

SuiteReport run_suite(const std::vector<SuiteQuery>& suite, const std::vector<std::string>& lines,
                      const Bundle& bundle, const std::set<std::string>* taxonomy) {
  SuiteReport rep;
  std::vector<Row> rows = ingest_rows(bundle, lines);
  auto fill = [&](FormResult& f, std::vector<std::size_t> matches, const std::vector<std::size_t>& golden) {
    f.present = true;
    f.score = score(matches, golden);
    f.matches = std::move(matches);
  };
  for (const auto& q : suite) {
    SuiteRow r;
    r.name = q.name;
    if (q.custom) fill(r.custom, run_query(rows, *q.custom, bundle, taxonomy), q.golden);
    if (q.standardized) {
      // An attribute the bundle never mapped finds nothing rather than failing.
      std::vector<std::size_t> m;
      try {
        m = run_query(rows, *q.standardized, bundle, taxonomy);
      } catch (const QueryError&) {
        if (taxonomy) throw;
      }
      fill(r.standardized, std::move(m), q.golden);
    }
    if (q.substring) fill(r.substring, run_substring(lines, *q.substring), q.golden);
    rep.rows.push_back(std::move(r));
  }
  auto mean = [&](FormResult SuiteRow::*form, FormResult SuiteRow::*other) {
    double a = 0, b = 0;
    std::size_t n = 0;
    for (const auto& r : rep.rows)
      if ((r.*form).present && (!other || (r.*other).present)) {
        a += (r.*form).score.f1();
        if (other) b += (r.*other).score.f1();
        ++n;
      }
    return n == 0 ? std::make_pair(0.0, 0.0) : std::make_pair(a / n, b / n);
  };
  rep.custom_f1 = mean(&SuiteRow::custom, nullptr).first;
  rep.standardized_f1 = mean(&SuiteRow::standardized, nullptr).first;
  rep.substring_f1 = mean(&SuiteRow::substring, nullptr).first;
  auto [cs, s] = mean(&SuiteRow::custom, &SuiteRow::standardized);
  auto [cg, g] = mean(&SuiteRow::custom, &SuiteRow::substring);
  rep.custom_ge_standardized = cs >= s;
  rep.custom_ge_substring = cg >= g;
  return rep;
}

}  // namespace logtree::query
