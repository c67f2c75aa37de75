#include "doctest.h"
#include "ssh_tree.hpp"
#include "logtree/error.hpp"
#include "logtree/tree.hpp"

using namespace logtree;

TEST_CASE("tree: main branch has eighteen nodes") {
  ParseTree tree;
  NodeId leaf = tree.insert_template(ssh_tree::accepted());
  CHECK(tree.leaf_count() == 1);
  CHECK(tree.node_count() == 18);
  CHECK(tree.check_tree().empty());
  CHECK(tree.template_of(leaf).path.size() == 18);
}

TEST_CASE("tree: insert is idempotent") {
  ParseTree tree;
  NodeId a = tree.insert_template(ssh_tree::accepted());
  ParseTree before = tree;
  NodeId b = tree.insert_template(ssh_tree::accepted());
  CHECK(a == b);
  CHECK(tree == before);
}

TEST_CASE("tree: failed branch shares the six-node prefix") {
  ParseTree tree;
  NodeId a = tree.insert_template(ssh_tree::accepted());
  NodeId f = tree.insert_template(ssh_tree::failed());
  CHECK(tree.leaf_count() == 2);
  CHECK(tree.node_count() == 18 + 5);
  std::vector<NodeId> pa = tree.template_of(a).path, pf = tree.template_of(f).path;
  std::size_t shared = 0;
  while (shared < pa.size() && shared < pf.size() && pa[shared] == pf[shared]) ++shared;
  CHECK(shared == 6);
  CHECK(tree.node(pa[5]).token.text == "]:");
  CHECK(tree.node(pa[5]).children.size() == 2);
  CHECK(tree.check_tree().empty());
}

TEST_CASE("tree: bad pattern names the token index") {
  ParseTree tree;
  std::vector<Token> toks = {Token::constant("a", " "), Token::variable("(?=x)")};
  try {
    tree.insert_template(toks);
    FAIL("expected CompileError");
  } catch (const CompileError& e) {
    CHECK(e.token_index() == 1);
  }
  CHECK(tree.empty());
}

TEST_CASE("tree: prefix template flags an interior node") {
  ParseTree tree;
  std::vector<Token> longer = {Token::constant("a", " "), Token::variable("\\d+")};
  std::vector<Token> shorter = {Token::constant("a", " ")};
  tree.insert_template(longer);
  NodeId s = tree.insert_template(shorter);
  CHECK(tree.leaf_count() == 2);
  CHECK(tree.node(s).children.size() == 1);
  CHECK(tree.check_tree().empty());
}

TEST_CASE("tree: check_tree catches structural damage") {
  ParseTree tree;
  tree.insert_template(ssh_tree::accepted());
  NodeId failed_leaf = tree.insert_template(ssh_tree::failed());

  SUBCASE("second parent") {
    ParseTree t = tree;
    NodeId root = t.roots().front();
    t.node(root).children.push_back(failed_leaf);
    CHECK_FALSE(t.check_tree().empty());
  }
  SUBCASE("orphan") {
    ParseTree t = tree;
    std::vector<NodeId> path = t.template_of(failed_leaf).path;
    t.node(path[6]).children.clear();
    CHECK_FALSE(t.check_tree().empty());
  }
  SUBCASE("dead end") {
    ParseTree t = tree;
    t.set_leaf(failed_leaf, false);
    CHECK(t.check_tree().find("no template") != std::string::npos);
  }
  SUBCASE("empty constant") {
    ParseTree t = tree;
    t.node(failed_leaf).token = Token::constant("");
    CHECK_FALSE(t.check_tree().empty());
  }
}

TEST_CASE("wildcard form") {
  ParseTree tree;
  NodeId leaf = tree.insert_template(ssh_tree::accepted());
  CHECK(wildcard_form(tree, tree.template_of(leaf)) ==
        "<*> <*> sshd[<*>]: Accepted conn user:<*> <*> src={ip=<*> port=<*>}");
  CHECK(wildcard_form({Token::constant("foo", " "), Token::constant("bar")}) == "foo bar");
  CHECK(wildcard_form({Token::variable("\\S+")}) == "<*>");
}

TEST_CASE("wildcard form equality implies equal constants in place") {
  // Exhaustive over short sequences. Constant bytes are compared as the runs
  // of literal+separator text between variables, which is what the wildcard
  // string can see; a literal spelled "<*>" is the one way to break it.
  std::vector<Token> vocab = {Token::constant("a", " "), Token::constant("a "), Token::constant("<*>"),
                              Token::variable("\\S+", " "), Token::variable("\\d+"), Token::constant("b")};
  auto runs = [](const std::vector<Token>& seq) {
    std::vector<std::string> out{""};
    for (const Token& t : seq) {
      if (t.is_variable()) {
        out.push_back(t.separator);
      } else {
        out.back() += t.text + t.separator;
      }
    }
    return out;
  };
  auto has_star = [](const std::vector<Token>& seq) {
    for (const Token& t : seq)
      if (!t.is_variable() && t.text == "<*>") return true;
    return false;
  };
  std::vector<std::vector<Token>> seqs;
  for (const Token& x : vocab) {
    seqs.push_back({x});
    for (const Token& y : vocab) {
      seqs.push_back({x, y});
      for (const Token& z : vocab) seqs.push_back({x, y, z});
    }
  }
  int equal_pairs = 0, star_collisions = 0;
  for (const auto& s : seqs) {
    for (const auto& t : seqs) {
      if (wildcard_form(s) != wildcard_form(t)) continue;
      ++equal_pairs;
      if (has_star(s) || has_star(t)) {
        if (runs(s) != runs(t)) ++star_collisions;
        continue;
      }
      CHECK(runs(s) == runs(t));
    }
  }
  CHECK(equal_pairs > static_cast<int>(seqs.size()));
  CHECK(star_collisions > 0);
}
