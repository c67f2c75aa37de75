// Shared fixtures: a small SSH parse tree with accepted and failed logins.
#pragma once

#include <string>
#include <vector>

#include "logtree/bundle.hpp"
#include "logtree/tree.hpp"

namespace ssh_tree {

using logtree::Token;

inline const std::string kDate = R"(\S+\s+\d+\s+\d+:\d+:\d+)";
inline const std::string kLine =
    "Mar  9 23:46:29 puma25 sshd[17376]: Accepted conn user:root pw src={ip=10.35.161.71 port=59271}";

inline std::vector<Token> prefix() {
  return {
      Token::variable(kDate, " "),
      Token::variable(R"(\S+)", " "),
      Token::constant("sshd"),
      Token::constant("["),
      Token::variable(R"(\d+)"),
      Token::constant("]:", " "),
  };
}

inline std::vector<Token> accepted() {
  std::vector<Token> t = prefix();
  std::vector<Token> rest = {
      Token::constant("Accepted", " "),
      Token::constant("conn", " "),
      Token::constant("user:"),
      Token::variable(R"(\S+)", " "),
      Token::variable(R"(\S+)", " "),
      Token::constant("src="),
      Token::constant("{"),
      Token::constant("ip="),
      Token::variable(R"(\d+\.\d+\.\d+\.\d+)", " "),
      Token::constant("port="),
      Token::variable(R"(\d+)"),
      Token::constant("}"),
  };
  t.insert(t.end(), rest.begin(), rest.end());
  return t;
}

inline std::vector<Token> failed() {
  std::vector<Token> t = prefix();
  std::vector<Token> rest = {
      Token::constant("Failed", " "),
      Token::constant("none", " "),
      Token::constant("for", " "),
      Token::constant("user", " "),
      Token::variable(R"(\S+)"),
  };
  t.insert(t.end(), rest.begin(), rest.end());
  return t;
}

// Field names per path position of accepted(); empty means anonymous.
inline const std::vector<std::string> kAcceptedFields = {
    "date", "host", "process_name", "", "pid", "", "", "", "", "user", "auth", "", "", "", "ip", "", "port", ""};

inline std::vector<Token> with_method(const std::string& method) {
  std::vector<Token> t = accepted();
  t[10] = Token::constant(method, " ");
  return t;
}

inline std::string line_for(const std::string& method, int port) {
  return "Mar  9 23:46:29 puma25 sshd[17376]: Accepted conn user:root " + method + " src={ip=10.35.161.71 port=" +
         std::to_string(port) + "}";
}

// Three constant branches for the auth method, as a first induction pass
// might leave them.
inline logtree::Bundle auth_bundle() {
  logtree::Bundle b;
  for (const char* m : {"pw", "pka", "mfa"}) b.tree.insert_template(with_method(m));
  b.schema.add(logtree::SchemaField{"user", "Account name.", {}, false});
  b.schema.add(logtree::SchemaField{"src_port", "Client port.", {}, false});
  b.tree.node(10).field = "user";
  b.tree.node(17).field = "src_port";
  return b;
}

inline std::vector<std::string> auth_corpus() {
  return {line_for("pw", 1), line_for("pka", 2), line_for("mfa", 3), line_for("otp", 4),
          "Mar  9 23:46:30 puma25 sshd[17377]: Failed none for user admin"};
}

inline std::vector<logtree::NodeId> auth_constants(const logtree::Bundle& b) {
  std::vector<logtree::NodeId> out;
  for (const auto& [id, n] : b.tree.nodes())
    if (!n.token.is_variable() && (n.token.text == "pw" || n.token.text == "pka" || n.token.text == "mfa")) out.push_back(id);
  return out;
}

}  // namespace ssh_tree
