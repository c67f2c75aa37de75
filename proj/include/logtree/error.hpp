// Copyright 2026 The logtree Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace logtree {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A variable pattern failed to compile under the portable dialect.
class CompileError : public Error {
public:
  CompileError(std::string message, std::size_t token_index = npos, std::size_t offset = npos)
      : Error(std::move(message)), token_index_(token_index), offset_(offset) {}

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t token_index() const noexcept { return token_index_; }
  std::size_t offset() const noexcept { return offset_; }

private:
  std::size_t token_index_;
  std::size_t offset_;
};

/// Malformed document (bundle, taxonomy, transcript, query, config).
class ParseError : public Error {
public:
  ParseError(const std::string& message, std::string location = {})
      : Error(location.empty() ? message : location + ": " + message), location_(std::move(location)) {}

  const std::string& location() const noexcept { return location_; }

private:
  std::string location_;
};

/// A structural invariant of the tree, schema or mappings is violated.
class IntegrityError : public Error {
public:
  using Error::Error;
};

class ProviderError : public Error {
public:
  using Error::Error;
};

class CacheError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

class InputError : public Error {
public:
  using Error::Error;
};

class QueryError : public Error {
public:
  using Error::Error;
};

class EmptyInput : public Error {
public:
  using Error::Error;
};

/// No self-consistency sample matched any line of the cluster.
class ZeroCoverage : public Error {
public:
  using Error::Error;
};

/// A model reply could not be decoded or failed a structural check; the
/// message is fed back to the model by the repair loop.
class InvalidReply : public Error {
public:
  using Error::Error;
};

/// A field name is already registered with a different description.
class NameCollision : public Error {
public:
  NameCollision(std::string name, std::string existing, std::string proposed)
      : Error("field '" + name + "' already registered with a different description"),
        name_(std::move(name)), existing_(std::move(existing)), proposed_(std::move(proposed)) {}

  const std::string& name() const noexcept { return name_; }
  const std::string& existing_description() const noexcept { return existing_; }
  const std::string& proposed_description() const noexcept { return proposed_; }

private:
  std::string name_;
  std::string existing_;
  std::string proposed_;
};

/// The repair loop ran out of iterations; carries the last diagnostic.
class RepairExhausted : public Error {
public:
  RepairExhausted(std::string last_diagnostic, int iterations)
      : Error("repair loop exhausted after " + std::to_string(iterations) +
              " iteration(s): " + last_diagnostic),
        diagnostic_(std::move(last_diagnostic)), iterations_(iterations) {}

  const std::string& diagnostic() const noexcept { return diagnostic_; }
  int iterations() const noexcept { return iterations_; }

private:
  std::string diagnostic_;
  int iterations_;
};

/// An edit command referenced a node, field, template or label that does not exist.
class UnknownId : public Error {
public:
  UnknownId(std::size_t command_index, const std::string& what)
      : Error("command " + std::to_string(command_index) + ": unknown id " + what),
        command_index_(command_index) {}

  std::size_t command_index() const noexcept { return command_index_; }

private:
  std::size_t command_index_;
};

/// An edit script broke a guard; the bundle was rolled back.
class GuardViolation : public Error {
public:
  GuardViolation(std::size_t command_index, std::string guard, const std::string& detail)
      : Error("command " + std::to_string(command_index) + " violates guard '" + guard + "': " + detail),
        command_index_(command_index), guard_(std::move(guard)) {}

  std::size_t command_index() const noexcept { return command_index_; }
  const std::string& guard() const noexcept { return guard_; }

private:
  std::size_t command_index_;
  std::string guard_;
};

}  // namespace logtree
