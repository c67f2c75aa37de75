// Copyright 2026 The logtree Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "logtree/bundle.hpp"

namespace logtree::synth {

struct Options {
  std::size_t templates = 50;
  std::uint64_t seed = 1;
  // Share of templates that sit under the syslog-style date/host/program prefix.
  double prefixed_fraction = 0.6;
};

/// Random bundle of distinct templates with every variable named.
Bundle random_bundle(const Options& options);

/// One line drawn from `leaf`'s template by sampling each variable's pattern.
std::string sample_line(const ParseTree& tree, NodeId leaf, std::mt19937_64& rng);

struct Corpus {
  std::vector<std::string> lines;
  std::vector<NodeId> sources;  // generating leaf per line
};

/// Lines drawn from uniformly chosen templates.
Corpus sample_corpus(const Bundle& bundle, std::size_t lines, std::uint64_t seed);

}  // namespace logtree::synth
