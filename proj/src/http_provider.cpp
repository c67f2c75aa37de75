// Copyright 2026 The logtree Authors
// SPDX-License-Identifier: Apache-2.0

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <chrono>
#include <cstdlib>
#include <thread>

#include "logtree/llm.hpp"

namespace logtree::llm {

using nlohmann::json;

namespace {

// "https://host:port/base" -> ("https://host:port", "/base")
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  std::size_t scheme = endpoint.find("://");
  std::size_t slash = endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (slash == std::string::npos) return {endpoint, ""};
  std::string base = endpoint.substr(slash);
  while (!base.empty() && base.back() == '/') base.pop_back();
  return {endpoint.substr(0, slash), base};
}

}  // namespace

HttpProvider::HttpProvider(HttpConfig config) : config_(std::move(config)) {
  const char* key = std::getenv(config_.api_key_env.c_str());
  if (!key || !*key) throw ConfigError("environment variable " + config_.api_key_env + " is not set");
  api_key_ = key;
  if (config_.embedding_dim == 0) throw ConfigError("embedding_dim must be positive");
  if (config_.max_retries < 0) throw ConfigError("max_retries must be non-negative");
}

HttpProvider::~HttpProvider() = default;

std::string HttpProvider::identity() const {
  return "http:" + config_.endpoint + ":" + config_.chat_model + ":" + config_.embedding_model;
}

json HttpProvider::post(const std::string& path, const json& body) {
  auto [host, base] = split_endpoint(config_.endpoint);
  httplib::Client client(host);
  client.set_connection_timeout(config_.timeout_s, 0);
  client.set_read_timeout(config_.timeout_s, 0);
  client.set_write_timeout(config_.timeout_s, 0);
  httplib::Headers headers = {{"Authorization", "Bearer " + api_key_}};
  std::string payload = body.dump();
  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0)
      std::this_thread::sleep_for(std::chrono::milliseconds(config_.retry_backoff_ms * (1 << (attempt - 1))));
    httplib::Result res = client.Post(base + path, headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) throw ProviderError("HTTP " + std::to_string(res->status) + " from " + path + ": " + res->body);
    try {
      return json::parse(res->body);
    } catch (const json::parse_error& e) {
      throw ProviderError(std::string("unparseable response from ") + path + ": " + e.what());
    }
  }
  throw ProviderError(path + " failed after " + std::to_string(config_.max_retries + 1) + " attempt(s): " + last_error);
}

std::string HttpProvider::complete(const std::string& prompt, double temperature) {
  json body = {{"model", config_.chat_model},
               {"temperature", temperature},
               {"messages", json::array({{{"role", "user"}, {"content", prompt}}})}};
  json res = post("/v1/chat/completions", body);
  try {
    return res.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw ProviderError(std::string("malformed chat completion: ") + e.what());
  }
}

Embedding HttpProvider::embed(const std::string& text) {
  json body = {{"model", config_.embedding_model}, {"input", text}};
  json res = post("/v1/embeddings", body);
  Embedding v;
  try {
    v = res.at("data").at(0).at("embedding").get<Embedding>();
  } catch (const json::exception& e) {
    throw ProviderError(std::string("malformed embedding response: ") + e.what());
  }
  if (v.size() != config_.embedding_dim)
    throw ProviderError("embedding dimension " + std::to_string(v.size()) + " differs from declared " +
                        std::to_string(config_.embedding_dim));
  return v;
}

}  // namespace logtree::llm
