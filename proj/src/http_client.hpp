#pragma once

// Internal: JSON-over-HTTP POST with retry, shared by the remote providers.

#include <string>

#include <json.hpp>

namespace eqr::detail {

struct RetryPolicy {
  int max_retries = 3;
  int base_ms = 200;
  int cap_ms = 5000;
  int timeout_s = 60;
};

struct Endpoint {
  std::string scheme_host_port;  // "http://host:port"
  std::string path;              // "/v1/embeddings"
};

/// Splits "http[s]://host[:port]/path". Throws ConfigError.
Endpoint parse_endpoint(const std::string& url);

/// Backoff before retry number `attempt` (0-based): min(cap, base * 2^attempt).
int backoff_ms(const RetryPolicy& policy, int attempt);

/// POSTs `body` and returns the parsed JSON reply. Transport errors, 429 and
/// 5xx are retried; other statuses and unparseable bodies fail immediately.
/// Throws ProviderError ("transport", "http_status", "bad_response").
nlohmann::json post_json(const std::string& url, const nlohmann::json& body,
                         const std::string& api_key_env, const RetryPolicy& policy);

}  // namespace eqr::detail
