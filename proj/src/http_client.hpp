#pragma once
// Small JSON-over-HTTP(S) POST helper shared by the remote embedder and the
// live chat backend.

#include <chrono>
#include <string>

#include <nlohmann/json.hpp>

namespace schemamap::detail {

struct HttpTarget {
  std::string origin;  // scheme://host[:port]
  std::string path;    // starts with '/'
};

// Splits "https://api.example.com/v1/chat/completions". Throws
// Error{InvalidArgument} on anything without a scheme and host.
HttpTarget parse_endpoint(const std::string& url);

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
};

// POSTs `body`, retrying transport failures and 429/5xx responses with
// exponential backoff. A bearer token is taken from the environment variable
// `auth_env` when it is non-empty and set. Throws Error{failure_code} once
// the attempts are used up.
nlohmann::json post_json(const std::string& endpoint, const nlohmann::json& body,
                         const std::string& auth_env, const RetryPolicy& retry,
                         const char* failure_code);

}  // namespace schemamap::detail
