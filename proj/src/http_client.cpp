#include "http_client.hpp"

#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "schemamap/errors.hpp"

namespace schemamap::detail {

HttpTarget parse_endpoint(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos || scheme_end == 0) {
    throw Error(errc::kInvalidArgument, "endpoint must be an absolute http(s) URL: " + url);
  }
  auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw Error(errc::kInvalidArgument, "unsupported endpoint scheme: " + scheme);
  }
  auto path_start = url.find('/', scheme_end + 3);
  HttpTarget target;
  target.origin = url.substr(0, path_start);
  target.path = path_start == std::string::npos ? "/" : url.substr(path_start);
  if (target.origin.size() <= scheme_end + 3) {
    throw Error(errc::kInvalidArgument, "endpoint has no host: " + url);
  }
  return target;
}

nlohmann::json post_json(const std::string& endpoint, const nlohmann::json& body,
                         const std::string& auth_env, const RetryPolicy& retry,
                         const char* failure_code) {
  auto target = parse_endpoint(endpoint);
  httplib::Client client(target.origin);
  client.set_connection_timeout(std::chrono::seconds(30));
  client.set_read_timeout(std::chrono::seconds(180));

  httplib::Headers headers;
  if (!auth_env.empty()) {
    if (const char* token = std::getenv(auth_env.c_str()); token != nullptr && *token != '\0') {
      headers.emplace("Authorization", std::string("Bearer ") + token);
    }
  }

  const std::string payload = body.dump();
  std::string last_error = "no attempt made";
  auto backoff = retry.initial_backoff;
  for (int attempt = 1; attempt <= std::max(1, retry.max_attempts); ++attempt) {
    if (attempt > 1) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    auto response = client.Post(target.path, headers, payload, "application/json");
    if (!response) {
      last_error = "transport error: " + httplib::to_string(response.error());
      continue;
    }
    if (response->status == 429 || response->status >= 500) {
      last_error = "HTTP " + std::to_string(response->status);
      continue;
    }
    if (response->status < 200 || response->status >= 300) {
      // Client errors will not improve on retry.
      throw Error(failure_code, "HTTP " + std::to_string(response->status) + ": " + response->body);
    }
    try {
      return nlohmann::json::parse(response->body);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(failure_code, std::string("response is not JSON: ") + e.what());
    }
  }
  throw Error(failure_code, endpoint + " unavailable after " + std::to_string(retry.max_attempts) +
                                " attempts (" + last_error + ")");
}

}  // namespace schemamap::detail
