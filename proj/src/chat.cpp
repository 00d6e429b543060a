#include "schemamap/chat.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "http_client.hpp"
#include "schemamap/errors.hpp"

namespace schemamap::chat {

namespace {

constexpr const char* kTranscriptFormat = "schemamap-transcript/1";

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error(errc::kInvalidArgument, "SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

}  // namespace

std::string request_digest(const ChatRequest& request) {
  nlohmann::json doc;
  doc["messages"] = nlohmann::json::array();
  for (const auto& m : request.messages) {
    doc["messages"].push_back({{"role", m.role}, {"content", m.content}});
  }
  doc["response_format"] = request.response_format;
  // nlohmann objects keep keys sorted, so a compact dump is canonical.
  return sha256_hex(doc.dump());
}

std::vector<TranscriptRecord> load_transcript(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(errc::kIoError, "cannot read transcript: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(buffer.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(errc::kInvalidArgument, "transcript is not JSON: " + path + ": " + e.what());
  }
  if (!doc.is_object() || doc.value("format", "") != kTranscriptFormat || !doc.contains("records") ||
      !doc["records"].is_array()) {
    throw Error(errc::kInvalidArgument, "not a " + std::string(kTranscriptFormat) + " document: " + path);
  }
  std::vector<TranscriptRecord> records;
  for (const auto& r : doc["records"]) {
    if (!r.is_object() || !r.contains("digest") || !r["digest"].is_string() || !r.contains("response") ||
        !r["response"].is_string()) {
      throw Error(errc::kInvalidArgument, "transcript record needs string digest and response: " + path);
    }
    records.push_back({r["digest"].get<std::string>(), r.value("label", ""), r["response"].get<std::string>()});
  }
  return records;
}

void save_transcript(const std::vector<TranscriptRecord>& records, const std::string& path) {
  nlohmann::json doc;
  doc["format"] = kTranscriptFormat;
  doc["records"] = nlohmann::json::array();
  for (const auto& r : records) {
    doc["records"].push_back({{"digest", r.digest}, {"label", r.label}, {"response", r.response}});
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(errc::kIoError, "cannot write transcript: " + path);
  out << doc.dump(2) << '\n';
  if (!out) throw Error(errc::kIoError, "short write: " + path);
}

ReplayBackend::ReplayBackend(std::vector<TranscriptRecord> records) {
  std::string all;
  for (auto& r : records) {
    all += r.digest;
    all += '\n';
    queues_[r.digest].push_back(std::move(r.response));
  }
  fingerprint_ = "replay/" + sha256_hex(all).substr(0, 16);
}

std::unique_ptr<ReplayBackend> ReplayBackend::from_file(const std::string& path) {
  return std::make_unique<ReplayBackend>(load_transcript(path));
}

std::string ReplayBackend::send(const ChatRequest& request) {
  const auto digest = request_digest(request);
  std::lock_guard lock(mutex_);
  auto it = queues_.find(digest);
  if (it == queues_.end() || it->second.empty()) {
    throw Error(errc::kTranscriptMiss,
                "no recorded response for " + (request.label.empty() ? digest : request.label + " (" + digest + ")"));
  }
  auto response = std::move(it->second.front());
  it->second.pop_front();
  return response;
}

std::size_t ReplayBackend::remaining() const {
  std::lock_guard lock(mutex_);
  std::size_t n = 0;
  for (const auto& [_, q] : queues_) n += q.size();
  return n;
}

ScriptedBackend::ScriptedBackend(std::vector<std::string> responses) : responses_(std::move(responses)) {}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(errc::kIoError, "cannot read script: " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(errc::kInvalidArgument, "script is not JSON: " + path + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("responses") || !doc["responses"].is_array()) {
    throw Error(errc::kInvalidArgument, "script needs a \"responses\" array: " + path);
  }
  std::vector<std::string> responses;
  for (const auto& r : doc["responses"]) responses.push_back(r.is_string() ? r.get<std::string>() : r.dump());
  return std::make_unique<ScriptedBackend>(std::move(responses));
}

std::string ScriptedBackend::send(const ChatRequest& request) {
  std::lock_guard lock(mutex_);
  requests_.push_back(request);
  if (next_ >= responses_.size()) {
    throw Error(errc::kBackendUnavailable, "script exhausted at call " + std::to_string(next_ + 1) +
                                               (request.label.empty() ? "" : " (" + request.label + ")"));
  }
  return responses_[next_++];
}

std::size_t ScriptedBackend::calls() const {
  std::lock_guard lock(mutex_);
  return requests_.size();
}

std::string RecordingBackend::send(const ChatRequest& request) {
  auto response = inner_.send(request);
  std::lock_guard lock(mutex_);
  records_.push_back({request_digest(request), request.label, response});
  return response;
}

std::vector<TranscriptRecord> RecordingBackend::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

void RecordingBackend::save(const std::string& path) const { save_transcript(records(), path); }

LiveBackend::LiveBackend(LiveConfig config) : config_(std::move(config)) {
  detail::parse_endpoint(config_.endpoint);
  if (config_.model.empty()) throw Error(errc::kInvalidArgument, "live backend needs a model name");
  if (config_.max_attempts < 1) throw Error(errc::kInvalidArgument, "max_attempts must be >= 1");
}

std::string LiveBackend::send(const ChatRequest& request) {
  nlohmann::json body;
  body["model"] = config_.model;
  body["temperature"] = config_.temperature;
  body["messages"] = nlohmann::json::array();
  for (const auto& m : request.messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  if (!request.response_format.is_null()) body["response_format"] = request.response_format;

  auto reply = detail::post_json(config_.endpoint, body, config_.auth_env,
                                 {config_.max_attempts, config_.initial_backoff}, errc::kBackendUnavailable);
  try {
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(errc::kBackendUnavailable, std::string("unexpected chat-completions reply: ") + e.what());
  }
}

}  // namespace schemamap::chat
