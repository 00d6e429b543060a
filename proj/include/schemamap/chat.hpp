#pragma once
// Chat backends the agents talk through.
//
// A transcript file records every exchange as (request digest, response):
//
//   {"format": "schemamap-transcript/1",
//    "records": [{"digest": "<sha256 hex>", "label": "...", "response": "..."}, ...]}
//
// The digest covers the full request (messages and response format), so a
// replayed run only succeeds when the pipeline asks exactly what it asked
// while recording.

#include <chrono>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace schemamap::chat {

struct ChatMessage {
  std::string role;  // "system", "user", "assistant"
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::string label;  // e.g. "mapping:customers"; not part of the digest
  std::vector<ChatMessage> messages;
  nlohmann::json response_format;
};

// Lowercase hex SHA-256 over the canonical JSON of messages + response format.
std::string request_digest(const ChatRequest& request);

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  // Must be safe to call from several threads at once.
  virtual std::string send(const ChatRequest& request) = 0;
  virtual std::string fingerprint() const = 0;
};

struct TranscriptRecord {
  std::string digest;
  std::string label;
  std::string response;
};

std::vector<TranscriptRecord> load_transcript(const std::string& path);
void save_transcript(const std::vector<TranscriptRecord>& records, const std::string& path);

// Answers from a transcript. Responses sharing a digest are served in
// recorded order. An unknown digest throws Error{TranscriptMiss}.
class ReplayBackend final : public ChatBackend {
 public:
  explicit ReplayBackend(std::vector<TranscriptRecord> records);
  static std::unique_ptr<ReplayBackend> from_file(const std::string& path);

  std::string send(const ChatRequest& request) override;
  std::string fingerprint() const override { return fingerprint_; }
  std::size_t remaining() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::deque<std::string>> queues_;
  std::string fingerprint_;
};

// Serves a fixed list of responses in order, whatever is asked. Used to
// author transcripts and to script agent failure modes in tests.
class ScriptedBackend final : public ChatBackend {
 public:
  explicit ScriptedBackend(std::vector<std::string> responses);
  // {"responses": [<string or JSON value>, ...]}; non-string values are
  // serialized compactly.
  static std::unique_ptr<ScriptedBackend> from_file(const std::string& path);

  std::string send(const ChatRequest& request) override;
  std::string fingerprint() const override { return "scripted"; }
  std::size_t calls() const;
  const std::vector<ChatRequest>& requests() const { return requests_; }

 private:
  mutable std::mutex mutex_;
  std::vector<std::string> responses_;
  std::vector<ChatRequest> requests_;
  std::size_t next_ = 0;
};

// Forwards to another backend and keeps every exchange for save().
class RecordingBackend final : public ChatBackend {
 public:
  explicit RecordingBackend(ChatBackend& inner) : inner_(inner) {}

  std::string send(const ChatRequest& request) override;
  std::string fingerprint() const override { return inner_.fingerprint(); }
  std::vector<TranscriptRecord> records() const;
  void save(const std::string& path) const;

 private:
  ChatBackend& inner_;
  mutable std::mutex mutex_;
  std::vector<TranscriptRecord> records_;
};

struct LiveConfig {
  std::string endpoint;  // full chat-completions URL
  std::string model;
  std::string auth_env;  // name of the environment variable holding the token
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  double temperature = 0.0;
};

// Any chat-completions-compatible HTTP(S) endpoint. Transport failures
// surface as Error{BackendUnavailable}.
class LiveBackend final : public ChatBackend {
 public:
  explicit LiveBackend(LiveConfig config);

  std::string send(const ChatRequest& request) override;
  std::string fingerprint() const override { return "live/" + config_.model; }

 private:
  LiveConfig config_;
};

}  // namespace schemamap::chat
