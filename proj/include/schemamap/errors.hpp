#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace schemamap {

// Every failure the library raises carries a stable, machine-readable code
// (e.g. "MalformedVocabulary") next to the human message. The CLI prints the
// code verbatim, so codes are part of the public surface.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

namespace errc {
inline constexpr const char* kMalformedVocabulary = "MalformedVocabulary";
inline constexpr const char* kDimensionMismatch = "DimensionMismatch";
inline constexpr const char* kRemoteUnavailable = "RemoteUnavailable";
inline constexpr const char* kInvalidArgument = "InvalidArgument";
inline constexpr const char* kCorruptIndexFile = "CorruptIndexFile";
inline constexpr const char* kIoError = "IoError";
inline constexpr const char* kUnreadableDatabase = "UnreadableDatabase";
inline constexpr const char* kUnknownTable = "UnknownTable";
inline constexpr const char* kUnknownDbId = "UnknownDbId";
inline constexpr const char* kMalformedManifest = "MalformedManifest";
inline constexpr const char* kMalformedAnnotations = "MalformedAnnotations";
inline constexpr const char* kAgentOutputInvalid = "AgentOutputInvalid";
inline constexpr const char* kBackendUnavailable = "BackendUnavailable";
inline constexpr const char* kTranscriptMiss = "TranscriptMiss";
inline constexpr const char* kEmptyInput = "EmptyInput";
inline constexpr const char* kAborted = "Aborted";
inline constexpr const char* kInconsistentInputs = "InconsistentInputs";
inline constexpr const char* kMalformedMapping = "MalformedMapping";
inline constexpr const char* kMismatchedDatabase = "MismatchedDatabase";
inline constexpr const char* kGoldNotFound = "GoldNotFound";
inline constexpr const char* kMalformedGold = "MalformedGold";
inline constexpr const char* kConfigInvalid = "ConfigInvalid";
inline constexpr const char* kMalformedNTriples = "MalformedNTriples";
}  // namespace errc

}  // namespace schemamap
