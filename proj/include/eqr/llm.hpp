#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "eqr/concurrency.hpp"

namespace eqr {

/// One completion request. `task` is the QR method id ("q2e", "query2doc",
/// "eqr") or "label"; `key` identifies the subject (a query id, or
/// "<query_id>::<item_id>" for labeling). `alt_key` is a secondary lookup
/// key for fixture-driven clients (the raw query text).
struct LlmRequest {
  std::string task;
  std::string key;
  std::string alt_key;
  std::string prompt;
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  /// Returns the model's raw text. Throws ProviderError on failure.
  virtual std::string complete(const LlmRequest& request) = 0;
  virtual std::string model_name() const = 0;
};

struct LlmProviderConfig {
  enum class Kind { kScriptedStub, kRemoteHttp, kReplay };

  Kind kind = Kind::kScriptedStub;
  std::string model_name = "scripted-stub";
  std::string endpoint;  // remote: chat-completions URL
  double temperature = 0.0;
  int max_output_tokens = 1024;
  std::string api_key_env = "EQR_LLM_API_KEY";
  /// scripted-stub: JSON fixture file. replay: a replay log to serve from.
  std::filesystem::path fixture;
  /// remote: every exchange is appended here when non-empty.
  std::filesystem::path replay_log;
  int max_retries = 3;
  int retry_base_ms = 500;
  int retry_cap_ms = 8000;
  int timeout_s = 120;
  std::size_t max_in_flight = 4;
};

LlmProviderConfig::Kind parse_llm_kind(const std::string& name);
std::string to_string(LlmProviderConfig::Kind kind);

/// Canned responses from a JSON fixture:
///
///   {"eqr": {"q1": "Title - body\n...", "some query text": "..."},
///    "label": {"q1::paris": "VERDICT: 1", "*": "VERDICT: 0"}}
///
/// A value may also be an array of strings, served in order on successive
/// calls for the same key (the last one repeats). Lookup tries `key`, then
/// `alt_key`, then "*". A miss raises ProviderError("missing_fixture").
class ScriptedLlm : public LlmClient {
 public:
  explicit ScriptedLlm(nlohmann::json fixture, std::string model_name = "scripted-stub");
  static std::unique_ptr<ScriptedLlm> from_file(const std::filesystem::path& path);

  std::string complete(const LlmRequest& request) override;
  std::string model_name() const override { return model_name_; }

  std::size_t calls() const;

 private:
  nlohmann::json fixture_;
  std::string model_name_;
  mutable std::mutex mu_;
  std::map<std::string, std::size_t> served_;
  std::size_t calls_ = 0;
};

/// Chat-completions endpoint: POST {"model","messages","temperature",
/// "max_tokens"} and read choices[0].message.content. Calls are bounded by a
/// permit pool and optionally recorded to a replay log.
class RemoteLlm : public LlmClient {
 public:
  explicit RemoteLlm(LlmProviderConfig config);

  std::string complete(const LlmRequest& request) override;
  std::string model_name() const override { return config_.model_name; }

 private:
  void record(const LlmRequest& request, const std::string& response);

  LlmProviderConfig config_;
  PermitPool permits_;
  std::mutex log_mu_;
};

/// Serves responses previously recorded by RemoteLlm. Matches on
/// (task, key), then (task, alt_key), then on the exact prompt.
class ReplayLlm : public LlmClient {
 public:
  explicit ReplayLlm(const std::filesystem::path& log, std::string model_name = "replay");

  std::string complete(const LlmRequest& request) override;
  std::string model_name() const override { return model_name_; }

 private:
  std::map<std::pair<std::string, std::string>, std::string> by_key_;
  std::map<std::string, std::string> by_prompt_;
  std::string model_name_;
};

std::unique_ptr<LlmClient> make_llm_client(const LlmProviderConfig& config);

/// Appends one replay record: {"timestamp","method","query_id","prompt","raw_response"}.
void append_replay_record(const std::filesystem::path& log, const LlmRequest& request,
                          const std::string& response);

}  // namespace eqr
