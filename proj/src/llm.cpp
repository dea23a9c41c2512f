#include "eqr/llm.hpp"

#include <chrono>
#include <ctime>
#include <iomanip>
#include <sstream>

#include "eqr/error.hpp"
#include "eqr/jsonl.hpp"
#include "http_client.hpp"

namespace eqr {

using nlohmann::json;
namespace fs = std::filesystem;

LlmProviderConfig::Kind parse_llm_kind(const std::string& name) {
  if (name == "scripted-stub") return LlmProviderConfig::Kind::kScriptedStub;
  if (name == "remote-http") return LlmProviderConfig::Kind::kRemoteHttp;
  if (name == "replay") return LlmProviderConfig::Kind::kReplay;
  throw ConfigError("unknown llm provider kind: " + name);
}

std::string to_string(LlmProviderConfig::Kind kind) {
  switch (kind) {
    case LlmProviderConfig::Kind::kScriptedStub: return "scripted-stub";
    case LlmProviderConfig::Kind::kRemoteHttp: return "remote-http";
    case LlmProviderConfig::Kind::kReplay: return "replay";
  }
  return "unknown";
}

// ---- ScriptedLlm ---------------------------------------------------------

ScriptedLlm::ScriptedLlm(json fixture, std::string model_name)
    : fixture_(std::move(fixture)), model_name_(std::move(model_name)) {
  if (!fixture_.is_object()) throw ConfigError("stub fixture must be a JSON object keyed by task");
}

std::unique_ptr<ScriptedLlm> ScriptedLlm::from_file(const fs::path& path) {
  try {
    return std::make_unique<ScriptedLlm>(json::parse(jsonl::read_file(path)));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string ScriptedLlm::complete(const LlmRequest& request) {
  std::lock_guard lock(mu_);
  ++calls_;
  auto task = fixture_.find(request.task);
  if (task != fixture_.end() && task->is_object()) {
    for (const std::string& key : {request.key, request.alt_key, std::string("*")}) {
      if (key.empty()) continue;
      auto hit = task->find(key);
      if (hit == task->end()) continue;
      if (hit->is_string()) return hit->get<std::string>();
      if (hit->is_array() && !hit->empty()) {
        auto& n = served_[request.task + '\x1f' + key];
        const auto idx = std::min(n, hit->size() - 1);
        ++n;
        return (*hit)[idx].get<std::string>();
      }
    }
  }
  throw ProviderError("missing_fixture", "no scripted response for task " + request.task + " key " + request.key);
}

std::size_t ScriptedLlm::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

// ---- replay log ----------------------------------------------------------

void append_replay_record(const fs::path& log, const LlmRequest& request, const std::string& response) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream ts;
  ts << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");

  json rec{{"timestamp", ts.str()},
           {"method", request.task},
           {"query_id", request.key},
           {"prompt", request.prompt},
           {"raw_response", response}};
  if (!request.alt_key.empty()) rec["query"] = request.alt_key;
  auto out = jsonl::open_for_write(log, /*append=*/true);
  out << rec.dump() << '\n';
  out.flush();
}

// ---- RemoteLlm -----------------------------------------------------------

RemoteLlm::RemoteLlm(LlmProviderConfig config) : config_(std::move(config)), permits_(config_.max_in_flight) {
  detail::parse_endpoint(config_.endpoint);
}

std::string RemoteLlm::complete(const LlmRequest& request) {
  json body{{"model", config_.model_name},
            {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})},
            {"temperature", config_.temperature},
            {"max_tokens", config_.max_output_tokens}};
  json reply;
  {
    PermitPool::Permit permit(permits_);
    reply = detail::post_json(config_.endpoint, body, config_.api_key_env,
                              {config_.max_retries, config_.retry_base_ms, config_.retry_cap_ms, config_.timeout_s});
  }
  std::string text;
  try {
    text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw ProviderError("bad_response", std::string("malformed chat reply: ") + e.what());
  }
  record(request, text);
  return text;
}

void RemoteLlm::record(const LlmRequest& request, const std::string& response) {
  if (config_.replay_log.empty()) return;
  std::lock_guard lock(log_mu_);
  append_replay_record(config_.replay_log, request, response);
}

// ---- ReplayLlm -----------------------------------------------------------

ReplayLlm::ReplayLlm(const fs::path& log, std::string model_name) : model_name_(std::move(model_name)) {
  jsonl::for_each(log, [&](const json& rec, std::size_t line) {
    try {
      auto method = jsonl::require_string(rec, "method");
      auto response = jsonl::require_string(rec, "raw_response");
      // Later records win, so a re-recorded exchange replaces the old one.
      by_key_[{method, jsonl::require_string(rec, "query_id")}] = response;
      if (rec.contains("query") && rec["query"].is_string()) by_key_[{method, rec["query"].get<std::string>()}] = response;
      if (rec.contains("prompt") && rec["prompt"].is_string()) by_prompt_[rec["prompt"].get<std::string>()] = response;
    } catch (const DataError& e) {
      throw DataError(log.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
}

std::string ReplayLlm::complete(const LlmRequest& request) {
  for (const auto& key : {request.key, request.alt_key}) {
    if (key.empty()) continue;
    if (auto it = by_key_.find({request.task, key}); it != by_key_.end()) return it->second;
  }
  if (auto it = by_prompt_.find(request.prompt); it != by_prompt_.end()) return it->second;
  throw ProviderError("missing_fixture", "replay log has no response for task " + request.task + " key " + request.key);
}

std::unique_ptr<LlmClient> make_llm_client(const LlmProviderConfig& config) {
  switch (config.kind) {
    case LlmProviderConfig::Kind::kScriptedStub: {
      if (config.fixture.empty()) throw ConfigError("scripted-stub llm needs a fixture file");
      auto fixture = json::parse(jsonl::read_file(config.fixture));
      return std::make_unique<ScriptedLlm>(std::move(fixture), config.model_name);
    }
    case LlmProviderConfig::Kind::kRemoteHttp:
      return std::make_unique<RemoteLlm>(config);
    case LlmProviderConfig::Kind::kReplay:
      if (config.fixture.empty()) throw ConfigError("replay llm needs a replay log as its fixture");
      return std::make_unique<ReplayLlm>(config.fixture, config.model_name);
  }
  throw ConfigError("unknown llm provider kind");
}

}  // namespace eqr
