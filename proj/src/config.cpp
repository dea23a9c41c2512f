#include "eqr/config.hpp"

#include <cstdlib>

#include "eqr/error.hpp"
#include "eqr/jsonl.hpp"

namespace eqr {

using nlohmann::json;
namespace fs = std::filesystem;

std::string interpolate_env(const std::string& text) {
  std::string out;
  for (std::size_t i = 0; i < text.size();) {
    if (text.compare(i, 2, "${") == 0) {
      const auto close = text.find('}', i + 2);
      if (close != std::string::npos) {
        const auto name = text.substr(i + 2, close - i - 2);
        if (const char* value = std::getenv(name.c_str())) out += value;
        i = close + 1;
        continue;
      }
    }
    out.push_back(text[i++]);
  }
  return out;
}

namespace {

json interpolate_all(const json& j) {
  if (j.is_string()) return interpolate_env(j.get<std::string>());
  if (j.is_object()) {
    json out = json::object();
    for (auto it = j.begin(); it != j.end(); ++it) out[it.key()] = interpolate_all(it.value());
    return out;
  }
  if (j.is_array()) {
    json out = json::array();
    for (const auto& v : j) out.push_back(interpolate_all(v));
    return out;
  }
  return j;
}

fs::path resolve(const fs::path& base, const std::string& value) {
  if (value.empty()) return {};
  fs::path p(value);
  return p.is_absolute() || base.empty() ? p : base / p;
}

template <typename T>
void read(const json& j, const char* key, T& slot) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) slot = it->get<T>();
}

void read_path(const json& j, const char* key, const fs::path& base, fs::path& slot) {
  if (auto it = j.find(key); it != j.end() && it->is_string()) slot = resolve(base, it->get<std::string>());
}

EmbeddingProviderConfig encoder_from_json(const json& j, std::uint64_t seed) {
  EmbeddingProviderConfig c;
  c.seed = seed;
  if (auto it = j.find("kind"); it != j.end()) c.kind = parse_embedding_kind(it->get<std::string>());
  read(j, "model_name", c.model_name);
  read(j, "endpoint", c.endpoint);
  read(j, "dim", c.dim);
  read(j, "batch_size", c.batch_size);
  read(j, "input_limit", c.input_limit);
  read(j, "api_key_env", c.api_key_env);
  read(j, "seed", c.seed);
  read(j, "max_retries", c.max_retries);
  read(j, "retry_base_ms", c.retry_base_ms);
  read(j, "retry_cap_ms", c.retry_cap_ms);
  read(j, "max_in_flight", c.max_in_flight);
  read(j, "timeout_s", c.timeout_s);
  return c;
}

LlmProviderConfig llm_from_json(const json& j, const fs::path& base) {
  LlmProviderConfig c;
  if (auto it = j.find("kind"); it != j.end()) c.kind = parse_llm_kind(it->get<std::string>());
  read(j, "model_name", c.model_name);
  read(j, "endpoint", c.endpoint);
  read(j, "temperature", c.temperature);
  read(j, "max_output_tokens", c.max_output_tokens);
  read(j, "api_key_env", c.api_key_env);
  read_path(j, "fixture", base, c.fixture);
  read_path(j, "replay_log", base, c.replay_log);
  read(j, "max_retries", c.max_retries);
  read(j, "retry_base_ms", c.retry_base_ms);
  read(j, "retry_cap_ms", c.retry_cap_ms);
  read(j, "timeout_s", c.timeout_s);
  read(j, "max_in_flight", c.max_in_flight);
  return c;
}

}  // namespace

RunConfig run_config_from_json(const json& raw, const fs::path& base) {
  const json j = interpolate_all(raw);
  RunConfig c;
  try {
    read_path(j, "dataset", base, c.dataset);
    read(j, "methods", c.methods);
    read(j, "k", c.eqr_k);
    read(j, "n", c.n);
    read(j, "cutoffs", c.metrics.cutoffs);
    read(j, "ablation_n", c.ablation_n);
    read_path(j, "output_dir", base, c.output_dir);
    read_path(j, "cache_dir", base, c.cache_dir);
    read_path(j, "prompts_dir", base, c.prompts_dir);
    if (auto it = j.find("fallback"); it != j.end()) c.fallback = parse_fallback_policy(it->get<std::string>());
    read(j, "q2e_separator", c.q2e_separator);
    read(j, "query2doc_separator", c.query2doc_separator);
    read(j, "seed", c.seed);

    if (auto it = j.find("encoders"); it != j.end()) {
      c.encoders.clear();
      for (const auto& e : *it) c.encoders.push_back(encoder_from_json(e, c.seed));
    } else if (auto one = j.find("encoder"); one != j.end()) {
      c.encoders = {encoder_from_json(*one, c.seed)};
    } else {
      c.encoders.front().seed = c.seed;
    }
    if (auto it = j.find("llm"); it != j.end()) c.llm = llm_from_json(*it, base);
    c.label_llm = c.llm;
    if (auto it = j.find("label_llm"); it != j.end()) c.label_llm = llm_from_json(*it, base);
    if (auto it = j.find("labeling"); it != j.end()) {
      read(*it, "passage_budget", c.labeling.passage_budget);
      read(*it, "max_in_flight", c.labeling.max_in_flight);
      fs::path prompt_file;
      read_path(*it, "prompt_file", base, prompt_file);
      if (!prompt_file.empty()) c.labeling.prompt = jsonl::read_file(prompt_file);
      read_path(*it, "log", base, c.label_log);
      read_path(*it, "human_labels", base, c.human_labels);
    }
    if (auto it = j.find("server"); it != j.end()) {
      read(*it, "host", c.host);
      read(*it, "port", c.port);
      read(*it, "max_in_flight", c.max_in_flight);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(jsonl::read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

void RunConfig::validate() const {
  if (n == 0) throw ConfigError("n must be >= 1");
  if (eqr_k < 1) throw ConfigError("k must be >= 1");
  metrics.validate();
  if (encoders.empty()) throw ConfigError("at least one encoder must be configured");
  if (dataset.empty()) throw ConfigError("no dataset configured");
  if (!fs::exists(dataset)) throw ConfigError("dataset directory does not exist: " + dataset.string());
  if (!prompts_dir.empty() && !fs::is_directory(prompts_dir))
    throw ConfigError("prompts directory does not exist: " + prompts_dir.string());
  for (auto v : ablation_n)
    if (v == 0) throw ConfigError("ablation n values must be positive");
  parsed_methods();
}

fs::path RunConfig::effective_cache_dir() const { return cache_dir.empty() ? output_dir / "cache" : cache_dir; }

fs::path RunConfig::effective_label_log(const std::string& dataset_name) const {
  return label_log.empty() ? output_dir / "labels" / (dataset_name + ".jsonl") : label_log;
}

ReformulatorConfig RunConfig::reformulator_config() const {
  ReformulatorConfig rc;
  if (!prompts_dir.empty()) rc.prompts = PromptTemplates::load(prompts_dir);
  rc.q2e_separator = q2e_separator;
  rc.query2doc_separator = query2doc_separator;
  rc.fallback = fallback;
  return rc;
}

std::vector<QRMethod> RunConfig::parsed_methods() const {
  std::vector<QRMethod> out;
  for (const auto& m : methods) out.push_back(QRMethod::parse(m, eqr_k));
  return out;
}

}  // namespace eqr
