#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "eqr/curation.hpp"
#include "eqr/embedder.hpp"
#include "eqr/evaluation.hpp"
#include "eqr/llm.hpp"
#include "eqr/reformulator.hpp"

namespace eqr {

/// Everything a CLI or service run needs. Loaded from a JSON config file;
/// string values may reference environment variables as ${NAME}. Relative
/// paths are resolved against the config file's directory.
struct RunConfig {
  std::filesystem::path dataset;
  std::vector<std::string> methods{"noqr", "q2e", "query2doc", "eqr"};
  int eqr_k = 5;
  std::size_t n = 50;
  MetricConfig metrics;
  std::vector<std::size_t> ablation_n{1, 5, 10, 50};
  std::filesystem::path output_dir = "out";
  std::filesystem::path cache_dir;  // default: <output_dir>/cache
  std::filesystem::path prompts_dir;
  FallbackPolicy fallback = FallbackPolicy::kRetryOnce;
  std::string q2e_separator = "; ";
  std::string query2doc_separator = " ";
  std::uint64_t seed = 0;

  std::vector<EmbeddingProviderConfig> encoders{EmbeddingProviderConfig{}};
  LlmProviderConfig llm;
  LlmProviderConfig label_llm;
  LabelingConfig labeling;
  std::filesystem::path label_log;     // default: <output_dir>/labels/<dataset>.jsonl
  std::filesystem::path human_labels;  // optional, for agreement

  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t max_in_flight = 8;

  /// Throws ConfigError on out-of-range values or missing required paths.
  void validate() const;

  std::filesystem::path effective_cache_dir() const;
  std::filesystem::path effective_label_log(const std::string& dataset_name) const;
  ReformulatorConfig reformulator_config() const;
  std::vector<QRMethod> parsed_methods() const;
};

/// Replaces every ${NAME} with the environment value (empty if unset).
std::string interpolate_env(const std::string& text);

RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace eqr
