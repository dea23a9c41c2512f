#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "eqr/corpus.hpp"
#include "eqr/llm.hpp"

namespace eqr {

struct LabelRecord {
  std::string query_id;
  std::string item_id;
  int label = 0;
  std::optional<std::string> rationale;
  /// "llm:<model>" or "human:<annotator>".
  std::string labeler;
  /// Raw response file, relative to the log's directory (LLM labels only).
  std::string raw_response_path;

  bool operator==(const LabelRecord&) const = default;
};

void to_json(nlohmann::json& j, const LabelRecord& r);
void from_json(const nlohmann::json& j, LabelRecord& r);

struct LabelingConfig {
  /// Template with {query}, {item_name} and {passages} placeholders.
  std::string prompt = default_label_prompt();
  /// Total bytes of passage text placed in one prompt.
  std::size_t passage_budget = 24000;
  std::size_t max_in_flight = 4;

  static std::string default_label_prompt();
};

/// Reads the last "VERDICT: 0|1" in `raw`; failing that, a bare "0"/"1" on
/// the last non-empty line. nullopt when neither is present.
std::optional<int> parse_verdict(std::string_view raw);

/// The passages of `item` as a numbered list, keeping at most `budget` bytes
/// of passage text. Passages are taken in order; the first one that does not
/// fit is cut at the budget (on a UTF-8 boundary) and the rest are dropped.
std::string format_passages(const Item& item, std::size_t budget, bool* truncated);

std::string render_label_prompt(const LabelingConfig& config, const Query& query, const Item& item,
                                bool* truncated);

struct LabelOutcome {
  std::optional<LabelRecord> record;  // empty when both attempts were unparseable
  std::string prompt;
  std::string raw_response;
  bool truncated = false;
  int attempts = 0;
};

/// Asks `llm` whether `item` is an ideal candidate for `query`. An
/// unparseable reply is retried once. Provider failures propagate.
LabelOutcome label_pair(const Query& query, const Item& item, LlmClient& llm, const LabelingConfig& config);

struct CurationResult {
  Qrels qrels;
  std::size_t labeled_now = 0;
  std::size_t already_logged = 0;
  /// Pairs whose replies never parsed, or whose provider call failed.
  std::vector<std::pair<std::string, std::string>> unlabeled;
  std::map<std::string, std::string> errors;  // "qid::iid" -> message
};

/// Labels every query x item pair not already present in `log_path`,
/// appending one LabelRecord per line (raw replies go under raw/ next to the
/// log). Records are appended in enumeration order. `max_new_labels` stops
/// the run early (0 = no limit). Qrels are built from the whole log.
CurationResult build_qrels(const std::vector<Query>& queries, const std::vector<Item>& corpus, LlmClient& llm,
                           const LabelingConfig& config, const std::filesystem::path& log_path,
                           std::size_t max_new_labels = 0);

/// Reads a label log. A torn final line (crash mid-append) is ignored.
std::vector<LabelRecord> load_label_log(const std::filesystem::path& path);

Qrels qrels_from_labels(std::span<const LabelRecord> records);

struct AgreementReport {
  double kappa = 0.0;
  double observed = 0.0;  // p_o
  double expected = 0.0;  // p_e
  /// confusion[a][b] counts pairs where the first labeler said a and the second b.
  std::array<std::array<std::size_t, 2>, 2> confusion{};
  std::size_t n_pairs = 0;
  /// p_e == 1: kappa set to 1 on full agreement, 0 otherwise.
  bool degenerate = false;
};

nlohmann::json to_json(const AgreementReport& report);

/// Cohen's kappa for two aligned binary label vectors. Throws ConfigError on
/// length mismatch, empty input or labels outside {0, 1}.
AgreementReport cohens_kappa(std::span<const int> a, std::span<const int> b);

struct LabelComparison {
  AgreementReport overall;
  std::map<std::string, AgreementReport> per_query;
  std::size_t matched = 0;
  std::size_t unmatched = 0;
};

/// Aligns two label sets on (query_id, item_id) and computes agreement
/// overall and per query. Pairs present in only one set are counted as
/// unmatched.
LabelComparison compare_labels(std::span<const LabelRecord> first, std::span<const LabelRecord> second);

}  // namespace eqr
