#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eqr/corpus.hpp"
#include "eqr/llm.hpp"

namespace eqr {

/// Separator placed between the query and each EQR elaboration.
inline constexpr std::string_view kSep = "[SEP]";

enum class QRMethodKind { kNoQR, kQ2E, kQuery2Doc, kEQR };

struct QRMethod {
  QRMethodKind kind = QRMethodKind::kNoQR;
  /// Requested subtopic count; only meaningful for EQR.
  int k = 5;

  /// "noqr", "q2e", "query2doc" or "eqr".
  std::string id() const;
  /// Accepts the ids above (case-insensitive; "q2d" is an alias of
  /// "query2doc"). Throws ConfigError for anything else.
  static QRMethod parse(std::string_view id, int k = 5);

  bool operator==(const QRMethod&) const = default;
};

/// Every method identifier, in presentation order.
std::vector<std::string> all_method_ids();

struct Elaboration {
  std::string title;
  std::string body;

  bool operator==(const Elaboration&) const = default;
};

struct ReformulatedQuery {
  Query original;
  QRMethod method;
  /// Q2E: keywords. Query2Doc: the generated passage. EQR: elaboration
  /// bodies. NoQR: empty.
  std::vector<std::string> segments;
  /// EQR only: parsed title/body pairs, parallel to `segments`.
  std::vector<Elaboration> elaborations;
  /// The reformulated query text that gets embedded.
  std::string text;
  std::string prompt;
  std::string raw_response;
  /// True when the LLM output was unusable and the policy fell back to NoQR.
  bool fell_back = false;
};

/// Prompt templates with {query} and {k} placeholders, one per method.
struct PromptTemplates {
  std::string q2e;
  std::string query2doc;
  std::string eqr;

  static PromptTemplates defaults();
  /// Reads q2e.txt, query2doc.txt and eqr.txt from `dir`; files that are
  /// absent keep their default text.
  static PromptTemplates load(const std::filesystem::path& dir);

  const std::string& for_method(QRMethodKind kind) const;
};

/// Substitutes every {query} and {k} in `tmpl`.
std::string render_template(std::string_view tmpl, std::string_view query, int k);

enum class FallbackPolicy { kError, kRetryOnce, kFallbackNoQR };
FallbackPolicy parse_fallback_policy(const std::string& name);
std::string to_string(FallbackPolicy policy);

struct ReformulatorConfig {
  PromptTemplates prompts = PromptTemplates::defaults();
  std::string q2e_separator = "; ";
  std::string query2doc_separator = " ";
  FallbackPolicy fallback = FallbackPolicy::kRetryOnce;
};

/// q + "[SEP]" + s_1 + ... + "[SEP]" + s_n, nothing else added.
std::string concat_with_sep(std::string_view query, std::span<const std::string> segments);

/// Parses "Title - body" / "Title: body" lines (list markers and markdown
/// emphasis tolerated; a title on its own line may precede its body).
/// Warns when the count differs from `k`; throws ParseError if nothing parses.
std::vector<Elaboration> parse_eqr_output(std::string_view raw, int k);

/// Splits a keyword list on semicolons/newlines (commas when neither occurs).
std::vector<std::string> parse_q2e_output(std::string_view raw);

/// The generated passage, trimmed. Throws ParseError if empty.
std::string parse_query2doc_output(std::string_view raw);

class Reformulator {
 public:
  /// `llm` may be null when only NoQR is used.
  Reformulator(ReformulatorConfig config, LlmClient* llm);

  ReformulatedQuery reformulate(const Query& query, const QRMethod& method) const;

  const ReformulatorConfig& config() const { return config_; }

 private:
  ReformulatedQuery parse_into(const Query& query, const QRMethod& method, std::string prompt,
                               std::string raw) const;

  ReformulatorConfig config_;
  LlmClient* llm_;
};

}  // namespace eqr
