#include "eqr/reformulator.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "eqr/error.hpp"
#include "eqr/jsonl.hpp"

namespace eqr {

namespace {

constexpr std::string_view kDefaultQ2E =
    "Write a list of keywords for the given query.\n"
    "Query: {query}\n"
    "Separate the keywords with semicolons and output only the keywords.\n";

constexpr std::string_view kDefaultQuery2Doc =
    "Write a passage that answers the given query.\n"
    "Query: {query}\n"
    "Passage:\n";

constexpr std::string_view kDefaultEQR =
    "You help a recommender system understand what a user is looking for.\n"
    "\n"
    "Query: {query}\n"
    "\n"
    "- List {k} distinct subtopics that someone making this request could be interested in, "
    "covering different aspects or interpretations of the query.\n"
    "- For each subtopic, write one information-rich paragraph explaining how it relates to the "
    "query and naming representative examples that fit it.\n"
    "\n"
    "Write each subtopic on its own line, formatted as:\n"
    "Subtopic Title - paragraph\n"
    "\n"
    "Output only the {k} lines.\n";

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Leading "-", "*", "•", "1.", "2)" and similar list markers.
std::string_view strip_list_marker(std::string_view s) {
  s = trim(s);
  if (s.starts_with("•")) return trim(s.substr(3));
  if (!s.empty() && (s[0] == '-' || s[0] == '*' || s[0] == '+') && s.size() > 1 &&
      std::isspace(static_cast<unsigned char>(s[1])))
    return trim(s.substr(1));
  std::size_t i = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i > 0 && i + 1 < s.size() && (s[i] == '.' || s[i] == ')') && std::isspace(static_cast<unsigned char>(s[i + 1])))
    return trim(s.substr(i + 1));
  return s;
}

std::string strip_emphasis(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i + 1 < s.size() && ((s[i] == '*' && s[i + 1] == '*') || (s[i] == '_' && s[i + 1] == '_'))) {
      ++i;
      continue;
    }
    out.push_back(s[i]);
  }
  return out;
}

std::size_t word_count(std::string_view s) {
  std::size_t words = 0;
  bool in_word = false;
  for (unsigned char c : s) {
    const bool space = std::isspace(c);
    if (!space && !in_word) ++words;
    in_word = !space;
  }
  return words;
}

// Position and length of the first title/body separator, if any.
std::pair<std::size_t, std::size_t> find_separator(std::string_view line) {
  std::pair<std::size_t, std::size_t> best{std::string_view::npos, 0};
  for (std::string_view sep : {" - ", " – ", " — ", ": "}) {
    const auto pos = line.find(sep);
    if (pos != std::string_view::npos && pos < best.first) best = {pos, sep.size()};
  }
  return best;
}

constexpr std::size_t kMaxTitleWords = 12;

}  // namespace

// ---- QRMethod ------------------------------------------------------------

std::string QRMethod::id() const {
  switch (kind) {
    case QRMethodKind::kNoQR: return "noqr";
    case QRMethodKind::kQ2E: return "q2e";
    case QRMethodKind::kQuery2Doc: return "query2doc";
    case QRMethodKind::kEQR: return "eqr";
  }
  return "unknown";
}

QRMethod QRMethod::parse(std::string_view id, int k) {
  std::string lower(id);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  QRMethod m;
  m.k = k;
  if (lower == "noqr" || lower == "none") m.kind = QRMethodKind::kNoQR;
  else if (lower == "q2e") m.kind = QRMethodKind::kQ2E;
  else if (lower == "query2doc" || lower == "q2d") m.kind = QRMethodKind::kQuery2Doc;
  else if (lower == "eqr") m.kind = QRMethodKind::kEQR;
  else throw ConfigError("unknown QR method: " + std::string(id));
  if (m.kind == QRMethodKind::kEQR && k < 1) throw ConfigError("EQR needs k >= 1");
  return m;
}

std::vector<std::string> all_method_ids() { return {"noqr", "q2e", "query2doc", "eqr"}; }

// ---- prompts -------------------------------------------------------------

PromptTemplates PromptTemplates::defaults() {
  return {std::string(kDefaultQ2E), std::string(kDefaultQuery2Doc), std::string(kDefaultEQR)};
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir) {
  auto t = defaults();
  auto read_if = [&](const char* name, std::string& slot) {
    const auto path = dir / name;
    if (std::filesystem::exists(path)) slot = jsonl::read_file(path);
  };
  read_if("q2e.txt", t.q2e);
  read_if("query2doc.txt", t.query2doc);
  read_if("eqr.txt", t.eqr);
  return t;
}

const std::string& PromptTemplates::for_method(QRMethodKind kind) const {
  switch (kind) {
    case QRMethodKind::kQ2E: return q2e;
    case QRMethodKind::kQuery2Doc: return query2doc;
    case QRMethodKind::kEQR: return eqr;
    case QRMethodKind::kNoQR: break;
  }
  throw ConfigError("NoQR has no prompt");
}

std::string render_template(std::string_view tmpl, std::string_view query, int k) {
  std::string out;
  out.reserve(tmpl.size() + query.size());
  for (std::size_t i = 0; i < tmpl.size();) {
    if (tmpl.substr(i).starts_with("{query}")) {
      out += query;
      i += 7;
    } else if (tmpl.substr(i).starts_with("{k}")) {
      out += std::to_string(k);
      i += 3;
    } else {
      out.push_back(tmpl[i++]);
    }
  }
  return out;
}

FallbackPolicy parse_fallback_policy(const std::string& name) {
  if (name == "error") return FallbackPolicy::kError;
  if (name == "retry-once") return FallbackPolicy::kRetryOnce;
  if (name == "fall-back-to-noqr" || name == "noqr") return FallbackPolicy::kFallbackNoQR;
  throw ConfigError("unknown fallback policy: " + name);
}

std::string to_string(FallbackPolicy policy) {
  switch (policy) {
    case FallbackPolicy::kError: return "error";
    case FallbackPolicy::kRetryOnce: return "retry-once";
    case FallbackPolicy::kFallbackNoQR: return "fall-back-to-noqr";
  }
  return "unknown";
}

// ---- parsing -------------------------------------------------------------

std::string concat_with_sep(std::string_view query, std::span<const std::string> segments) {
  std::string out(query);
  for (const auto& s : segments) {
    out += kSep;
    out += s;
  }
  return out;
}

std::vector<Elaboration> parse_eqr_output(std::string_view raw, int k) {
  std::vector<Elaboration> out;
  std::string pending_title;

  std::istringstream lines{std::string(raw)};
  std::string line_buf;
  while (std::getline(lines, line_buf)) {
    const auto marked = strip_list_marker(line_buf);
    if (marked.empty()) continue;
    const bool bold_only = marked.size() > 4 && marked.starts_with("**") && marked.ends_with("**") &&
                           marked.substr(2, marked.size() - 4).find("**") == std::string_view::npos;
    const std::string line = strip_emphasis(marked);
    const std::string_view view = trim(line);

    if (!bold_only) {
      const auto [pos, len] = find_separator(view);
      if (pos != std::string_view::npos) {
        const auto title = trim(view.substr(0, pos));
        const auto body = trim(view.substr(pos + len));
        if (!title.empty() && !body.empty() && word_count(title) <= kMaxTitleWords) {
          out.push_back({std::string(title), std::string(body)});
          pending_title.clear();
          continue;
        }
      }
    }

    // A line ending in ':' or wrapped in bold introduces a title whose body
    // follows on the next line.
    if (bold_only || (view.ends_with(':') && word_count(view) <= kMaxTitleWords)) {
      pending_title = std::string(trim(view.ends_with(':') ? view.substr(0, view.size() - 1) : view));
      continue;
    }
    if (!pending_title.empty()) {
      out.push_back({std::move(pending_title), std::string(view)});
      pending_title.clear();
    } else if (!out.empty()) {
      out.back().body += ' ';
      out.back().body += view;
    }
    // Anything before the first elaboration is preamble and is dropped.
  }

  if (out.empty()) throw ParseError("no subtopic elaborations found in LLM output");
  if (static_cast<int>(out.size()) != k)
    spdlog::warn("EQR output has {} elaborations, {} requested; using what parsed", out.size(), k);
  return out;
}

std::vector<std::string> parse_q2e_output(std::string_view raw) {
  const bool has_semicolon = raw.find(';') != std::string_view::npos;
  const bool has_newline = raw.find('\n') != std::string_view::npos;
  auto is_sep = [&](char c) {
    if (c == ';' || c == '\n') return true;
    return c == ',' && !has_semicolon && !has_newline;
  };

  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= raw.size(); ++i) {
    if (i == raw.size() || is_sep(raw[i])) {
      auto kw = strip_list_marker(raw.substr(start, i - start));
      std::string cleaned = strip_emphasis(kw);
      auto t = trim(cleaned);
      while (!t.empty() && (t.front() == '"' || t.front() == '\'')) t.remove_prefix(1);
      while (!t.empty() && (t.back() == '"' || t.back() == '\'' || t.back() == '.')) t.remove_suffix(1);
      if (!t.empty()) out.emplace_back(t);
      start = i + 1;
    }
  }
  if (out.empty()) throw ParseError("no keywords found in LLM output");
  return out;
}

std::string parse_query2doc_output(std::string_view raw) {
  auto t = trim(raw);
  if (t.empty()) throw ParseError("empty passage in LLM output");
  return std::string(t);
}

// ---- Reformulator --------------------------------------------------------

Reformulator::Reformulator(ReformulatorConfig config, LlmClient* llm) : config_(std::move(config)), llm_(llm) {}

ReformulatedQuery Reformulator::parse_into(const Query& query, const QRMethod& method, std::string prompt,
                                           std::string raw) const {
  ReformulatedQuery r{query, method, {}, {}, {}, std::move(prompt), std::move(raw), false};
  switch (method.kind) {
    case QRMethodKind::kQ2E: {
      r.segments = parse_q2e_output(r.raw_response);
      r.text = query.text;
      for (const auto& kw : r.segments) r.text += config_.q2e_separator + kw;
      break;
    }
    case QRMethodKind::kQuery2Doc: {
      r.segments = {parse_query2doc_output(r.raw_response)};
      r.text = query.text + config_.query2doc_separator + r.segments.front();
      break;
    }
    case QRMethodKind::kEQR: {
      r.elaborations = parse_eqr_output(r.raw_response, method.k);
      for (const auto& e : r.elaborations) r.segments.push_back(e.body);
      r.text = concat_with_sep(query.text, r.segments);
      break;
    }
    case QRMethodKind::kNoQR:
      r.text = query.text;
      break;
  }
  return r;
}

ReformulatedQuery Reformulator::reformulate(const Query& query, const QRMethod& method) const {
  if (method.kind == QRMethodKind::kNoQR) return {query, method, {}, {}, query.text, {}, {}, false};
  if (!llm_) throw ConfigError("method " + method.id() + " needs an LLM provider");
  if (method.kind == QRMethodKind::kEQR && method.k < 1) throw ConfigError("EQR needs k >= 1");

  const std::string prompt = render_template(config_.prompts.for_method(method.kind), query.text, method.k);
  const LlmRequest request{method.id(), query.query_id, query.text, prompt};

  const int attempts = config_.fallback == FallbackPolicy::kRetryOnce ? 2 : 1;
  for (int attempt = 1;; ++attempt) {
    std::string raw = llm_->complete(request);
    try {
      return parse_into(query, method, prompt, raw);
    } catch (const ParseError& e) {
      if (attempt < attempts) {
        spdlog::warn("{} output for query {} unparseable ({}); retrying", method.id(), query.query_id, e.what());
        continue;
      }
      if (config_.fallback == FallbackPolicy::kFallbackNoQR) {
        spdlog::warn("{} output for query {} unparseable ({}); falling back to NoQR", method.id(),
                     query.query_id, e.what());
        return {query, method, {}, {}, query.text, prompt, raw, true};
      }
      throw ParseError(method.id() + " reformulation of query " + query.query_id + " failed: " + e.what());
    }
  }
}

}  // namespace eqr
