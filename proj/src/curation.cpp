#include "eqr/curation.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>
#include <set>

#include <spdlog/spdlog.h>

#include "eqr/concurrency.hpp"
#include "eqr/embedder.hpp"
#include "eqr/error.hpp"
#include "eqr/hashing.hpp"
#include "eqr/jsonl.hpp"

namespace eqr {

using nlohmann::json;
namespace fs = std::filesystem;

std::string LabelingConfig::default_label_prompt() {
  return "Given a query and a candidate item described by the passages below, decide whether the item is an "
         "ideal candidate for the information need expressed in the query.\n"
         "\n"
         "Query: {query}\n"
         "Candidate item: {item_name}\n"
         "Passages:\n"
         "{passages}\n"
         "Work through these steps:\n"
         "- Consider the underlying intent of the query.\n"
         "- Measure how well the passages show that the item matches a likely intent of the query (M).\n"
         "- Measure how trustworthy the passages are (T).\n"
         "- Weigh M and T and decide whether the item is ideal (1) or not ideal (0).\n"
         "\n"
         "Finish with a single line of the form \"VERDICT: 1\" or \"VERDICT: 0\".\n";
}

void to_json(json& j, const LabelRecord& r) {
  j = json{{"query_id", r.query_id}, {"item_id", r.item_id}, {"label", r.label}, {"labeler", r.labeler}};
  if (r.rationale) j["rationale"] = *r.rationale;
  if (!r.raw_response_path.empty()) j["raw_response_path"] = r.raw_response_path;
}

void from_json(const json& j, LabelRecord& r) {
  j.at("query_id").get_to(r.query_id);
  j.at("item_id").get_to(r.item_id);
  r.label = j.at("label").get<int>();
  if (r.label != 0 && r.label != 1) throw DataError("label must be 0 or 1");
  r.labeler = j.value("labeler", std::string{});
  if (auto it = j.find("rationale"); it != j.end() && it->is_string()) r.rationale = it->get<std::string>();
  else r.rationale.reset();
  r.raw_response_path = j.value("raw_response_path", std::string{});
}

std::optional<int> parse_verdict(std::string_view raw) {
  static const std::regex kVerdict(R"(VERDICT\s*:\s*\**\s*([01])\b)", std::regex::icase);
  std::optional<int> found;
  const std::string text(raw);
  for (auto it = std::sregex_iterator(text.begin(), text.end(), kVerdict); it != std::sregex_iterator(); ++it)
    found = (*it)[1].str() == "1" ? 1 : 0;
  if (found) return found;

  // Fall back to a bare digit on the last non-empty line.
  std::size_t end = text.size();
  while (end > 0) {
    std::size_t start = text.rfind('\n', end - 1);
    start = start == std::string::npos ? 0 : start + 1;
    std::string_view line(text.data() + start, end - start);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.front()))) line.remove_prefix(1);
    while (!line.empty() && (std::isspace(static_cast<unsigned char>(line.back())) || line.back() == '.'))
      line.remove_suffix(1);
    if (!line.empty()) {
      if (line == "0" || line == "1") return line == "1" ? 1 : 0;
      return std::nullopt;
    }
    if (start == 0) break;
    end = start - 1;
  }
  return std::nullopt;
}

std::string format_passages(const Item& item, std::size_t budget, bool* truncated) {
  std::string out;
  std::size_t used = 0;
  bool cut = false;
  for (std::size_t i = 0; i < item.passages.size(); ++i) {
    const auto& text = item.passages[i].text;
    if (used + text.size() <= budget) {
      out += "[" + std::to_string(i + 1) + "] " + text + "\n";
      used += text.size();
      continue;
    }
    const std::string head = truncate_utf8(text, budget - used);
    if (!head.empty()) out += "[" + std::to_string(i + 1) + "] " + head + "\n";
    used += head.size();
    cut = true;
    break;
  }
  if (truncated) *truncated = cut;
  return out;
}

std::string render_label_prompt(const LabelingConfig& config, const Query& query, const Item& item,
                                bool* truncated) {
  const std::string passages = format_passages(item, config.passage_budget, truncated);
  std::string out;
  const std::string_view tmpl = config.prompt;
  for (std::size_t i = 0; i < tmpl.size();) {
    auto rest = tmpl.substr(i);
    if (rest.starts_with("{query}")) {
      out += query.text;
      i += 7;
    } else if (rest.starts_with("{item_name}")) {
      out += item.name;
      i += 11;
    } else if (rest.starts_with("{passages}")) {
      out += passages;
      i += 10;
    } else {
      out.push_back(tmpl[i++]);
    }
  }
  return out;
}

LabelOutcome label_pair(const Query& query, const Item& item, LlmClient& llm, const LabelingConfig& config) {
  if (item.passages.empty()) throw DataError("item " + item.item_id + " has no passages to label");
  LabelOutcome outcome;
  outcome.prompt = render_label_prompt(config, query, item, &outcome.truncated);
  const LlmRequest request{"label", query.query_id + "::" + item.item_id, query.text, outcome.prompt};

  for (int attempt = 1; attempt <= 2; ++attempt) {
    outcome.attempts = attempt;
    outcome.raw_response = llm.complete(request);
    if (auto verdict = parse_verdict(outcome.raw_response)) {
      LabelRecord r;
      r.query_id = query.query_id;
      r.item_id = item.item_id;
      r.label = *verdict;
      r.labeler = "llm:" + llm.model_name();
      outcome.record = std::move(r);
      return outcome;
    }
    spdlog::warn("unparseable label reply for ({}, {}), attempt {}", query.query_id, item.item_id, attempt);
  }
  return outcome;
}

std::vector<LabelRecord> load_label_log(const fs::path& path) {
  std::vector<LabelRecord> records;
  if (!fs::exists(path)) return records;
  std::ifstream in(path);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  for (const auto& l : lines) {
    ++line_no;
    if (l.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(json::parse(l).get<LabelRecord>());
    } catch (const std::exception& e) {
      if (line_no == lines.size()) {
        spdlog::warn("{}: ignoring torn final line", path.string());
        break;
      }
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

Qrels qrels_from_labels(std::span<const LabelRecord> records) {
  // Later records for a pair override earlier ones.
  std::map<std::pair<std::string, std::string>, int> latest;
  for (const auto& r : records) latest[{r.query_id, r.item_id}] = r.label;
  Qrels qrels;
  for (const auto& [key, label] : latest)
    if (label == 1) qrels[key.first].insert(key.second);
  return qrels;
}

CurationResult build_qrels(const std::vector<Query>& queries, const std::vector<Item>& corpus, LlmClient& llm,
                           const LabelingConfig& config, const fs::path& log_path, std::size_t max_new_labels) {
  auto existing = load_label_log(log_path);
  std::set<std::pair<std::string, std::string>> done;
  for (const auto& r : existing) done.emplace(r.query_id, r.item_id);

  // If the previous run died mid-line, start the next record on a fresh line.
  if (fs::exists(log_path) && fs::file_size(log_path) > 0) {
    std::ifstream tail(log_path, std::ios::binary);
    tail.seekg(-1, std::ios::end);
    char last = '\n';
    tail.get(last);
    if (last != '\n') jsonl::open_for_write(log_path, true) << '\n';
  }

  struct Pair {
    const Query* query;
    const Item* item;
  };
  std::vector<Pair> todo;
  CurationResult result;
  for (const auto& q : queries)
    for (const auto& item : corpus) {
      if (done.count({q.query_id, item.item_id})) {
        ++result.already_logged;
        continue;
      }
      todo.push_back({&q, &item});
    }
  if (max_new_labels > 0 && todo.size() > max_new_labels) todo.resize(max_new_labels);

  const fs::path log_dir = log_path.has_parent_path() ? log_path.parent_path() : fs::path(".");
  auto log = jsonl::open_for_write(log_path, /*append=*/true);

  // Label in waves of max_in_flight pairs; append each wave in order.
  const std::size_t wave = std::max<std::size_t>(1, config.max_in_flight);
  for (std::size_t start = 0; start < todo.size(); start += wave) {
    const std::size_t stop = std::min(todo.size(), start + wave);
    std::vector<LabelOutcome> outcomes(stop - start);
    std::vector<std::string> errors(stop - start);
    parallel_blocks(stop - start, stop - start, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        try {
          outcomes[i] = label_pair(*todo[start + i].query, *todo[start + i].item, llm, config);
        } catch (const ProviderError& err) {
          errors[i] = err.what();
        }
      }
    });

    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      const auto& pair = todo[start + i];
      const std::string key = pair.query->query_id + "::" + pair.item->item_id;
      if (!errors[i].empty()) {
        result.unlabeled.emplace_back(pair.query->query_id, pair.item->item_id);
        result.errors[key] = errors[i];
        continue;
      }
      auto& outcome = outcomes[i];
      const auto raw_rel = fs::path("raw") / (sha256_hex(key).substr(0, 24) + ".txt");
      jsonl::write_file_atomic(log_dir / raw_rel, outcome.raw_response);
      if (!outcome.record) {
        result.unlabeled.emplace_back(pair.query->query_id, pair.item->item_id);
        result.errors[key] = "unparseable response";
        continue;
      }
      outcome.record->raw_response_path = raw_rel.generic_string();
      log << json(*outcome.record).dump() << '\n';
      log.flush();
      existing.push_back(*outcome.record);
      ++result.labeled_now;
    }
  }
  if (!result.unlabeled.empty())
    spdlog::warn("{} pairs could not be labeled; rerun to retry them", result.unlabeled.size());

  result.qrels = qrels_from_labels(existing);
  return result;
}

json to_json(const AgreementReport& r) {
  return json{{"kappa", r.kappa},
              {"observed_agreement", r.observed},
              {"expected_agreement", r.expected},
              {"confusion", {{"both_1", r.confusion[1][1]},
                             {"first_1_second_0", r.confusion[1][0]},
                             {"first_0_second_1", r.confusion[0][1]},
                             {"both_0", r.confusion[0][0]}}},
              {"n_pairs", r.n_pairs},
              {"degenerate", r.degenerate}};
}

AgreementReport cohens_kappa(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size())
    throw ConfigError("label vectors differ in length: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  if (a.empty()) throw ConfigError("kappa needs at least one labeled pair");

  AgreementReport r;
  r.n_pairs = a.size();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i] != 0 && a[i] != 1) || (b[i] != 0 && b[i] != 1)) throw ConfigError("labels must be 0 or 1");
    ++r.confusion[a[i]][b[i]];
  }
  const double n = static_cast<double>(r.n_pairs);
  r.observed = static_cast<double>(r.confusion[0][0] + r.confusion[1][1]) / n;
  const double a1 = static_cast<double>(r.confusion[1][0] + r.confusion[1][1]) / n;
  const double b1 = static_cast<double>(r.confusion[0][1] + r.confusion[1][1]) / n;
  r.expected = a1 * b1 + (1.0 - a1) * (1.0 - b1);
  if (r.expected >= 1.0) {
    r.degenerate = true;
    r.kappa = r.observed == 1.0 ? 1.0 : 0.0;
  } else {
    r.kappa = (r.observed - r.expected) / (1.0 - r.expected);
  }
  return r;
}

LabelComparison compare_labels(std::span<const LabelRecord> first, std::span<const LabelRecord> second) {
  std::map<std::pair<std::string, std::string>, int> a, b;
  for (const auto& r : first) a[{r.query_id, r.item_id}] = r.label;
  for (const auto& r : second) b[{r.query_id, r.item_id}] = r.label;

  LabelComparison out;
  std::vector<int> xs, ys;
  std::map<std::string, std::pair<std::vector<int>, std::vector<int>>> by_query;
  for (const auto& [key, label] : a) {
    auto it = b.find(key);
    if (it == b.end()) {
      ++out.unmatched;
      continue;
    }
    xs.push_back(label);
    ys.push_back(it->second);
    by_query[key.first].first.push_back(label);
    by_query[key.first].second.push_back(it->second);
  }
  for (const auto& [key, label] : b)
    if (!a.count(key)) ++out.unmatched;
  out.matched = xs.size();
  if (xs.empty()) throw ConfigError("the two label sets share no (query, item) pairs");
  out.overall = cohens_kappa(xs, ys);
  for (const auto& [qid, vecs] : by_query) out.per_query[qid] = cohens_kappa(vecs.first, vecs.second);
  return out;
}

}  // namespace eqr
