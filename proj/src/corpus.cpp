#include "eqr/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "eqr/error.hpp"
#include "eqr/jsonl.hpp"

namespace eqr {

using nlohmann::json;
namespace fs = std::filesystem;

// ---- jsonl helpers -------------------------------------------------------

namespace jsonl {

void for_each(const fs::path& path, const std::function<void(const json&, std::size_t)>& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); }))
      continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
    }
    if (!record.is_object())
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected a JSON object");
    fn(record, line_no);
  }
  if (in.bad()) throw DataError("read error on " + path.string());
}

std::ofstream open_for_write(const fs::path& path, bool append) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  return out;
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    out << contents;
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string require_string(const json& record, const char* key) {
  auto it = record.find(key);
  if (it == record.end() || !it->is_string())
    throw DataError(std::string("missing string field \"") + key + "\"");
  return it->get<std::string>();
}

}  // namespace jsonl

namespace {

bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::string where(const fs::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line) + ": ";
}

}  // namespace

std::size_t count_positive(const Qrels& qrels) {
  std::size_t total = 0;
  for (const auto& [qid, items] : qrels) total += items.size();
  return total;
}

const Item* Dataset::find_item(const std::string& item_id) const {
  auto it = std::find_if(corpus.begin(), corpus.end(),
                         [&](const Item& i) { return i.item_id == item_id; });
  return it == corpus.end() ? nullptr : &*it;
}

const Query* Dataset::find_query(const std::string& query_id) const {
  auto it = std::find_if(queries.begin(), queries.end(),
                         [&](const Query& q) { return q.query_id == query_id; });
  return it == queries.end() ? nullptr : &*it;
}

std::size_t Dataset::passage_count() const {
  std::size_t total = 0;
  for (const auto& item : corpus) total += item.passages.size();
  return total;
}

std::vector<Item> load_corpus(const fs::path& path) {
  std::vector<Item> items;
  std::unordered_map<std::string, std::size_t> slot;
  std::unordered_set<std::string> seen;

  jsonl::for_each(path, [&](const json& rec, std::size_t line) {
    try {
      Passage p;
      p.item_id = jsonl::require_string(rec, "item_id");
      p.passage_id = jsonl::require_string(rec, "passage_id");
      p.text = jsonl::require_string(rec, "text");
      std::string name = rec.contains("item_name") && rec["item_name"].is_string()
                             ? rec["item_name"].get<std::string>()
                             : p.item_id;
      if (blank(p.text))
        throw DataError("empty text for passage (" + p.item_id + ", " + p.passage_id + ")");
      if (!seen.insert(p.item_id + '\x1f' + p.passage_id).second)
        throw DataError("duplicate passage key (" + p.item_id + ", " + p.passage_id + ")");

      auto [it, inserted] = slot.try_emplace(p.item_id, items.size());
      if (inserted) items.push_back(Item{p.item_id, std::move(name), {}});
      items[it->second].passages.push_back(std::move(p));
    } catch (const DataError& e) {
      throw DataError(where(path, line) + e.what());
    }
  });
  return items;
}

void save_corpus(const std::vector<Item>& corpus, const fs::path& path) {
  auto out = jsonl::open_for_write(path);
  for (const auto& item : corpus)
    for (const auto& p : item.passages)
      out << json{{"item_id", item.item_id},
                  {"item_name", item.name},
                  {"passage_id", p.passage_id},
                  {"text", p.text}}
                 .dump()
          << '\n';
}

std::vector<Query> load_queries(const fs::path& path) {
  std::vector<Query> queries;
  std::unordered_set<std::string> seen;
  jsonl::for_each(path, [&](const json& rec, std::size_t line) {
    try {
      Query q{jsonl::require_string(rec, "query_id"), jsonl::require_string(rec, "text")};
      if (blank(q.text)) throw DataError("empty text for query " + q.query_id);
      if (!seen.insert(q.query_id).second) throw DataError("duplicate query id " + q.query_id);
      queries.push_back(std::move(q));
    } catch (const DataError& e) {
      throw DataError(where(path, line) + e.what());
    }
  });
  return queries;
}

void save_queries(const std::vector<Query>& queries, const fs::path& path) {
  auto out = jsonl::open_for_write(path);
  for (const auto& q : queries) out << json{{"query_id", q.query_id}, {"text", q.text}}.dump() << '\n';
}

namespace {

Qrels load_qrels_impl(const fs::path& path, const Dataset* dataset) {
  Qrels qrels;
  jsonl::for_each(path, [&](const json& rec, std::size_t line) {
    try {
      auto qid = jsonl::require_string(rec, "query_id");
      auto iid = jsonl::require_string(rec, "item_id");
      auto label = rec.find("label");
      if (label == rec.end() || !label->is_number_integer())
        throw DataError("missing integer field \"label\"");
      const auto value = label->get<long long>();
      if (value != 0 && value != 1) throw DataError("label must be 0 or 1, got " + std::to_string(value));
      if (dataset) {
        if (!dataset->find_query(qid)) throw DataError("unknown query " + qid);
        if (!dataset->find_item(iid)) throw DataError("unknown item " + iid);
      }
      if (value == 1) qrels[qid].insert(iid);
    } catch (const DataError& e) {
      throw DataError(where(path, line) + e.what());
    }
  });
  return qrels;
}

}  // namespace

Qrels load_qrels(const fs::path& path) { return load_qrels_impl(path, nullptr); }

Qrels load_qrels(const fs::path& path, const Dataset& dataset) { return load_qrels_impl(path, &dataset); }

void save_qrels(const Qrels& qrels, const fs::path& path) {
  auto out = jsonl::open_for_write(path);
  for (const auto& [qid, items] : qrels)
    for (const auto& iid : items)
      out << json{{"query_id", qid}, {"item_id", iid}, {"label", 1}}.dump() << '\n';
}

Manifest load_manifest(const fs::path& path) {
  json j;
  try {
    j = json::parse(jsonl::read_file(path));
    Manifest m;
    m.name = j.value("name", std::string{});
    m.queries = j.at("queries").get<std::size_t>();
    m.items = j.at("items").get<std::size_t>();
    m.passages = j.at("passages").get<std::size_t>();
    m.labels = j.at("labels").get<std::size_t>();
    return m;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": bad manifest: " + e.what());
  }
}

void save_manifest(const Manifest& m, const fs::path& path) {
  json j{{"name", m.name}, {"queries", m.queries}, {"items", m.items},
         {"passages", m.passages}, {"labels", m.labels}};
  jsonl::write_file_atomic(path, j.dump(2) + "\n");
}

Manifest manifest_of(const Dataset& d) {
  return Manifest{d.name, d.queries.size(), d.corpus.size(), d.passage_count(), count_positive(d.qrels)};
}

Dataset load_dataset(const fs::path& dir) {
  Dataset d;
  d.name = dir.filename().string();
  if (d.name.empty()) d.name = dir.parent_path().filename().string();
  d.corpus = load_corpus(dir / "corpus.jsonl");
  d.queries = load_queries(dir / "queries.jsonl");
  if (fs::exists(dir / "qrels.jsonl")) d.qrels = load_qrels(dir / "qrels.jsonl", d);

  if (fs::exists(dir / "manifest.json")) {
    auto declared = load_manifest(dir / "manifest.json");
    if (!declared.name.empty()) d.name = declared.name;
    auto actual = manifest_of(d);
    auto check = [&](const char* what, std::size_t want, std::size_t got) {
      if (want != got)
        throw DataError(dir.string() + ": manifest declares " + std::to_string(want) + " " + what +
                        " but found " + std::to_string(got));
    };
    check("queries", declared.queries, actual.queries);
    check("items", declared.items, actual.items);
    check("passages", declared.passages, actual.passages);
    check("labels", declared.labels, actual.labels);
  }
  return d;
}

void save_dataset(const Dataset& d, const fs::path& dir) {
  fs::create_directories(dir);
  save_corpus(d.corpus, dir / "corpus.jsonl");
  save_queries(d.queries, dir / "queries.jsonl");
  save_qrels(d.qrels, dir / "qrels.jsonl");
  save_manifest(manifest_of(d), dir / "manifest.json");
}

ValidationReport validate(const Dataset& d) {
  ValidationReport report;
  auto add = [&](std::string kind, std::string detail) {
    report.issues.push_back({std::move(kind), std::move(detail)});
  };

  std::set<std::string> item_ids;
  std::set<std::pair<std::string, std::string>> passage_keys;
  for (const auto& item : d.corpus) {
    if (!item_ids.insert(item.item_id).second) add("duplicate_item", item.item_id);
    if (item.passages.empty()) add("empty_item", item.item_id);
    for (const auto& p : item.passages) {
      if (p.item_id != item.item_id)
        add("foreign_passage", p.passage_id + " carries item_id " + p.item_id + " inside " + item.item_id);
      if (!passage_keys.emplace(item.item_id, p.passage_id).second)
        add("duplicate_passage", item.item_id + "/" + p.passage_id);
      if (blank(p.text)) add("empty_passage", item.item_id + "/" + p.passage_id);
    }
  }

  std::set<std::string> query_ids;
  for (const auto& q : d.queries) {
    if (!query_ids.insert(q.query_id).second) add("duplicate_query", q.query_id);
    if (blank(q.text)) add("empty_query", q.query_id);
  }

  for (const auto& [qid, items] : d.qrels) {
    if (!query_ids.count(qid)) add("dangling_query", qid);
    for (const auto& iid : items)
      if (!item_ids.count(iid)) add("dangling_item", qid + " -> " + iid);
  }
  return report;
}

}  // namespace eqr
