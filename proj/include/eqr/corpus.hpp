#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace eqr {

struct Passage {
  std::string passage_id;
  std::string item_id;
  std::string text;

  bool operator==(const Passage&) const = default;
};

struct Item {
  std::string item_id;
  std::string name;
  std::vector<Passage> passages;

  bool operator==(const Item&) const = default;
};

struct Query {
  std::string query_id;
  std::string text;

  bool operator==(const Query&) const = default;
};

/// Binary relevance judgments. Only positive pairs are stored.
using Qrels = std::map<std::string, std::set<std::string>>;

std::size_t count_positive(const Qrels& qrels);

/// Declared dataset sizes, checked at load time.
struct Manifest {
  std::string name;
  std::size_t queries = 0;
  std::size_t items = 0;
  std::size_t passages = 0;
  std::size_t labels = 0;
};

struct Dataset {
  std::string name;
  std::vector<Item> corpus;
  std::vector<Query> queries;
  Qrels qrels;

  const Item* find_item(const std::string& item_id) const;
  const Query* find_query(const std::string& query_id) const;
  std::size_t passage_count() const;
};

struct ValidationIssue {
  std::string kind;  // "duplicate_item", "empty_item", "dangling_query", ...
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  bool ok() const { return issues.empty(); }
};

// Line-oriented JSON readers and writers. Readers throw DataError naming the
// offending line; I/O failures throw DataError as well.
std::vector<Item> load_corpus(const std::filesystem::path& path);
void save_corpus(const std::vector<Item>& corpus, const std::filesystem::path& path);

std::vector<Query> load_queries(const std::filesystem::path& path);
void save_queries(const std::vector<Query>& queries, const std::filesystem::path& path);

Qrels load_qrels(const std::filesystem::path& path);
/// Checks every reference against `dataset` in addition to the format checks.
Qrels load_qrels(const std::filesystem::path& path, const Dataset& dataset);
void save_qrels(const Qrels& qrels, const std::filesystem::path& path);

Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest manifest_of(const Dataset& dataset);

/// Loads corpus.jsonl, queries.jsonl, qrels.jsonl and (if present)
/// manifest.json from `dir`. Counts must agree with the manifest.
Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

/// Never throws on content problems; each one becomes a report entry.
ValidationReport validate(const Dataset& dataset);

}  // namespace eqr
