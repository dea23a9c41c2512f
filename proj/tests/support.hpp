#pragma once

// Shared fixtures for the unit and acceptance tests: scratch directories, a
// planted-relevance dataset, and brute-force reference implementations that
// do not reuse any library scoring or metric code.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "eqr/corpus.hpp"
#include "eqr/embedder.hpp"

namespace eqr::testkit {

inline const std::filesystem::path kSourceDir = EQR_SOURCE_DIR;
inline const std::filesystem::path kSyntheticDir = kSourceDir / "data" / "synthetic";

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("eqr-test-" + std::to_string(stamp) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Item make_item(const std::string& id, const std::vector<std::string>& texts) {
  Item item{id, id, {}};
  for (std::size_t i = 0; i < texts.size(); ++i) item.passages.push_back({"p" + std::to_string(i + 1), id, texts[i]});
  return item;
}

// Two queries, four relevant items each, twelve distractors. Relevant passages
// use a vocabulary that appears only in the scripted EQR elaborations, while
// distractor passages repeat the query words.
struct Planted {
  Dataset dataset;
  nlohmann::json fixture;
};

inline Planted planted_dataset() {
  const std::vector<std::string> alpine = {"glacier", "summit", "ridge", "crampon", "icefall",
                                           "couloir", "bivouac", "serac", "moraine", "cornice"};
  const std::vector<std::string> beach = {"lagoon", "hammock", "coconut", "snorkel", "reef",
                                          "seashell", "tidepool", "sandcastle", "driftwood", "palapa"};
  auto join = [](const std::vector<std::string>& words, std::size_t rotate, const std::string& extra) {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (!out.empty()) out += ' ';
      out += words[(i + rotate) % words.size()];
    }
    return out + " " + extra;
  };

  Planted p;
  p.dataset.name = "planted";
  p.dataset.queries = {{"pa", "top cities for adventure seekers"}, {"pb", "relaxing family holiday places"}};
  for (int i = 1; i <= 4; ++i) {
    const auto a = "alp" + std::to_string(i);
    const auto b = "bay" + std::to_string(i);
    p.dataset.corpus.push_back(make_item(a, {join(alpine, i, a), join(alpine, i + 3, a), join(alpine, i + 6, a)}));
    p.dataset.corpus.push_back(make_item(b, {join(beach, i, b), join(beach, i + 4, b)}));
    p.dataset.qrels["pa"].insert(a);
    p.dataset.qrels["pb"].insert(b);
  }
  const std::vector<std::string> noise = {"market", "tram", "museum", "bakery", "bridge", "harbor"};
  for (int i = 1; i <= 12; ++i) {
    char id[8];
    std::snprintf(id, sizeof id, "d%02d", i);
    const auto& w = noise[i % noise.size()];
    p.dataset.corpus.push_back(make_item(id, {"top cities for adventure seekers " + w,
                                              "relaxing family holiday places " + w + " " + id,
                                              "adventure seekers love " + w}));
  }
  std::sort(p.dataset.corpus.begin(), p.dataset.corpus.end(),
            [](const Item& x, const Item& y) { return x.item_id < y.item_id; });

  auto lines = [](const std::vector<std::string>& words, const std::string& t1, const std::string& t2) {
    std::string first, second;
    for (std::size_t i = 0; i < 5; ++i) first += (i ? " " : "") + words[i];
    for (std::size_t i = 5; i < 10; ++i) second += (i > 5 ? " " : "") + words[i];
    return t1 + " - " + first + "\n" + t2 + " - " + second;
  };
  p.fixture = {{"eqr",
                {{"pa", lines(alpine, "High Routes", "Alpine Camps")},
                 {"pb", lines(beach, "Lagoon Days", "Shoreline Play")}}}};
  return p;
}

// Reference item ranking: embed every passage independently, full sort of
// each item's passage scores, mean of the best min(n, m), full sort of items
// by (score desc, item_id asc).
struct ReferenceEntry {
  std::string item_id;
  double score;
};

inline std::vector<ReferenceEntry> reference_ranking(const std::vector<Item>& corpus, const Vector& query,
                                                     EmbeddingProvider& provider, std::size_t n) {
  std::vector<ReferenceEntry> out;
  for (const auto& item : corpus) {
    std::vector<double> scores;
    for (const auto& passage : item.passages) {
      const Vector v = provider.embed(passage.text);
      double s = 0.0;
      for (std::size_t d = 0; d < v.size(); ++d) s += query[d] * v[d];
      scores.push_back(s);
    }
    std::sort(scores.begin(), scores.end(), std::greater<>());
    const std::size_t take = std::min(n, scores.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < take; ++i) sum += scores[i];
    out.push_back({item.item_id, sum / static_cast<double>(take)});
  }
  std::sort(out.begin(), out.end(), [](const ReferenceEntry& a, const ReferenceEntry& b) {
    return a.score != b.score ? a.score > b.score : a.item_id < b.item_id;
  });
  return out;
}

// Binary DCG straight from the definition, positions counted from 1.
inline double reference_ndcg(const std::vector<std::string>& ranking, const std::set<std::string>& relevant,
                             std::size_t k) {
  if (relevant.empty()) return 0.0;
  double dcg = 0.0;
  for (std::size_t i = 0; i < ranking.size() && i < k; ++i)
    if (relevant.count(ranking[i])) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, relevant.size()); ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return dcg / idcg;
}

inline double reference_precision(const std::vector<std::string>& ranking, const std::set<std::string>& relevant,
                                  std::size_t k) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranking.size() && i < k; ++i) hits += relevant.count(ranking[i]);
  return static_cast<double>(hits) / static_cast<double>(k);
}

inline std::string random_text(std::mt19937_64& rng, std::size_t words) {
  static const std::vector<std::string> vocab = {
      "river", "castle", "beach",  "museum", "hiking", "market", "temple", "ski",    "wine",   "harbor",
      "desert", "jungle", "opera", "garden", "bridge", "island", "canyon", "lake",   "forest", "village",
      "night", "food",   "quiet", "family", "budget", "luxury", "surf",   "trail",  "festival", "history"};
  std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
  std::string out;
  for (std::size_t i = 0; i < words; ++i) {
    if (i) out += ' ';
    out += vocab[pick(rng)];
  }
  return out;
}

}  // namespace eqr::testkit
