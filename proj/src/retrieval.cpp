#include "eqr/retrieval.hpp"

#include <algorithm>
#include <numeric>

#include "eqr/concurrency.hpp"
#include "eqr/error.hpp"
#include "eqr/jsonl.hpp"

namespace eqr {

using nlohmann::json;

namespace {
// Below this many rows a single thread wins.
constexpr std::size_t kParallelThreshold = 16384;
}

std::vector<double> score_passages(std::span<const double> query, const PassageIndex& index, std::size_t workers) {
  if (query.size() != index.dim())
    throw Error("query dim " + std::to_string(query.size()) + " != index dim " + std::to_string(index.dim()));
  std::vector<double> scores(index.size());
  const std::size_t dim = index.dim();
  const double* rows = index.values().data();
  const double* q = query.data();

  if (workers == 0) workers = default_workers();
  if (index.size() < kParallelThreshold) workers = 1;
  parallel_blocks(index.size(), workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) scores[i] = dot(q, rows + i * dim, dim);
  });
  return scores;
}

std::vector<PassageScore> score_passages(const std::string& query_text, const PassageIndex& index,
                                         EmbeddingProvider& provider) {
  index.check_fingerprint(provider.fingerprint());
  if (index.empty()) return {};
  const Vector q = provider.embed(query_text);
  const auto raw = score_passages(q, index);
  std::vector<PassageScore> out;
  out.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out.push_back({index.ref(i).item_id, index.ref(i).passage_id, raw[i]});
  return out;
}

ItemScore aggregate_item(std::string item_id, std::span<const double> scores,
                         std::span<const std::string> passage_ids, std::size_t n) {
  if (scores.empty()) throw Error("aggregate_item: item " + item_id + " has no passage scores");
  if (n == 0) throw Error("aggregate_item: n must be >= 1");
  if (passage_ids.size() != scores.size()) throw Error("aggregate_item: ids and scores differ in length");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto better = [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); };

  const std::size_t take = std::min(n, scores.size());
  // Linear-time selection of the top `take`, then order just that slice so
  // the sum is accumulated best-first.
  if (take < order.size())
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), better);
  std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), better);

  ItemScore out;
  out.item_id = std::move(item_id);
  double sum = 0.0;
  for (std::size_t j = 0; j < take; ++j) {
    sum += scores[order[j]];
    out.contributing.push_back(passage_ids[order[j]]);
    out.contributing_scores.push_back(scores[order[j]]);
  }
  out.score = sum / static_cast<double>(take);
  return out;
}

ItemScore aggregate_item(std::span<const PassageScore> scores, std::size_t n) {
  if (scores.empty()) throw Error("aggregate_item: empty score list");
  std::vector<double> values;
  std::vector<std::string> ids;
  for (const auto& s : scores) {
    if (s.item_id != scores.front().item_id) throw Error("aggregate_item: scores span several items");
    values.push_back(s.score);
    ids.push_back(s.passage_id);
  }
  return aggregate_item(scores.front().item_id, values, ids, n);
}

RankedList rank_from_scores(std::string query_id, const PassageIndex& index, std::span<const double> scores,
                            std::size_t n) {
  if (scores.size() != index.size()) throw Error("rank_from_scores: one score per index entry required");
  RankedList list{std::move(query_id), {}};
  list.entries.reserve(index.items().size());
  std::vector<std::string> ids;
  for (const auto& range : index.items()) {
    ids.clear();
    for (std::size_t i = range.begin; i < range.end; ++i) ids.push_back(index.ref(i).passage_id);
    list.entries.push_back(aggregate_item(range.item_id, scores.subspan(range.begin, range.size()), ids, n));
  }
  std::sort(list.entries.begin(), list.entries.end(), [](const ItemScore& a, const ItemScore& b) {
    return a.score > b.score || (a.score == b.score && a.item_id < b.item_id);
  });
  return list;
}

RankResult rank_items(const Query& query, const QRMethod& method, const PassageIndex& index, std::size_t n,
                      const Reformulator& reformulator, EmbeddingProvider& provider) {
  if (n == 0) throw ConfigError("n must be >= 1");
  index.check_fingerprint(provider.fingerprint());
  RankResult result{reformulator.reformulate(query, method), {}};
  if (index.empty()) {
    result.ranking.query_id = query.query_id;
    return result;
  }
  const Vector q = provider.embed(result.reformulation.text);
  const auto scores = score_passages(q, index);
  result.ranking = rank_from_scores(query.query_id, index, scores, n);
  return result;
}

void write_run(const RankedList& ranking, const std::filesystem::path& path) {
  std::string body;
  for (std::size_t r = 0; r < ranking.entries.size(); ++r) {
    const auto& e = ranking.entries[r];
    body += json{{"rank", r + 1}, {"item_id", e.item_id}, {"score", e.score}, {"contributing_passages", e.contributing}}
                .dump();
    body += '\n';
  }
  jsonl::write_file_atomic(path, body);
}

RankedList read_run(const std::filesystem::path& path) {
  RankedList list;
  list.query_id = path.stem().string();
  jsonl::for_each(path, [&](const json& rec, std::size_t line) {
    try {
      ItemScore e;
      e.item_id = rec.at("item_id").get<std::string>();
      e.score = rec.at("score").get<double>();
      e.contributing = rec.at("contributing_passages").get<std::vector<std::string>>();
      if (rec.at("rank").get<std::size_t>() != list.entries.size() + 1) throw DataError("ranks out of order");
      list.entries.push_back(std::move(e));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return list;
}

std::vector<std::string> ranked_ids(const RankedList& ranking) {
  std::vector<std::string> ids;
  ids.reserve(ranking.entries.size());
  for (const auto& e : ranking.entries) ids.push_back(e.item_id);
  return ids;
}

}  // namespace eqr
