#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "eqr/embedder.hpp"
#include "eqr/passage_index.hpp"
#include "eqr/reformulator.hpp"

namespace eqr {

struct PassageScore {
  std::string item_id;
  std::string passage_id;
  double score = 0.0;
};

struct ItemScore {
  std::string item_id;
  /// Mean of the contributing passage scores.
  double score = 0.0;
  /// The top-min(n, m) passages, best first.
  std::vector<std::string> contributing;
  std::vector<double> contributing_scores;
};

struct RankedList {
  std::string query_id;
  /// Descending by score; ties broken by ascending item_id.
  std::vector<ItemScore> entries;
};

/// Raw hot path: cosine of `query` against every index row, in index order.
/// The scan is split across `workers` threads (0 = hardware concurrency).
std::vector<double> score_passages(std::span<const double> query, const PassageIndex& index,
                                   std::size_t workers = 0);

/// Embeds `query_text` with `provider` and scores every passage.
/// Throws FingerprintMismatch if the index came from another encoder.
std::vector<PassageScore> score_passages(const std::string& query_text, const PassageIndex& index,
                                         EmbeddingProvider& provider);

/// Mean of the min(n, m) largest scores. Equal scores are taken in passage
/// order. Throws Error on an empty score list or n == 0.
ItemScore aggregate_item(std::string item_id, std::span<const double> scores,
                         std::span<const std::string> passage_ids, std::size_t n);
ItemScore aggregate_item(std::span<const PassageScore> scores, std::size_t n);

/// Aggregates every item of `index` from precomputed passage scores and sorts.
RankedList rank_from_scores(std::string query_id, const PassageIndex& index, std::span<const double> scores,
                            std::size_t n);

struct RankResult {
  ReformulatedQuery reformulation;
  RankedList ranking;
};

/// Full pipeline for one query: reformulate, embed q', score all passages,
/// aggregate per item with top-n mean, sort.
RankResult rank_items(const Query& query, const QRMethod& method, const PassageIndex& index, std::size_t n,
                      const Reformulator& reformulator, EmbeddingProvider& provider);

/// Run file: one JSON line per item, {"rank","item_id","score","contributing_passages"}.
void write_run(const RankedList& ranking, const std::filesystem::path& path);
RankedList read_run(const std::filesystem::path& path);

/// Item ids in ranked order.
std::vector<std::string> ranked_ids(const RankedList& ranking);

}  // namespace eqr
