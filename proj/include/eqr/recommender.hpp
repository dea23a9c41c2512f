#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "eqr/concurrency.hpp"
#include "eqr/config.hpp"
#include "eqr/corpus.hpp"
#include "eqr/embedder.hpp"
#include "eqr/llm.hpp"
#include "eqr/passage_index.hpp"
#include "eqr/reformulator.hpp"
#include "eqr/retrieval.hpp"

namespace eqr {

struct RecommendRequest {
  std::string query;
  std::string method = "noqr";
  std::optional<int> k;  // EQR subtopic count; config default when absent
  std::size_t top_k = 10;
  std::optional<std::size_t> n;  // aggregation size; config default when absent
};

struct ContributingPassage {
  std::string passage_id;
  std::string text;
  double score = 0.0;
};

struct RecommendedItem {
  std::size_t rank = 0;
  std::string item_id;
  std::string name;
  double score = 0.0;
  std::vector<ContributingPassage> contributing;
};

struct RecommendResponse {
  ReformulatedQuery reformulation;
  std::vector<RecommendedItem> results;
};

nlohmann::json to_json(const RecommendResponse& response);
/// Plain-text rendering for terminals.
std::string to_text(const RecommendResponse& response);

/// Loaded dataset, encoder, LLM and passage index shared by the CLI and the
/// HTTP service. All state is immutable after construction, so `recommend`
/// may be called from many threads; provider use is bounded by a permit pool.
class Engine {
 public:
  /// Loads the dataset and brings up the index. A saved index under
  /// <output_dir>/index/ is reused if its fingerprint matches the encoder,
  /// otherwise FingerprintMismatch is thrown; a missing one is built (via the
  /// embedding cache) and saved.
  explicit Engine(const RunConfig& config);

  RecommendResponse recommend(const RecommendRequest& request) const;

  const Dataset& dataset() const { return dataset_; }
  const PassageIndex& index() const { return index_; }
  EmbeddingProvider& encoder() const { return *encoder_; }
  const RunConfig& config() const { return config_; }

  /// Where the index for this dataset/encoder pair is stored.
  static std::filesystem::path index_path(const RunConfig& config, const std::string& dataset_name,
                                          const Fingerprint& fingerprint);

 private:
  RunConfig config_;
  Dataset dataset_;
  std::unique_ptr<EmbeddingProvider> encoder_;
  std::unique_ptr<LlmClient> llm_;
  std::unique_ptr<Reformulator> reformulator_;
  PassageIndex index_;
  std::map<std::string, const Item*> items_;
  std::map<std::pair<std::string, std::string>, const Passage*> passages_;
  mutable PermitPool permits_;
};

/// Builds the LLM client named by `config`, or null for a scripted stub
/// without a fixture (enough for NoQR-only use).
std::unique_ptr<LlmClient> maybe_make_llm(const LlmProviderConfig& config);

}  // namespace eqr
