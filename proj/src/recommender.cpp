#include "eqr/recommender.hpp"

#include <cstdio>
#include <sstream>

#include <spdlog/spdlog.h>

#include "eqr/embedding_cache.hpp"
#include "eqr/error.hpp"

namespace eqr {

using nlohmann::json;
namespace fs = std::filesystem;

json to_json(const RecommendResponse& r) {
  json elaborations = json::array();
  for (const auto& e : r.reformulation.elaborations) elaborations.push_back({{"title", e.title}, {"body", e.body}});
  json results = json::array();
  for (const auto& item : r.results) {
    json passages = json::array();
    for (const auto& p : item.contributing)
      passages.push_back({{"passage_id", p.passage_id}, {"text", p.text}, {"score", p.score}});
    results.push_back({{"rank", item.rank},
                       {"item_id", item.item_id},
                       {"name", item.name},
                       {"score", item.score},
                       {"contributing_passages", passages}});
  }
  return json{{"query", r.reformulation.original.text},
              {"method", r.reformulation.method.id()},
              {"reformulation",
               {{"text", r.reformulation.text},
                {"segments", r.reformulation.segments},
                {"elaborations", elaborations},
                {"fell_back", r.reformulation.fell_back}}},
              {"results", results}};
}

std::string to_text(const RecommendResponse& r) {
  std::ostringstream out;
  out << "query:  " << r.reformulation.original.text << "\n";
  out << "method: " << r.reformulation.method.id() << "\n";
  if (r.reformulation.segments.empty()) {
    out << "reformulation: (none)\n";
  } else {
    out << "reformulation:\n";
    for (std::size_t i = 0; i < r.reformulation.segments.size(); ++i) {
      out << "  - ";
      if (i < r.reformulation.elaborations.size()) out << r.reformulation.elaborations[i].title << ": ";
      out << r.reformulation.segments[i] << "\n";
    }
  }
  out << "results:\n";
  char buf[64];
  for (const auto& item : r.results) {
    std::snprintf(buf, sizeof buf, "%3zu. %.4f  ", item.rank, item.score);
    out << buf << item.name << " [" << item.item_id << "]\n";
    for (const auto& p : item.contributing) {
      std::snprintf(buf, sizeof buf, "       %.4f  ", p.score);
      std::string snippet = p.text.substr(0, 100);
      if (p.text.size() > 100) snippet = truncate_utf8(p.text, 100) + "...";
      out << buf << snippet << "\n";
    }
  }
  return out.str();
}

std::unique_ptr<LlmClient> maybe_make_llm(const LlmProviderConfig& config) {
  if (config.kind != LlmProviderConfig::Kind::kRemoteHttp && config.fixture.empty()) return nullptr;
  return make_llm_client(config);
}

fs::path Engine::index_path(const RunConfig& config, const std::string& dataset_name, const Fingerprint& fp) {
  return config.output_dir / "index" / (dataset_name + "." + fp.model_name + "-" + std::to_string(fp.dim) + ".idx");
}

Engine::Engine(const RunConfig& config) : config_(config), permits_(config.max_in_flight) {
  config_.validate();
  dataset_ = load_dataset(config_.dataset);
  if (auto report = validate(dataset_); !report.ok())
    throw DataError("dataset " + dataset_.name + " failed validation: " + report.issues.front().kind + " " +
                    report.issues.front().detail);

  encoder_ = make_embedding_provider(config_.encoders.front());
  llm_ = maybe_make_llm(config_.llm);
  reformulator_ = std::make_unique<Reformulator>(config_.reformulator_config(), llm_.get());

  const auto path = index_path(config_, dataset_.name, encoder_->fingerprint());
  if (fs::exists(path)) {
    index_ = PassageIndex::load(path);
    index_.check_fingerprint(encoder_->fingerprint());
    if (index_.size() != dataset_.passage_count())
      throw DataError("index " + path.string() + " has " + std::to_string(index_.size()) + " entries but the corpus has " +
                      std::to_string(dataset_.passage_count()) + " passages; rebuild it");
  } else {
    index_ = index_for(dataset_, *encoder_, config_.effective_cache_dir());
    index_.save(path);
    spdlog::info("built index {} ({} passages)", path.string(), index_.size());
  }

  for (const auto& item : dataset_.corpus) {
    items_[item.item_id] = &item;
    for (const auto& p : item.passages) passages_[{item.item_id, p.passage_id}] = &p;
  }
}

RecommendResponse Engine::recommend(const RecommendRequest& request) const {
  if (request.query.empty()) throw ConfigError("query must not be empty");
  if (request.top_k == 0) throw ConfigError("top_k must be >= 1");
  const auto method = QRMethod::parse(request.method, request.k.value_or(config_.eqr_k));
  const std::size_t n = request.n.value_or(config_.n);

  // Dataset queries keep their ids so fixture and replay lookups hit.
  Query query{"adhoc", request.query};
  for (const auto& q : dataset_.queries)
    if (q.text == request.query) query.query_id = q.query_id;

  RankResult ranked;
  {
    PermitPool::Permit permit(permits_);
    ranked = rank_items(query, method, index_, n, *reformulator_, *encoder_);
  }

  RecommendResponse response{std::move(ranked.reformulation), {}};
  const std::size_t count = std::min(request.top_k, ranked.ranking.entries.size());
  for (std::size_t r = 0; r < count; ++r) {
    const auto& entry = ranked.ranking.entries[r];
    RecommendedItem item{r + 1, entry.item_id, items_.at(entry.item_id)->name, entry.score, {}};
    for (std::size_t j = 0; j < entry.contributing.size(); ++j) {
      const auto* p = passages_.at({entry.item_id, entry.contributing[j]});
      item.contributing.push_back({p->passage_id, p->text, entry.contributing_scores[j]});
    }
    response.results.push_back(std::move(item));
  }
  return response;
}

}  // namespace eqr
