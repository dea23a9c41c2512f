#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "eqr/corpus.hpp"
#include "eqr/embedder.hpp"
#include "eqr/reformulator.hpp"
#include "eqr/retrieval.hpp"

namespace eqr {

class EmbeddingCache;

/// |top-k ∩ relevant| / k. The denominator stays k for short rankings.
double precision_at_k(std::span<const std::string> ranking, const std::set<std::string>& relevant, std::size_t k);

/// Binary-gain NDCG: sum over the top k of rel_i / log2(i + 1), divided by
/// the same sum for the ideal ordering. 0 when nothing is relevant.
double ndcg_at_k(std::span<const std::string> ranking, const std::set<std::string>& relevant, std::size_t k);

struct MetricConfig {
  std::vector<std::size_t> cutoffs{10, 30};
  bool ndcg = true;
  bool precision = true;

  /// Throws ConfigError unless cutoffs are positive, ascending and unique.
  void validate() const;
  /// e.g. {"ndcg@10", "ndcg@30", "p@10", "p@30"}
  std::vector<std::string> metric_names() const;
};

/// metric name ("ndcg@10", "p@30", ...) -> value
using MetricValues = std::map<std::string, double>;

MetricValues evaluate_ranking(std::span<const std::string> ranking, const std::set<std::string>& relevant,
                              const MetricConfig& config);

/// Arithmetic mean of each metric over `per_query`.
MetricValues macro_average(const std::map<std::string, MetricValues>& per_query, const MetricConfig& config);

struct MetricsReport {
  std::string dataset;
  std::string method;
  Fingerprint encoder;
  std::size_t n = 0;
  std::map<std::string, MetricValues> per_query;
  MetricValues macro;
  /// Queries without any relevant item; they score 0 and count in the mean.
  std::vector<std::string> empty_relevant;
  /// Queries whose pipeline failed, with the error; excluded from `macro`.
  std::map<std::string, std::string> failed;
};

nlohmann::json to_json(const MetricsReport& report);

struct BenchmarkOptions {
  std::vector<QRMethod> methods;
  std::size_t n = 50;
  MetricConfig metrics;
  /// Root for runs/ and reports/.
  std::filesystem::path out_dir;
  /// When set, passage vectors are cached under <cache_root>/<model>-<dim>/.
  std::filesystem::path cache_root;
};

/// One report per (method, encoder). Reformulations are computed once per
/// (method, query) and shared across encoders. Writes
///   runs/<dataset>/<encoder>/<method>/<query_id>.jsonl
///   reports/<dataset>.json and reports/<dataset>.md
std::vector<MetricsReport> run_benchmark(const Dataset& dataset, std::span<EmbeddingProvider* const> encoders,
                                         const Reformulator& reformulator, const BenchmarkOptions& options);

/// Markdown grid with methods as rows and (encoder, metric) columns; the best
/// value in each column is bold.
std::string render_markdown_table(const std::string& dataset, const std::vector<MetricsReport>& reports,
                                  const MetricConfig& config);

struct AblationReport {
  std::string dataset;
  std::string method;
  Fingerprint encoder;
  std::vector<std::size_t> n_values;
  std::map<std::size_t, MetricValues> per_n;
  std::map<std::size_t, std::map<std::string, MetricValues>> per_n_queries;
  std::map<std::string, std::string> failed;
};

nlohmann::json to_json(const AblationReport& report);

struct AblationOptions {
  QRMethod method;
  std::vector<std::size_t> n_values{1, 5, 10, 50};
  MetricConfig metrics;
  std::filesystem::path out_dir;
  std::filesystem::path cache_root;
};

/// Sweeps the top-n aggregation size. Reformulation, query embedding and
/// passage scoring happen once per query; only aggregation is redone per n.
/// Writes ablation/<dataset>_<method>.json and the per-n rankings under
/// ablation/<dataset>_<method>/n<value>/<query_id>.jsonl.
AblationReport ablation_topn(const Dataset& dataset, EmbeddingProvider& encoder, const Reformulator& reformulator,
                             const AblationOptions& options);

/// Recomputes per-query metrics from a directory of run files and averages
/// them over the queries found there.
MetricValues macro_from_runs(const std::filesystem::path& run_dir, const Qrels& qrels, const MetricConfig& config);

/// Builds (or loads from cache) the passage index for `encoder`.
PassageIndex index_for(const Dataset& dataset, EmbeddingProvider& encoder, const std::filesystem::path& cache_root);

/// Filesystem-safe form of an identifier (used for encoder directory names).
std::string path_safe(const std::string& name);

}  // namespace eqr
