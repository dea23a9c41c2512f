#include "eqr/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <cstdio>
#include <sstream>

#include <spdlog/spdlog.h>

#include "eqr/concurrency.hpp"
#include "eqr/embedding_cache.hpp"
#include "eqr/error.hpp"
#include "eqr/jsonl.hpp"

namespace eqr {

using nlohmann::json;
namespace fs = std::filesystem;

double precision_at_k(std::span<const std::string> ranking, const std::set<std::string>& relevant, std::size_t k) {
  if (k == 0) throw ConfigError("precision cutoff must be >= 1");
  const std::size_t depth = std::min(k, ranking.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < depth; ++i) hits += relevant.count(ranking[i]);
  return static_cast<double>(hits) / static_cast<double>(k);
}

double ndcg_at_k(std::span<const std::string> ranking, const std::set<std::string>& relevant, std::size_t k) {
  if (k == 0) throw ConfigError("ndcg cutoff must be >= 1");
  if (relevant.empty()) return 0.0;
  double dcg = 0.0;
  const std::size_t depth = std::min(k, ranking.size());
  for (std::size_t i = 0; i < depth; ++i)
    if (relevant.count(ranking[i])) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  double idcg = 0.0;
  const std::size_t ideal = std::min(k, relevant.size());
  for (std::size_t i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return dcg / idcg;
}

void MetricConfig::validate() const {
  if (cutoffs.empty()) throw ConfigError("at least one cutoff is required");
  for (std::size_t i = 0; i < cutoffs.size(); ++i) {
    if (cutoffs[i] == 0) throw ConfigError("cutoffs must be positive");
    if (i > 0 && cutoffs[i] <= cutoffs[i - 1]) throw ConfigError("cutoffs must be ascending and unique");
  }
  if (!ndcg && !precision) throw ConfigError("no metric selected");
}

std::vector<std::string> MetricConfig::metric_names() const {
  std::vector<std::string> names;
  if (ndcg)
    for (auto k : cutoffs) names.push_back("ndcg@" + std::to_string(k));
  if (precision)
    for (auto k : cutoffs) names.push_back("p@" + std::to_string(k));
  return names;
}

MetricValues evaluate_ranking(std::span<const std::string> ranking, const std::set<std::string>& relevant,
                              const MetricConfig& config) {
  MetricValues v;
  for (auto k : config.cutoffs) {
    if (config.ndcg) v["ndcg@" + std::to_string(k)] = ndcg_at_k(ranking, relevant, k);
    if (config.precision) v["p@" + std::to_string(k)] = precision_at_k(ranking, relevant, k);
  }
  return v;
}

MetricValues macro_average(const std::map<std::string, MetricValues>& per_query, const MetricConfig& config) {
  MetricValues macro;
  for (const auto& name : config.metric_names()) {
    double sum = 0.0;
    for (const auto& [qid, values] : per_query) sum += values.at(name);
    macro[name] = per_query.empty() ? 0.0 : sum / static_cast<double>(per_query.size());
  }
  return macro;
}

json to_json(const MetricsReport& r) {
  return json{{"dataset", r.dataset},
              {"method", r.method},
              {"encoder", r.encoder},
              {"n", r.n},
              {"averaging", "macro over queries"},
              {"macro", r.macro},
              {"per_query", r.per_query},
              {"empty_relevant", r.empty_relevant},
              {"failed", r.failed}};
}

json to_json(const AblationReport& r) {
  json per_n = json::object();
  for (const auto& [n, values] : r.per_n) per_n[std::to_string(n)] = values;
  json per_query = json::object();
  for (const auto& [n, queries] : r.per_n_queries) per_query[std::to_string(n)] = queries;
  return json{{"dataset", r.dataset},       {"method", r.method},   {"encoder", r.encoder},
              {"n_values", r.n_values},     {"per_n", per_n},       {"per_n_queries", per_query},
              {"averaging", "macro over queries"}, {"failed", r.failed}};
}

std::string path_safe(const std::string& name) {
  std::string out;
  for (unsigned char c : name) out.push_back(std::isalnum(c) || c == '-' || c == '_' || c == '.' ? c : '_');
  return out.empty() ? "_" : out;
}

PassageIndex index_for(const Dataset& dataset, EmbeddingProvider& encoder, const fs::path& cache_root) {
  if (cache_root.empty()) return build_index(dataset.corpus, encoder, nullptr);
  const auto fp = encoder.fingerprint();
  EmbeddingCache cache(cache_root / (path_safe(fp.model_name) + "-" + std::to_string(fp.dim)), fp);
  return build_index(dataset.corpus, encoder, &cache);
}

namespace {

std::string format_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

const std::set<std::string>& relevant_for(const Dataset& d, const std::string& qid) {
  static const std::set<std::string> kNone;
  auto it = d.qrels.find(qid);
  return it == d.qrels.end() ? kNone : it->second;
}

struct Reformulation {
  std::optional<ReformulatedQuery> value;
  std::string error;
};

std::vector<Reformulation> reformulate_all(const Dataset& d, const QRMethod& method, const Reformulator& reformulator) {
  std::vector<Reformulation> out(d.queries.size());
  const std::size_t workers = method.kind == QRMethodKind::kNoQR ? 1 : std::min<std::size_t>(8, d.queries.size());
  parallel_blocks(d.queries.size(), workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      try {
        out[i].value = reformulator.reformulate(d.queries[i], method);
      } catch (const ProviderError& e) {
        out[i].error = e.what();
      } catch (const ParseError& e) {
        out[i].error = e.what();
      }
    }
  });
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!out[i].value) spdlog::warn("query {} failed under {}: {}", d.queries[i].query_id, method.id(), out[i].error);
  return out;
}

}  // namespace

std::string render_markdown_table(const std::string& dataset, const std::vector<MetricsReport>& reports,
                                  const MetricConfig& config) {
  std::vector<std::string> methods;
  std::vector<Fingerprint> encoders;
  for (const auto& r : reports) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    if (std::find(encoders.begin(), encoders.end(), r.encoder) == encoders.end()) encoders.push_back(r.encoder);
  }
  const auto names = config.metric_names();

  auto find = [&](const std::string& method, const Fingerprint& enc) -> const MetricsReport* {
    for (const auto& r : reports)
      if (r.method == method && r.encoder == enc) return &r;
    return nullptr;
  };

  std::ostringstream md;
  md << "# " << dataset << "\n\n";
  md << "| Method |";
  for (const auto& enc : encoders)
    for (const auto& name : names) md << ' ' << enc.model_name << ' ' << name << " |";
  md << "\n|---|";
  for (std::size_t i = 0; i < encoders.size() * names.size(); ++i) md << "---:|";
  md << '\n';

  for (const auto& method : methods) {
    md << "| " << method << " |";
    for (const auto& enc : encoders) {
      for (const auto& name : names) {
        const auto* r = find(method, enc);
        if (!r) {
          md << " - |";
          continue;
        }
        const std::string cell = format_metric(r->macro.at(name));
        bool best = true;
        for (const auto& other : methods) {
          const auto* o = find(other, enc);
          if (o && std::stod(format_metric(o->macro.at(name))) > std::stod(cell)) best = false;
        }
        md << ' ' << (best ? "**" + cell + "**" : cell) << " |";
      }
    }
    md << '\n';
  }
  return md.str();
}

std::vector<MetricsReport> run_benchmark(const Dataset& dataset, std::span<EmbeddingProvider* const> encoders,
                                         const Reformulator& reformulator, const BenchmarkOptions& options) {
  options.metrics.validate();
  if (options.n == 0) throw ConfigError("n must be >= 1");
  if (encoders.empty()) throw ConfigError("at least one encoder is required");

  std::vector<PassageIndex> indexes;
  for (auto* enc : encoders) indexes.push_back(index_for(dataset, *enc, options.cache_root));

  std::vector<MetricsReport> reports;
  for (const auto& method : options.methods) {
    const auto reformulated = reformulate_all(dataset, method, reformulator);

    for (std::size_t e = 0; e < encoders.size(); ++e) {
      auto& encoder = *encoders[e];
      MetricsReport report;
      report.dataset = dataset.name;
      report.method = method.id();
      report.encoder = encoder.fingerprint();
      report.n = options.n;
      const auto run_dir = options.out_dir / "runs" / path_safe(dataset.name) /
                           (path_safe(report.encoder.model_name) + "-" + std::to_string(report.encoder.dim)) / method.id();

      for (std::size_t qi = 0; qi < dataset.queries.size(); ++qi) {
        const auto& query = dataset.queries[qi];
        if (!reformulated[qi].value) {
          report.failed[query.query_id] = reformulated[qi].error;
          continue;
        }
        try {
          const Vector q = encoder.embed(reformulated[qi].value->text);
          const auto scores = score_passages(q, indexes[e]);
          const auto ranking = rank_from_scores(query.query_id, indexes[e], scores, options.n);
          write_run(ranking, run_dir / (path_safe(query.query_id) + ".jsonl"));
          const auto& relevant = relevant_for(dataset, query.query_id);
          if (relevant.empty()) report.empty_relevant.push_back(query.query_id);
          report.per_query[query.query_id] = evaluate_ranking(ranked_ids(ranking), relevant, options.metrics);
        } catch (const ProviderError& err) {
          spdlog::warn("query {} failed under {}/{}: {}", query.query_id, method.id(), encoder.fingerprint().to_string(),
                       err.what());
          report.failed[query.query_id] = err.what();
        }
      }
      if (!report.failed.empty())
        spdlog::warn("{} of {} queries excluded from the {} macro average", report.failed.size(),
                     dataset.queries.size(), method.id());
      report.macro = macro_average(report.per_query, options.metrics);
      reports.push_back(std::move(report));
    }
  }

  json doc{{"dataset", dataset.name},
           {"n", options.n},
           {"cutoffs", options.metrics.cutoffs},
           {"averaging", "macro over queries"},
           {"reports", json::array()}};
  for (const auto& r : reports) doc["reports"].push_back(to_json(r));
  const auto report_dir = options.out_dir / "reports";
  jsonl::write_file_atomic(report_dir / (path_safe(dataset.name) + ".json"), doc.dump(2) + "\n");
  jsonl::write_file_atomic(report_dir / (path_safe(dataset.name) + ".md"),
                           render_markdown_table(dataset.name, reports, options.metrics));
  return reports;
}

AblationReport ablation_topn(const Dataset& dataset, EmbeddingProvider& encoder, const Reformulator& reformulator,
                             const AblationOptions& options) {
  options.metrics.validate();
  if (options.n_values.empty()) throw ConfigError("n_values must not be empty");
  for (auto n : options.n_values)
    if (n == 0) throw ConfigError("n values must be positive");

  const auto index = index_for(dataset, encoder, options.cache_root);
  const auto reformulated = reformulate_all(dataset, options.method, reformulator);

  AblationReport report;
  report.dataset = dataset.name;
  report.method = options.method.id();
  report.encoder = encoder.fingerprint();
  report.n_values = options.n_values;

  const std::string stem = path_safe(dataset.name) + "_" + options.method.id();
  const auto ablation_dir = options.out_dir / "ablation";

  for (std::size_t qi = 0; qi < dataset.queries.size(); ++qi) {
    const auto& query = dataset.queries[qi];
    if (!reformulated[qi].value) {
      report.failed[query.query_id] = reformulated[qi].error;
      continue;
    }
    std::vector<double> scores;
    try {
      scores = score_passages(encoder.embed(reformulated[qi].value->text), index);
    } catch (const ProviderError& err) {
      report.failed[query.query_id] = err.what();
      continue;
    }
    const auto& relevant = relevant_for(dataset, query.query_id);
    for (auto n : options.n_values) {
      const auto ranking = rank_from_scores(query.query_id, index, scores, n);
      write_run(ranking, ablation_dir / stem / ("n" + std::to_string(n)) / (path_safe(query.query_id) + ".jsonl"));
      report.per_n_queries[n][query.query_id] = evaluate_ranking(ranked_ids(ranking), relevant, options.metrics);
    }
  }
  for (auto n : options.n_values) report.per_n[n] = macro_average(report.per_n_queries[n], options.metrics);

  jsonl::write_file_atomic(ablation_dir / (stem + ".json"), to_json(report).dump(2) + "\n");
  return report;
}

MetricValues macro_from_runs(const fs::path& run_dir, const Qrels& qrels, const MetricConfig& config) {
  static const std::set<std::string> kNone;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(run_dir))
    if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  std::map<std::string, MetricValues> per_query;
  for (const auto& f : files) {
    const auto run = read_run(f);
    auto it = qrels.find(run.query_id);
    per_query[run.query_id] = evaluate_ranking(ranked_ids(run), it == qrels.end() ? kNone : it->second, config);
  }
  return macro_average(per_query, config);
}

}  // namespace eqr
