// eqr: command-line entry point for recommendation, benchmarking, top-n
// ablation, relevance-label curation, index building and the HTTP service.

#include <algorithm>
#include <csignal>
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "eqr/config.hpp"
#include "eqr/curation.hpp"
#include "eqr/embedding_cache.hpp"
#include "eqr/error.hpp"
#include "eqr/evaluation.hpp"
#include "eqr/jsonl.hpp"
#include "eqr/recommender.hpp"
#include "eqr/server.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOptions {
  std::string config;
  std::string dataset;
  std::vector<std::string> methods;
  std::size_t n = 0;
  std::string encoder;
  std::int64_t seed = -1;
  std::string output_dir;
  int k = 0;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config, "JSON run configuration");
  cmd->add_option("--dataset", opts.dataset, "dataset directory (corpus/queries/qrels jsonl)");
  cmd->add_option("--method", opts.methods, "QR method (repeatable): noqr, q2e, query2doc, eqr")
      ->allow_extra_args(false);
  cmd->add_option("--n", opts.n, "passages averaged per item (top-n)");
  cmd->add_option("--encoder", opts.encoder, "model_name of the configured encoder to use");
  cmd->add_option("--seed", opts.seed, "seed for the deterministic encoder");
  cmd->add_option("--out", opts.output_dir, "output directory");
  cmd->add_option("--k", opts.k, "EQR subtopic count");
}

eqr::RunConfig resolve_config(const CommonOptions& opts) {
  eqr::RunConfig cfg = opts.config.empty() ? eqr::RunConfig{} : eqr::load_run_config(opts.config);
  if (!opts.dataset.empty()) cfg.dataset = opts.dataset;
  if (!opts.methods.empty()) cfg.methods = opts.methods;
  if (opts.n > 0) cfg.n = opts.n;
  if (opts.k > 0) cfg.eqr_k = opts.k;
  if (!opts.output_dir.empty()) cfg.output_dir = opts.output_dir;
  if (opts.seed >= 0)
    for (auto& e : cfg.encoders) e.seed = static_cast<std::uint64_t>(opts.seed);
  if (!opts.encoder.empty()) {
    auto it = std::find_if(cfg.encoders.begin(), cfg.encoders.end(),
                           [&](const auto& e) { return e.model_name == opts.encoder; });
    if (it == cfg.encoders.end()) throw eqr::ConfigError("no configured encoder named " + opts.encoder);
    cfg.encoders = {*it};
  }
  cfg.validate();
  return cfg;
}

int cmd_recommend(const CommonOptions& opts, const std::string& query, std::size_t top_k, bool as_json,
                  const std::string& json_out) {
  auto cfg = resolve_config(opts);
  eqr::Engine engine(cfg);
  eqr::RecommendRequest request;
  request.query = query;
  request.method = cfg.methods.size() == 1 ? cfg.methods.front() : "noqr";
  request.top_k = top_k;
  const auto response = engine.recommend(request);
  const auto body = eqr::to_json(response);
  if (!json_out.empty()) eqr::jsonl::write_file_atomic(json_out, body.dump(2) + "\n");
  if (as_json)
    std::cout << body.dump(2) << "\n";
  else
    std::cout << eqr::to_text(response);
  return 0;
}

int cmd_build_index(const CommonOptions& opts) {
  auto cfg = resolve_config(opts);
  const auto dataset = eqr::load_dataset(cfg.dataset);
  for (const auto& enc_cfg : cfg.encoders) {
    auto encoder = eqr::make_embedding_provider(enc_cfg);
    const auto fp = encoder->fingerprint();
    eqr::EmbeddingCache cache(cfg.effective_cache_dir() / (eqr::path_safe(fp.model_name) + "-" + std::to_string(fp.dim)),
                              fp);
    eqr::BuildStats stats;
    const auto index = eqr::build_index(dataset.corpus, *encoder, &cache, &stats);
    const auto path = eqr::Engine::index_path(cfg, dataset.name, fp);
    index.save(path);
    std::cout << path.string() << ": " << stats.passages << " passages, " << stats.cache_hits << " cached, "
              << stats.embedded << " embedded\n";
  }
  return 0;
}

int cmd_benchmark(const CommonOptions& opts) {
  auto cfg = resolve_config(opts);
  const auto dataset = eqr::load_dataset(cfg.dataset);
  std::vector<std::unique_ptr<eqr::EmbeddingProvider>> owned;
  std::vector<eqr::EmbeddingProvider*> encoders;
  for (const auto& e : cfg.encoders) {
    owned.push_back(eqr::make_embedding_provider(e));
    encoders.push_back(owned.back().get());
  }
  auto llm = eqr::maybe_make_llm(cfg.llm);
  eqr::Reformulator reformulator(cfg.reformulator_config(), llm.get());

  eqr::BenchmarkOptions options;
  options.methods = cfg.parsed_methods();
  options.n = cfg.n;
  options.metrics = cfg.metrics;
  options.out_dir = cfg.output_dir;
  options.cache_root = cfg.effective_cache_dir();
  const auto reports = eqr::run_benchmark(dataset, encoders, reformulator, options);

  std::cout << eqr::render_markdown_table(dataset.name, reports, cfg.metrics);
  std::cout << "\nwrote " << (cfg.output_dir / "reports" / (eqr::path_safe(dataset.name) + ".json")).string() << "\n";
  std::size_t failed = 0;
  for (const auto& r : reports) failed += r.failed.size();
  if (failed > 0) std::cerr << failed << " query runs failed and were excluded (see report)\n";
  return 0;
}

int cmd_ablate(const CommonOptions& opts, const std::vector<std::size_t>& n_values) {
  auto cfg = resolve_config(opts);
  if (!n_values.empty()) cfg.ablation_n = n_values;
  const auto dataset = eqr::load_dataset(cfg.dataset);
  auto encoder = eqr::make_embedding_provider(cfg.encoders.front());
  auto llm = eqr::maybe_make_llm(cfg.llm);
  eqr::Reformulator reformulator(cfg.reformulator_config(), llm.get());

  for (const auto& method : cfg.parsed_methods()) {
    eqr::AblationOptions options;
    options.method = method;
    options.n_values = cfg.ablation_n;
    options.metrics = cfg.metrics;
    options.out_dir = cfg.output_dir;
    options.cache_root = cfg.effective_cache_dir();
    const auto report = eqr::ablation_topn(dataset, *encoder, reformulator, options);
    std::cout << method.id() << ":\n";
    for (auto n : report.n_values) {
      std::cout << "  n=" << n;
      for (const auto& [name, value] : report.per_n.at(n)) std::cout << "  " << name << "=" << value;
      std::cout << "\n";
    }
  }
  return 0;
}

int cmd_curate(const CommonOptions& opts, std::size_t limit, const std::string& human) {
  auto cfg = resolve_config(opts);
  const auto dataset = eqr::load_dataset(cfg.dataset);
  auto llm = eqr::make_llm_client(cfg.label_llm);
  const auto log_path = cfg.effective_label_log(dataset.name);
  const auto result = eqr::build_qrels(dataset.queries, dataset.corpus, *llm, cfg.labeling, log_path, limit);

  const auto qrels_path = cfg.output_dir / "labels" / (dataset.name + ".qrels.jsonl");
  eqr::save_qrels(result.qrels, qrels_path);
  std::cout << "labeled " << result.labeled_now << " pairs (" << result.already_logged << " already in "
            << log_path.string() << "), " << eqr::count_positive(result.qrels) << " positives -> "
            << qrels_path.string() << "\n";

  const fs::path human_path = human.empty() ? cfg.human_labels : fs::path(human);
  if (!human_path.empty()) {
    const auto llm_labels = eqr::load_label_log(log_path);
    const auto human_labels = eqr::load_label_log(human_path);
    const auto cmp = eqr::compare_labels(llm_labels, human_labels);
    json report = eqr::to_json(cmp.overall);
    report["matched"] = cmp.matched;
    report["unmatched"] = cmp.unmatched;
    report["per_query"] = json::object();
    for (const auto& [qid, r] : cmp.per_query) report["per_query"][qid] = eqr::to_json(r);
    const auto out = cfg.output_dir / "labels" / (dataset.name + ".agreement.json");
    eqr::jsonl::write_file_atomic(out, report.dump(2) + "\n");
    std::cout << "cohen's kappa " << cmp.overall.kappa << " over " << cmp.matched << " pairs -> " << out.string()
              << "\n";
  }
  if (!result.unlabeled.empty()) {
    std::cerr << result.unlabeled.size() << " pairs could not be labeled\n";
    return 2;
  }
  return 0;
}

eqr::Service* g_service = nullptr;

int cmd_serve(const CommonOptions& opts, const std::string& host, int port) {
  auto cfg = resolve_config(opts);
  if (!host.empty()) cfg.host = host;
  if (port > 0) cfg.port = port;
  eqr::Engine engine(cfg);
  eqr::Service service(engine);
  g_service = &service;
  std::signal(SIGINT, [](int) {
    if (g_service) g_service->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_service) g_service->stop();
  });
  spdlog::info("serving {} on http://{}:{}", engine.dataset().name, cfg.host, cfg.port);
  if (!service.listen(cfg.host, cfg.port)) {
    std::cerr << "could not listen on " << cfg.host << ":" << cfg.port << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  // stdout is reserved for command output (--json in particular).
  spdlog::set_default_logger(spdlog::stderr_color_mt("eqr"));
  CLI::App app{"Natural-language recommendation with LLM query reformulation"};
  app.require_subcommand(1);

  CommonOptions recommend_opts, benchmark_opts, ablate_opts, curate_opts, index_opts, serve_opts;

  auto* recommend = app.add_subcommand("recommend", "rank items for one query");
  add_common(recommend, recommend_opts);
  std::string query;
  std::size_t top_k = 10;
  bool as_json = false;
  std::string json_out;
  recommend->add_option("query", query, "natural-language query")->required();
  recommend->add_option("--top-k", top_k, "results to show");
  recommend->add_flag("--json", as_json, "print the JSON response instead of text");
  recommend->add_option("--json-out", json_out, "also write the JSON response to this file");

  auto* benchmark = app.add_subcommand("benchmark", "compare QR methods across encoders");
  add_common(benchmark, benchmark_opts);

  auto* ablate = app.add_subcommand("ablate", "sweep the top-n aggregation size");
  add_common(ablate, ablate_opts);
  std::vector<std::size_t> n_values;
  ablate->add_option("--n-values", n_values, "n values to sweep (default 1 5 10 50)");

  auto* curate = app.add_subcommand("curate", "label query-item pairs with an LLM and build qrels");
  add_common(curate, curate_opts);
  std::size_t limit = 0;
  std::string human;
  curate->add_option("--limit", limit, "label at most this many new pairs");
  curate->add_option("--human", human, "human label file (LabelRecord jsonl) for Cohen's kappa");

  auto* build = app.add_subcommand("build-index", "embed the corpus and save the passage index");
  add_common(build, index_opts);

  auto* serve = app.add_subcommand("serve", "run the HTTP API");
  add_common(serve, serve_opts);
  std::string host;
  int port = 0;
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "port");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*recommend) return cmd_recommend(recommend_opts, query, top_k, as_json, json_out);
    if (*benchmark) return cmd_benchmark(benchmark_opts);
    if (*ablate) return cmd_ablate(ablate_opts, n_values);
    if (*curate) return cmd_curate(curate_opts, limit, human);
    if (*build) return cmd_build_index(index_opts);
    if (*serve) return cmd_serve(serve_opts, host, port);
  } catch (const eqr::ProviderError& e) {
    std::cerr << "provider error (" << e.error_class() << "): " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
