#include <gtest/gtest.h>

#include "eqr/curation.hpp"
#include "eqr/error.hpp"
#include "eqr/llm.hpp"
#include "support.hpp"

using namespace eqr;
using eqr::testkit::TempDir;
using nlohmann::json;

namespace {

std::vector<int> repeat(std::initializer_list<std::pair<int, int>> runs) {
  std::vector<int> out;
  for (auto [value, count] : runs) out.insert(out.end(), count, value);
  return out;
}

struct SmallWorld {
  std::vector<Query> queries{{"q1", "family beach holiday"}, {"q2", "alpine hiking"}};
  std::vector<Item> corpus{testkit::make_item("i1", {"sandy beaches and calm water"}),
                           testkit::make_item("i2", {"glaciers and high trails"}),
                           testkit::make_item("i3", {"museums and galleries"})};
  json fixture{{"label",
                {{"q1::i1", "The passages match.\nVERDICT: 1"},
                 {"q2::i2", "Clearly relevant.\nVERDICT: 1"},
                 {"*", "Not a match.\nVERDICT: 0"}}}};
};

}  // namespace

TEST(CohensKappa, HandComputedConfusionMatrix) {
  // both 1: 20, a1 b0: 5, a0 b1: 10, both 0: 15
  const auto a = repeat({{1, 20}, {1, 5}, {0, 10}, {0, 15}});
  const auto b = repeat({{1, 20}, {0, 5}, {1, 10}, {0, 15}});
  const auto r = cohens_kappa(a, b);
  EXPECT_NEAR(r.observed, 0.7, 1e-12);
  EXPECT_NEAR(r.expected, 0.5, 1e-12);
  EXPECT_NEAR(r.kappa, 0.4, 1e-9);
  EXPECT_EQ(r.confusion[1][1], 20u);
  EXPECT_EQ(r.confusion[1][0], 5u);
  EXPECT_EQ(r.confusion[0][1], 10u);
  EXPECT_EQ(r.confusion[0][0], 15u);
  EXPECT_EQ(r.n_pairs, 50u);
  EXPECT_FALSE(r.degenerate);
}

TEST(CohensKappa, IdenticalMixedLabelsGiveOne) {
  const std::vector<int> a{1, 0, 0, 1, 1, 0, 1};
  EXPECT_NEAR(cohens_kappa(a, a).kappa, 1.0, 1e-12);
}

TEST(CohensKappa, ConstantAgreementIsOneByConvention) {
  const std::vector<int> ones(8, 1);
  const auto r = cohens_kappa(ones, ones);
  EXPECT_DOUBLE_EQ(r.kappa, 1.0);
  EXPECT_TRUE(r.degenerate);
}

TEST(CohensKappa, ErrorsOnBadInput) {
  EXPECT_THROW(cohens_kappa(std::vector<int>{1, 0}, std::vector<int>{1}), ConfigError);
  EXPECT_THROW(cohens_kappa(std::vector<int>{}, std::vector<int>{}), ConfigError);
  EXPECT_THROW(cohens_kappa(std::vector<int>{2}, std::vector<int>{1}), ConfigError);
}

TEST(CohensKappa, OneOnlyWhenVectorsAgree) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<int> a(2 + rng() % 20), b;
    for (auto& x : a) x = static_cast<int>(rng() % 2);
    b = a;
    if (trial % 2) b[rng() % b.size()] ^= 1;
    const double k = cohens_kappa(a, b).kappa;
    if (a == b)
      EXPECT_DOUBLE_EQ(k, 1.0);
    else
      EXPECT_LT(k, 1.0);
  }
}

TEST(CohensKappa, IndependentLabelsAverageNearZero) {
  std::mt19937_64 rng(99);
  std::bernoulli_distribution coin(0.4);
  double total = 0.0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    std::vector<int> a(500), b(500);
    for (auto& x : a) x = coin(rng);
    for (auto& x : b) x = coin(rng);
    total += cohens_kappa(a, b).kappa;
  }
  EXPECT_NEAR(total / trials, 0.0, 0.02);
}

TEST(ParseVerdict, BareDigitsAndVerdictLines) {
  EXPECT_EQ(parse_verdict("1"), 1);
  EXPECT_EQ(parse_verdict("  0.\n"), 0);
  EXPECT_EQ(parse_verdict("The item fits well.\nM=2, T=2\nVERDICT: 0"), 0);
  EXPECT_EQ(parse_verdict("verdict: 1 at first\nthen VERDICT: **0**"), 0);
  EXPECT_EQ(parse_verdict("I am not sure."), std::nullopt);
  EXPECT_EQ(parse_verdict(""), std::nullopt);
}

TEST(FormatPassages, TruncatesToTheByteBudget) {
  const auto item = testkit::make_item("x", {"aaaa", "bbbbbb", "cccc"});
  bool truncated = true;
  EXPECT_EQ(format_passages(item, 100, &truncated), "[1] aaaa\n[2] bbbbbb\n[3] cccc\n");
  EXPECT_FALSE(truncated);
  EXPECT_EQ(format_passages(item, 7, &truncated), "[1] aaaa\n[2] bbb\n");
  EXPECT_TRUE(truncated);
  EXPECT_EQ(format_passages(item, 4, &truncated), "[1] aaaa\n");
  EXPECT_TRUE(truncated);
}

TEST(RenderLabelPrompt, FillsAllPlaceholders) {
  LabelingConfig cfg;
  cfg.prompt = "{query}|{item_name}|{passages}";
  Item item = testkit::make_item("i1", {"one"});
  item.name = "Item One";
  bool truncated = false;
  EXPECT_EQ(render_label_prompt(cfg, {"q", "the query"}, item, &truncated), "the query|Item One|[1] one\n");
  const auto full = render_label_prompt(LabelingConfig{}, {"q", "the query"}, item, &truncated);
  EXPECT_EQ(full.find("{"), std::string::npos);
  EXPECT_NE(full.find("VERDICT"), std::string::npos);
  EXPECT_EQ(testkit::read_bytes(testkit::kSourceDir / "prompts" / "label.txt"), LabelingConfig::default_label_prompt());
}

TEST(LabelPair, RetriesOnceThenGivesUp) {
  ScriptedLlm llm(json{{"label", {{"q::i", json::array({"hmm", "VERDICT: 1"})}, {"q::j", "no idea"}}}});
  const Query q{"q", "text"};
  const auto ok = label_pair(q, testkit::make_item("i", {"p"}), llm, LabelingConfig{});
  ASSERT_TRUE(ok.record.has_value());
  EXPECT_EQ(ok.record->label, 1);
  EXPECT_EQ(ok.attempts, 2);
  EXPECT_EQ(ok.record->labeler, "llm:scripted-stub");
  const auto bad = label_pair(q, testkit::make_item("j", {"p"}), llm, LabelingConfig{});
  EXPECT_FALSE(bad.record.has_value());
  EXPECT_EQ(bad.attempts, 2);
}

TEST(BuildQrels, EnumeratesEveryPairAndKeepsPositives) {
  SmallWorld w;
  ScriptedLlm llm(w.fixture);
  TempDir tmp;
  const auto result = build_qrels(w.queries, w.corpus, llm, LabelingConfig{}, tmp / "labels.jsonl");
  EXPECT_EQ(result.labeled_now, 6u);
  EXPECT_EQ(load_label_log(tmp / "labels.jsonl").size(), 6u);
  EXPECT_EQ(result.qrels, (Qrels{{"q1", {"i1"}}, {"q2", {"i2"}}}));
  const auto records = load_label_log(tmp / "labels.jsonl");
  ASSERT_FALSE(records.front().raw_response_path.empty());
  EXPECT_TRUE(std::filesystem::exists(tmp / records.front().raw_response_path));
}

TEST(BuildQrels, ResumesAfterAnInterruption) {
  SmallWorld w;
  TempDir tmp;
  ScriptedLlm first(w.fixture);
  const auto half = build_qrels(w.queries, w.corpus, first, LabelingConfig{}, tmp / "labels.jsonl", 3);
  EXPECT_EQ(half.labeled_now, 3u);

  // Simulate a torn final line from a killed process.
  {
    std::ofstream out(tmp / "labels.jsonl", std::ios::app | std::ios::binary);
    out << R"({"query_id":"q2","item_id")";
  }
  ScriptedLlm second(w.fixture);
  const auto rest = build_qrels(w.queries, w.corpus, second, LabelingConfig{}, tmp / "labels.jsonl");
  EXPECT_EQ(rest.already_logged, 3u);
  EXPECT_EQ(rest.labeled_now, 3u);
  EXPECT_EQ(second.calls(), 3u);
  EXPECT_EQ(rest.qrels, (Qrels{{"q1", {"i1"}}, {"q2", {"i2"}}}));
}

TEST(BuildQrels, OutputIndependentOfEnumerationOrder) {
  SmallWorld w;
  TempDir a, b;
  ScriptedLlm la(w.fixture), lb(w.fixture);
  auto queries = w.queries;
  auto corpus = w.corpus;
  std::reverse(queries.begin(), queries.end());
  std::reverse(corpus.begin(), corpus.end());
  const auto ra = build_qrels(w.queries, w.corpus, la, LabelingConfig{}, a / "l.jsonl");
  const auto rb = build_qrels(queries, corpus, lb, LabelingConfig{}, b / "l.jsonl");
  EXPECT_EQ(ra.qrels, rb.qrels);
}

TEST(BuildQrels, UnparseablePairsAreCountedNotLogged) {
  SmallWorld w;
  w.fixture["label"]["q1::i3"] = "cannot decide";
  ScriptedLlm llm(w.fixture);
  TempDir tmp;
  const auto result = build_qrels(w.queries, w.corpus, llm, LabelingConfig{}, tmp / "l.jsonl");
  EXPECT_EQ(result.labeled_now, 5u);
  ASSERT_EQ(result.unlabeled.size(), 1u);
  EXPECT_EQ(result.unlabeled[0], (std::pair<std::string, std::string>{"q1", "i3"}));
}

TEST(BuildQrels, ReproducesItsLogDeterministically) {
  SmallWorld w;
  TempDir a, b;
  ScriptedLlm la(w.fixture), lb(w.fixture);
  LabelingConfig cfg;
  cfg.max_in_flight = 3;
  build_qrels(w.queries, w.corpus, la, cfg, a / "l.jsonl");
  build_qrels(w.queries, w.corpus, lb, cfg, b / "l.jsonl");
  EXPECT_EQ(testkit::read_bytes(a / "l.jsonl"), testkit::read_bytes(b / "l.jsonl"));
}

TEST(CompareLabels, MatchesPairsAcrossSources) {
  std::vector<LabelRecord> llm{{"q1", "a", 1, {}, "llm:x", ""}, {"q1", "b", 0, {}, "llm:x", ""},
                               {"q2", "a", 1, {}, "llm:x", ""}};
  std::vector<LabelRecord> human{{"q1", "a", 1, {}, "human:h", ""}, {"q1", "b", 1, {}, "human:h", ""},
                                 {"q3", "z", 0, {}, "human:h", ""}};
  const auto cmp = compare_labels(llm, human);
  EXPECT_EQ(cmp.matched, 2u);
  EXPECT_EQ(cmp.unmatched, 2u);
  EXPECT_EQ(cmp.overall.n_pairs, 2u);
  EXPECT_EQ(cmp.per_query.count("q1"), 1u);
}
