#include <gtest/gtest.h>

#include "eqr/corpus.hpp"
#include "eqr/error.hpp"
#include "support.hpp"

using namespace eqr;
using eqr::testkit::TempDir;
using eqr::testkit::write_text;

namespace {

Dataset small_dataset() {
  Dataset d;
  d.name = "small";
  d.corpus = {testkit::make_item("paris", {"Eiffel tower at night", "Cafes on the left bank"}),
              testkit::make_item("rome", {"The Colosseum and the Forum"})};
  d.queries = {{"q1", "romantic city break"}, {"q2", "ancient ruins"}};
  d.qrels = {{"q1", {"paris"}}, {"q2", {"rome"}}};
  return d;
}

}  // namespace

TEST(LoadCorpus, GroupsPassagesByItemInFileOrder) {
  TempDir tmp;
  write_text(tmp / "corpus.jsonl",
             R"({"item_id":"paris","item_name":"Paris","passage_id":"a","text":"first"})" "\n"
             R"({"item_id":"rome","item_name":"Rome","passage_id":"a","text":"second"})" "\n"
             R"({"item_id":"paris","item_name":"Paris","passage_id":"b","text":"third"})" "\n");
  const auto corpus = load_corpus(tmp / "corpus.jsonl");
  ASSERT_EQ(corpus.size(), 2u);
  EXPECT_EQ(corpus[0].item_id, "paris");
  EXPECT_EQ(corpus[0].name, "Paris");
  ASSERT_EQ(corpus[0].passages.size(), 2u);
  EXPECT_EQ(corpus[0].passages[0].text, "first");
  EXPECT_EQ(corpus[0].passages[1].text, "third");
  EXPECT_EQ(corpus[1].passages.size(), 1u);
}

TEST(LoadCorpus, DuplicatePassageKeyNamesTheKey) {
  TempDir tmp;
  write_text(tmp / "corpus.jsonl",
             R"({"item_id":"paris","passage_id":"a","text":"one"})" "\n"
             R"({"item_id":"paris","passage_id":"a","text":"two"})" "\n");
  try {
    load_corpus(tmp / "corpus.jsonl");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(paris, a)"), std::string::npos) << msg;
    EXPECT_NE(msg.find(":2:"), std::string::npos) << msg;
  }
}

TEST(LoadCorpus, RejectsBlankTextAndMissingFields) {
  TempDir tmp;
  write_text(tmp / "blank.jsonl", R"({"item_id":"x","passage_id":"a","text":"   "})" "\n");
  EXPECT_THROW(load_corpus(tmp / "blank.jsonl"), DataError);
  write_text(tmp / "missing.jsonl", R"({"item_id":"x","text":"hello"})" "\n");
  EXPECT_THROW(load_corpus(tmp / "missing.jsonl"), DataError);
  write_text(tmp / "broken.jsonl", "{not json\n");
  EXPECT_THROW(load_corpus(tmp / "broken.jsonl"), DataError);
}

TEST(LoadCorpus, MissingFileIsAnError) {
  EXPECT_THROW(load_corpus("/nonexistent/corpus.jsonl"), DataError);
}

TEST(LoadQrels, KeepsOnlyPositiveLabels) {
  TempDir tmp;
  write_text(tmp / "qrels.jsonl",
             R"({"query_id":"q1","item_id":"i1","label":1})" "\n"
             R"({"query_id":"q1","item_id":"i2","label":0})" "\n");
  const auto qrels = load_qrels(tmp / "qrels.jsonl");
  EXPECT_EQ(qrels, (Qrels{{"q1", {"i1"}}}));
}

TEST(LoadQrels, EmptyFileGivesEmptyQrels) {
  TempDir tmp;
  write_text(tmp / "qrels.jsonl", "");
  EXPECT_TRUE(load_qrels(tmp / "qrels.jsonl").empty());
}

TEST(LoadQrels, RejectsNonBinaryLabels) {
  TempDir tmp;
  write_text(tmp / "qrels.jsonl", R"({"query_id":"q1","item_id":"i1","label":2})" "\n");
  EXPECT_THROW(load_qrels(tmp / "qrels.jsonl"), DataError);
}

TEST(LoadQrels, CheckedAgainstDatasetRejectsUnknownIds) {
  TempDir tmp;
  const auto d = small_dataset();
  write_text(tmp / "qrels.jsonl", R"({"query_id":"q1","item_id":"berlin","label":1})" "\n");
  EXPECT_THROW(load_qrels(tmp / "qrels.jsonl", d), DataError);
}

TEST(Validate, ConsistentDatasetIsOk) {
  EXPECT_TRUE(validate(small_dataset()).ok());
}

TEST(Validate, QrelsWithUnknownItemGiveOneIssue) {
  auto d = small_dataset();
  d.qrels["q1"].insert("berlin");
  const auto report = validate(d);
  ASSERT_EQ(report.issues.size(), 1u);
  EXPECT_EQ(report.issues[0].kind, "dangling_item");
}

TEST(Validate, ItemWithoutPassagesGivesOneIssue) {
  auto d = small_dataset();
  d.corpus.push_back(Item{"oslo", "Oslo", {}});
  const auto report = validate(d);
  ASSERT_EQ(report.issues.size(), 1u);
  EXPECT_EQ(report.issues[0].kind, "empty_item");
}

TEST(Validate, CollectsEveryProblemWithoutThrowing) {
  auto d = small_dataset();
  d.corpus.push_back(d.corpus.front());
  d.queries.push_back({"q1", " "});
  d.qrels["q9"].insert("paris");
  const auto report = validate(d);
  std::set<std::string> kinds;
  for (const auto& issue : report.issues) kinds.insert(issue.kind);
  EXPECT_TRUE(kinds.count("duplicate_item"));
  EXPECT_TRUE(kinds.count("duplicate_query"));
  EXPECT_TRUE(kinds.count("empty_query"));
  EXPECT_TRUE(kinds.count("dangling_query"));
}

TEST(RoundTrip, SaveThenLoadIsIdentity) {
  TempDir tmp;
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    Dataset d;
    d.name = "rt";
    const int items = 1 + static_cast<int>(rng() % 6);
    for (int i = 0; i < items; ++i) {
      std::vector<std::string> texts;
      const int m = 1 + static_cast<int>(rng() % 5);
      for (int j = 0; j < m; ++j) texts.push_back(testkit::random_text(rng, 1 + rng() % 8) + " \"quoted\" ü");
      d.corpus.push_back(testkit::make_item("item" + std::to_string(i), texts));
      d.corpus.back().name = "Item " + std::to_string(i);
    }
    d.queries = {{"q1", testkit::random_text(rng, 4)}};
    d.qrels["q1"].insert("item0");

    const auto dir = tmp / ("trial" + std::to_string(trial));
    save_dataset(d, dir);
    const auto loaded = load_dataset(dir);
    EXPECT_EQ(loaded.name, d.name);
    EXPECT_EQ(loaded.corpus, d.corpus);
    EXPECT_EQ(loaded.queries, d.queries);
    EXPECT_EQ(loaded.qrels, d.qrels);
  }
}

TEST(Manifest, CountMismatchIsRejected) {
  TempDir tmp;
  auto d = small_dataset();
  save_dataset(d, tmp / "ds");
  auto m = manifest_of(d);
  m.passages += 1;
  save_manifest(m, tmp / "ds" / "manifest.json");
  EXPECT_THROW(load_dataset(tmp / "ds"), DataError);
}

TEST(Manifest, ShippedSyntheticDatasetMatchesItsManifest) {
  const auto d = load_dataset(testkit::kSyntheticDir);
  EXPECT_EQ(d.name, "synthetic-travel");
  const auto m = load_manifest(testkit::kSyntheticDir / "manifest.json");
  const auto actual = manifest_of(d);
  EXPECT_EQ(actual.items, m.items);
  EXPECT_EQ(actual.passages, m.passages);
  EXPECT_EQ(actual.queries, m.queries);
  EXPECT_EQ(actual.labels, m.labels);
  EXPECT_TRUE(validate(d).ok());
}
