#include <gtest/gtest.h>

#include <thread>

#include <httplib.h>

#include "eqr/error.hpp"
#include "eqr/llm.hpp"
#include "eqr/reformulator.hpp"
#include "support.hpp"

using namespace eqr;
using eqr::testkit::TempDir;
using nlohmann::json;

namespace {

const Query kAdventure{"q1", "Top cities for adventure seekers"};

const char* kThreeSubtopics =
    "Mountain Adventures - Hiking, climbing and skiing in alpine towns such as Queenstown.\n"
    "Water Sports - Rafting, surfing and diving in coastal cities such as Honolulu.\n"
    "Desert Safaris - Dune bashing and camel treks from cities such as Dubai.";

Reformulator with_stub(ScriptedLlm& llm, FallbackPolicy policy = FallbackPolicy::kRetryOnce) {
  ReformulatorConfig cfg;
  cfg.fallback = policy;
  return Reformulator(cfg, &llm);
}

}  // namespace

TEST(ConcatWithSep, ExpandsTheJoin) {
  EXPECT_EQ(concat_with_sep("q", {}), "q");
  const std::vector<std::string> ab{"a", "b"};
  EXPECT_EQ(concat_with_sep("q", ab), "q[SEP]a[SEP]b");
}

TEST(ConcatWithSep, SplittingRecoversQueryAndSegments) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::string q = testkit::random_text(rng, 1 + rng() % 5);
    std::vector<std::string> segments;
    for (std::size_t i = 0, n = rng() % 6; i < n; ++i) segments.push_back(testkit::random_text(rng, rng() % 7));
    const auto joined = concat_with_sep(q, segments);

    std::vector<std::string> parts;
    std::size_t start = 0;
    for (std::size_t pos; (pos = joined.find(kSep, start)) != std::string::npos; start = pos + kSep.size())
      parts.push_back(joined.substr(start, pos - start));
    parts.push_back(joined.substr(start));

    std::vector<std::string> expected{q};
    expected.insert(expected.end(), segments.begin(), segments.end());
    EXPECT_EQ(parts, expected);
  }
}

TEST(QRMethod, ParsesIdsAndRejectsUnknown) {
  EXPECT_EQ(QRMethod::parse("EQR", 3).kind, QRMethodKind::kEQR);
  EXPECT_EQ(QRMethod::parse("EQR", 3).k, 3);
  EXPECT_EQ(QRMethod::parse("q2d").id(), "query2doc");
  EXPECT_THROW(QRMethod::parse("bogus"), ConfigError);
  EXPECT_EQ(all_method_ids(), (std::vector<std::string>{"noqr", "q2e", "query2doc", "eqr"}));
}

TEST(ParseEqrOutput, TitledParagraphs) {
  const auto els = parse_eqr_output(kThreeSubtopics, 3);
  ASSERT_EQ(els.size(), 3u);
  EXPECT_EQ(els[0].title, "Mountain Adventures");
  EXPECT_EQ(els[1].title, "Water Sports");
  EXPECT_EQ(els[2].title, "Desert Safaris");
  EXPECT_EQ(els[2].body, "Dune bashing and camel treks from cities such as Dubai.");
}

TEST(ParseEqrOutput, FiveItemsKeepOrder) {
  const std::string raw =
      "1. **Nightlife** - Clubs and bars open late.\n"
      "2. **Hostels** - Cheap beds and social common rooms.\n"
      "3. **Street Food** - Night markets and food stalls.\n"
      "4. **Festivals** - Music festivals through the summer.\n"
      "5. **Outdoor Sports** - Kayaking, cycling and climbing.\n";
  const auto els = parse_eqr_output(raw, 5);
  ASSERT_EQ(els.size(), 5u);
  const std::vector<std::string> titles{"Nightlife", "Hostels", "Street Food", "Festivals", "Outdoor Sports"};
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(els[i].title, titles[i]);
  EXPECT_EQ(els[3].body, "Music festivals through the summer.");
}

TEST(ParseEqrOutput, HeadingLinesAndContinuations) {
  const std::string raw =
      "Here are the subtopics:\n"
      "\n"
      "**Mountain Adventures**\n"
      "Hiking and climbing in the Alps.\n"
      "Ski resorts in winter.\n"
      "Water Sports: Surfing and sailing.\n";
  const auto els = parse_eqr_output(raw, 2);
  ASSERT_EQ(els.size(), 2u);
  EXPECT_EQ(els[0].title, "Mountain Adventures");
  EXPECT_EQ(els[0].body, "Hiking and climbing in the Alps. Ski resorts in winter.");
  EXPECT_EQ(els[1].title, "Water Sports");
  EXPECT_EQ(els[1].body, "Surfing and sailing.");
}

TEST(ParseEqrOutput, FewerThanKIsAcceptedEmptyIsAnError) {
  EXPECT_EQ(parse_eqr_output("Only One - a single paragraph.", 5).size(), 1u);
  EXPECT_THROW(parse_eqr_output("", 3), ParseError);
  EXPECT_THROW(parse_eqr_output("   \n\n", 3), ParseError);
}

TEST(ParseQ2eOutput, SplitsOnSemicolonsOrLines) {
  EXPECT_EQ(parse_q2e_output("a; b ;c"), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(parse_q2e_output("- a\n- b\n"), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(parse_q2e_output("a, b"), (std::vector<std::string>{"a", "b"}));
  EXPECT_THROW(parse_q2e_output(" "), ParseError);
}

TEST(Reformulate, NoQrIsTheIdentity) {
  Reformulator r(ReformulatorConfig{}, nullptr);
  const Query q{"q2", "cities for youth-friendly activities"};
  const auto out = r.reformulate(q, QRMethod::parse("noqr"));
  EXPECT_EQ(out.text, q.text);
  EXPECT_TRUE(out.segments.empty());
  EXPECT_TRUE(out.prompt.empty());
}

TEST(Reformulate, Q2eAppendsKeywordsAfterQuery) {
  ScriptedLlm llm(json{{"q2e", {{"q1", "extreme sports; hiking trails; rock climbing; water sports; skydiving"}}}});
  const auto out = with_stub(llm).reformulate(kAdventure, QRMethod::parse("q2e"));
  const std::vector<std::string> keywords{"extreme sports", "hiking trails", "rock climbing", "water sports",
                                          "skydiving"};
  EXPECT_EQ(out.segments, keywords);
  EXPECT_EQ(out.text,
            "Top cities for adventure seekers; extreme sports; hiking trails; rock climbing; water sports; skydiving");
  EXPECT_NE(out.prompt.find("Top cities for adventure seekers"), std::string::npos);
}

TEST(Reformulate, Query2docAppendsPassage) {
  ScriptedLlm llm(json{{"query2doc", {{"q1", "  Queenstown is the adventure capital.  "}}}});
  const auto out = with_stub(llm).reformulate(kAdventure, QRMethod::parse("query2doc"));
  EXPECT_EQ(out.text, "Top cities for adventure seekers Queenstown is the adventure capital.");
}

TEST(Reformulate, EqrJoinsBodiesWithSep) {
  ScriptedLlm llm(json{{"eqr", {{"q1", kThreeSubtopics}}}});
  const auto out = with_stub(llm).reformulate(kAdventure, QRMethod::parse("eqr", 3));
  ASSERT_EQ(out.segments.size(), 3u);
  std::vector<std::string> bodies;
  for (const auto& e : parse_eqr_output(kThreeSubtopics, 3)) bodies.push_back(e.body);
  EXPECT_EQ(out.text, concat_with_sep(kAdventure.text, bodies));
  EXPECT_EQ(out.text.rfind(kAdventure.text + "[SEP]Hiking, climbing", 0), 0u);
  EXPECT_NE(out.prompt.find("List 3 distinct subtopics"), std::string::npos);
}

TEST(Reformulate, RetryOnceRecoversFromOneBadReply) {
  ScriptedLlm llm(json{{"eqr", {{"q1", json::array({"", kThreeSubtopics})}}}});
  const auto out = with_stub(llm).reformulate(kAdventure, QRMethod::parse("eqr", 3));
  EXPECT_EQ(out.segments.size(), 3u);
  EXPECT_EQ(llm.calls(), 2u);
}

TEST(Reformulate, RetryOnceThenError) {
  ScriptedLlm llm(json{{"eqr", {{"q1", ""}}}});
  EXPECT_THROW(with_stub(llm).reformulate(kAdventure, QRMethod::parse("eqr", 3)), ParseError);
  EXPECT_EQ(llm.calls(), 2u);
}

TEST(Reformulate, ErrorPolicyDoesNotRetry) {
  ScriptedLlm llm(json{{"eqr", {{"q1", ""}}}});
  EXPECT_THROW(with_stub(llm, FallbackPolicy::kError).reformulate(kAdventure, QRMethod::parse("eqr", 3)),
               ParseError);
  EXPECT_EQ(llm.calls(), 1u);
}

TEST(Reformulate, FallbackPolicyReturnsTheQuery) {
  ScriptedLlm llm(json{{"eqr", {{"q1", ""}}}});
  const auto out =
      with_stub(llm, FallbackPolicy::kFallbackNoQR).reformulate(kAdventure, QRMethod::parse("eqr", 3));
  EXPECT_TRUE(out.fell_back);
  EXPECT_EQ(out.text, kAdventure.text);
  EXPECT_TRUE(out.segments.empty());
}

TEST(Reformulate, MissingLlmIsAConfigError) {
  Reformulator r(ReformulatorConfig{}, nullptr);
  EXPECT_THROW(r.reformulate(kAdventure, QRMethod::parse("eqr")), ConfigError);
}

TEST(ScriptedLlm, LookupOrderAndMissingFixture) {
  ScriptedLlm llm(json{{"eqr", {{"by-id", "A"}, {"the text", "B"}, {"*", "C"}}}});
  EXPECT_EQ(llm.complete({"eqr", "by-id", "the text", ""}), "A");
  EXPECT_EQ(llm.complete({"eqr", "other", "the text", ""}), "B");
  EXPECT_EQ(llm.complete({"eqr", "other", "other", ""}), "C");
  try {
    llm.complete({"q2e", "x", "", ""});
    FAIL() << "expected ProviderError";
  } catch (const ProviderError& e) {
    EXPECT_EQ(e.error_class(), "missing_fixture");
  }
}

TEST(PromptTemplates, ShippedFilesMatchCompiledDefaults) {
  const auto dir = testkit::kSourceDir / "prompts";
  const auto defaults = PromptTemplates::defaults();
  EXPECT_EQ(testkit::read_bytes(dir / "q2e.txt"), defaults.q2e);
  EXPECT_EQ(testkit::read_bytes(dir / "query2doc.txt"), defaults.query2doc);
  EXPECT_EQ(testkit::read_bytes(dir / "eqr.txt"), defaults.eqr);
  const auto loaded = PromptTemplates::load(dir);
  EXPECT_EQ(loaded.eqr, defaults.eqr);
}

TEST(PromptTemplates, RenderSubstitutesQueryAndK) {
  EXPECT_EQ(render_template("Q={query} k={k} {other}", "x y", 5), "Q=x y k=5 {other}");
}

TEST(ReplayLlm, RecordedLogGivesFiveSubtopics) {
  ReplayLlm llm(testkit::kSyntheticDir / "replay" / "llm_replay.jsonl");
  ReformulatorConfig cfg;
  Reformulator r(cfg, &llm);
  const auto out = r.reformulate(kAdventure, QRMethod::parse("eqr", 5));
  ASSERT_EQ(out.segments.size(), 5u);
  EXPECT_EQ(out.elaborations[0].title, "Mountain Adventures");
  EXPECT_EQ(out.elaborations[1].title, "Water Sports");
  EXPECT_EQ(out.elaborations[2].title, "Desert Safaris");
  // Lookup by query text works for ad-hoc ids.
  const auto adhoc = r.reformulate({"adhoc", kAdventure.text}, QRMethod::parse("eqr", 5));
  EXPECT_EQ(adhoc.text, out.text);
}

TEST(RemoteLlm, ChatContractAndReplayRecording) {
  httplib::Server server;
  std::atomic<int> calls{0};
  json last_body;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    if (++calls == 1) {
      res.status = 429;
      return;
    }
    last_body = json::parse(req.body);
    json reply{{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", kThreeSubtopics}}}}})}};
    res.set_content(reply.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  TempDir tmp;
  LlmProviderConfig cfg;
  cfg.kind = LlmProviderConfig::Kind::kRemoteHttp;
  cfg.model_name = "mock-chat";
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  cfg.replay_log = tmp / "replay.jsonl";
  cfg.retry_base_ms = 1;
  cfg.retry_cap_ms = 2;
  auto llm = make_llm_client(cfg);
  Reformulator live(ReformulatorConfig{}, llm.get());
  const auto out = live.reformulate(kAdventure, QRMethod::parse("eqr", 3));

  server.stop();
  thread.join();

  EXPECT_EQ(calls.load(), 2);
  EXPECT_EQ(last_body["model"], "mock-chat");
  EXPECT_EQ(last_body["temperature"], 0.0);
  EXPECT_EQ(last_body["messages"][0]["role"], "user");
  EXPECT_EQ(out.segments.size(), 3u);

  ReplayLlm replay(cfg.replay_log);
  Reformulator replayed(ReformulatorConfig{}, &replay);
  EXPECT_EQ(replayed.reformulate(kAdventure, QRMethod::parse("eqr", 3)).text, out.text);
}
