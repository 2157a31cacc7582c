#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cmath>
#include <cstdio>

#include "cfrag/embedding.hpp"
#include "cfrag/errors.hpp"
#include "cfrag/feedback.hpp"
#include "cfrag/prompts.hpp"

using namespace cfrag;

namespace {

feedback::MockOracleConfig tiny_oracle() {
  feedback::MockOracleConfig cfg;
  feedback::MockOracleConfig::SampleInfo s;
  s.topics = {"t1", "t2", "t3", "t4", "t5", "t6"};
  s.evidence_text = "t1 t2 t3 t4 t5 t6 pad00 pad01";
  s.target = "ans0000 detail0000 summary0000";
  cfg.samples.push_back(s);
  return cfg;
}

std::vector<retriever::Candidate> named_candidates(int n) {
  std::vector<retriever::Candidate> out;
  for (int i = 0; i < n; ++i) {
    retriever::Candidate c;
    c.owner_user_id = "u0";
    c.doc.id = "cand" + std::to_string(i);
    c.doc.text = "text for candidate " + std::to_string(i);
    out.push_back(c);
  }
  return out;
}

// Counts generate() calls; fails for doc ids carrying "fail".
class CountingProvider : public feedback::GenerationProvider {
 public:
  std::string id() const override { return "counting"; }
  std::string generate(const std::string& prompt) const override {
    ++calls;
    if (prompt.find("failme") != std::string::npos)
      throw TransportError("synthetic outage", 3);
    return "echo:" + std::to_string(prompt.size());
  }
  mutable std::atomic<int> calls{0};
};

}  // namespace

TEST_CASE("mock oracle tiers: verbatim evidence, partial coverage, junk") {
  feedback::MockOracleProvider oracle(tiny_oracle());

  // Full tier: the planted document is quoted verbatim.
  std::string full = "profile: t1 t2 t3 t4 t5 t6 pad00 pad01. query: t1 t2 t3 t4 t5 t6";
  CHECK(oracle.generate(full) == "ans0000 detail0000 summary0000");

  // Partial tier: >= 3 topics occur twice (query + profile).
  std::string partial = "profile: t1 t2 t3 junk. query: t1 t2 t3 t4 t5 t6";
  CHECK(oracle.generate(partial) == "partial ans0000");

  // Junk tier: topics only appear once (the query itself).
  std::string junk = "profile: unrelated things. query: t1 t2 t3 t4 t5 t6";
  CHECK(oracle.generate(junk) == "irrelevant filler output");

  // No sample matches at all.
  CHECK(oracle.generate("nothing recognizable") == "unknown request");
  CHECK_THROWS_AS(oracle.generate(""), ContractError);

  // Purity: repeated calls agree.
  CHECK(oracle.generate(full) == oracle.generate(full));
}

TEST_CASE("eval_output per task") {
  using corpus::TaskId;
  // Generation tasks score ROUGE-1 F.
  CHECK(feedback::eval_output(TaskId::Synthetic, "the cat on the mat", "the cat sat on mat") ==
        doctest::Approx(0.8));
  CHECK(feedback::eval_output(TaskId::LaMP4, "a b", "a b") == doctest::Approx(1.0));
  // Classification tasks are exact match after trim+lowercase.
  CHECK(feedback::eval_output(TaskId::LaMP2, "comedy", "  Comedy ") == 1.0);
  CHECK(feedback::eval_output(TaskId::LaMP2, "comedy", "drama") == 0.0);
  CHECK(feedback::eval_output(TaskId::LaMP1, "[1]", "[1]") == 1.0);
  // Rating: negative absolute error; unparseable output scores -4.
  CHECK(feedback::eval_output(TaskId::LaMP3, "5", "3") == doctest::Approx(-2.0));
  CHECK(feedback::eval_output(TaskId::LaMP3, "5", "no idea") == doctest::Approx(-4.0));
  CHECK_THROWS_AS(feedback::eval_output(TaskId::LaMP3, "not numeric", "3"), ConfigError);
}

TEST_CASE("llm_distribution: pinned example and invariants") {
  auto p = feedback::llm_distribution({1.0, 0.0});
  CHECK(p[0] == doctest::Approx(0.7311).epsilon(1e-3));
  CHECK(p[1] == doctest::Approx(0.2689).epsilon(1e-3));
  CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-12));

  // Shift invariance and stability with large scores.
  auto q = feedback::llm_distribution({1001.0, 1000.0});
  CHECK(q[0] == doctest::Approx(p[0]).epsilon(1e-12));

  CHECK_THROWS_AS(feedback::llm_distribution({}), ContractError);
  CHECK_THROWS_AS(feedback::llm_distribution({1.0, std::nan("")}), NumericError);
}

TEST_CASE("feedback cache round-trips through disk") {
  const std::string path = "/tmp/cfrag_fb_cache_test.jsonl";
  std::remove(path.c_str());
  {
    feedback::FeedbackCache cache(path);
    CHECK(cache.size() == 0);
    cache.store("prov", "some prompt", "some output", 0.5);
    std::string out;
    CHECK(cache.lookup("prov", "some prompt", &out));
    CHECK(out == "some output");
    CHECK_FALSE(cache.lookup("prov", "other prompt", nullptr));
    CHECK_FALSE(cache.lookup("other-prov", "some prompt", nullptr));
  }
  // A fresh instance reloads the JSONL file.
  feedback::FeedbackCache reloaded(path);
  CHECK(reloaded.size() == 1);
  std::string out;
  CHECK(reloaded.lookup("prov", "some prompt", &out));
  CHECK(out == "some output");
  std::remove(path.c_str());
}

TEST_CASE("collect_feedback: one record per candidate, cache cuts requests") {
  const std::string path = "/tmp/cfrag_fb_collect_test.jsonl";
  std::remove(path.c_str());
  CountingProvider provider;
  corpus::Sample s;
  s.id = "s0";
  s.user_id = "u0";
  s.query = "the query";
  s.target = "echo";
  auto cands = named_candidates(15);
  auto builder = [](const corpus::Sample& smp, const corpus::Document& doc) {
    return smp.query + " | " + doc.text;
  };

  feedback::FeedbackCache cache(path);
  auto records = feedback::collect_feedback(provider, s, cands, builder, &cache);
  REQUIRE(records.size() == 15);
  CHECK(provider.calls == 15);
  CHECK(feedback::last_request_count() == 15);
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(records[i].candidate_doc_id == cands[i].doc.id);
    CHECK(records[i].output.rfind("echo:", 0) == 0);
  }

  // Warm cache: zero provider requests, identical records.
  auto again = feedback::collect_feedback(provider, s, cands, builder, &cache);
  CHECK(provider.calls == 15);
  CHECK(feedback::last_request_count() == 0);
  for (std::size_t i = 0; i < records.size(); ++i) CHECK(again[i].output == records[i].output);
  std::remove(path.c_str());
}

TEST_CASE("collect_feedback is deterministic across worker counts") {
  CountingProvider provider;
  corpus::Sample s;
  s.id = "s0";
  s.user_id = "u0";
  s.query = "q";
  s.target = "echo";
  auto cands = named_candidates(9);
  auto builder = [](const corpus::Sample& smp, const corpus::Document& doc) {
    return smp.query + " | " + doc.text;
  };
  feedback::CollectConfig one;
  one.max_in_flight = 1;
  feedback::CollectConfig four;
  four.max_in_flight = 4;
  auto r1 = feedback::collect_feedback(provider, s, cands, builder, nullptr, one);
  auto r4 = feedback::collect_feedback(provider, s, cands, builder, nullptr, four);
  REQUIRE(r1.size() == r4.size());
  for (std::size_t i = 0; i < r1.size(); ++i) {
    CHECK(r1[i].candidate_doc_id == r4[i].candidate_doc_id);
    CHECK(r1[i].output == r4[i].output);
    CHECK(r1[i].score == r4[i].score);
  }

  CHECK_THROWS_AS(feedback::collect_feedback(provider, s, {}, builder, nullptr), ContractError);
}

TEST_CASE("collect_feedback aggregates failures into one transport error") {
  CountingProvider provider;
  corpus::Sample s;
  s.id = "s0";
  s.user_id = "u0";
  s.query = "q";
  s.target = "echo";
  auto cands = named_candidates(4);
  cands[1].doc.text += " failme";
  cands[3].doc.text += " failme";
  auto builder = [](const corpus::Sample& smp, const corpus::Document& doc) {
    return smp.query + " | " + doc.text;
  };
  try {
    feedback::collect_feedback(provider, s, cands, builder, nullptr);
    FAIL("expected TransportError");
  } catch (const TransportError& e) {
    const std::string what = e.what();
    CHECK(what.find("cand1") != std::string::npos);
    CHECK(what.find("cand3") != std::string::npos);
  }
}
