#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <string>

#include "cfrag/corpus.hpp"
#include "cfrag/errors.hpp"

using namespace cfrag;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  std::string path = std::string("/tmp/cfrag_corpus_") + name;
  std::ofstream out(path);
  out << content;
  return path;
}

}  // namespace

TEST_CASE("task names round-trip") {
  for (auto t : {corpus::TaskId::LaMP1, corpus::TaskId::LaMP2, corpus::TaskId::LaMP3,
                 corpus::TaskId::LaMP4, corpus::TaskId::LaMP5, corpus::TaskId::LaMP7,
                 corpus::TaskId::Synthetic}) {
    CHECK(corpus::task_from_string(corpus::task_to_string(t)) == t);
  }
  CHECK_THROWS_AS(corpus::task_from_string("LaMP-6"), ConfigError);
}

TEST_CASE("load a small well-formed dataset") {
  auto path = write_temp("ok.jsonl",
      R"({"kind":"user","id":"u1","history":[{"id":"d1","text":"alpha beta","aux":{"title":"T1","abstract":"A1"}},{"id":"d2","text":"gamma"}]})" "\n"
      R"({"kind":"sample","id":"s1","user_id":"u1","query":"what now","target":"beta","task":"LaMP-4"})" "\n");
  auto ds = corpus::load_dataset(path);
  REQUIRE(ds.profiles.size() == 1);
  REQUIRE(ds.samples.size() == 1);
  const auto& p = ds.profiles[0];
  CHECK(p.user_id == "u1");
  REQUIRE(p.history.size() == 2);
  CHECK(p.history[0].aux.at("title") == "T1");
  CHECK(p.history[0].aux.at("abstract") == "A1");
  CHECK(p.history[0].position == 0);
  CHECK(p.history[1].position == 1);
  CHECK(ds.samples[0].task == corpus::TaskId::LaMP4);
  CHECK(&ds.profile("u1") == &p);
  CHECK_THROWS_AS(ds.profile("nobody"), LookupError);
  std::remove(path.c_str());
}

TEST_CASE("save/load round-trip preserves everything") {
  corpus::Dataset ds;
  corpus::UserProfile p;
  p.user_id = "u9";
  corpus::Document d;
  d.id = "doc_a";
  d.text = "some text";
  d.aux["review"] = "great stuff";
  d.aux["score"] = "5";
  d.position = 3;
  p.history.push_back(d);
  ds.profiles.push_back(p);
  corpus::Sample s;
  s.id = "s_x";
  s.user_id = "u9";
  s.query = "q";
  s.target = "t";
  s.task = corpus::TaskId::LaMP3;
  ds.samples.push_back(s);

  const std::string path = "/tmp/cfrag_corpus_roundtrip.jsonl";
  corpus::save_dataset(ds, path);
  auto back = corpus::load_dataset(path);
  REQUIRE(back.profiles.size() == 1);
  CHECK(back.profiles[0].history[0].aux.at("review") == "great stuff");
  CHECK(back.profiles[0].history[0].position == 3);
  CHECK(back.samples[0].task == corpus::TaskId::LaMP3);
  CHECK(back.samples[0].target == "t");
  std::remove(path.c_str());
}

TEST_CASE("parse errors carry the offending line number") {
  auto path = write_temp("bad_json.jsonl",
      R"({"kind":"user","id":"u1","history":[{"id":"d1","text":"x"}]})" "\n"
      "this is not json\n");
  try {
    corpus::load_dataset(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line_number == 2);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("structural validation") {
  auto no_hist = write_temp("no_hist.jsonl", R"({"kind":"user","id":"u1","history":[]})" "\n");
  CHECK_THROWS_AS(corpus::load_dataset(no_hist), ParseError);
  std::remove(no_hist.c_str());

  auto dup_doc = write_temp("dup_doc.jsonl",
      R"({"kind":"user","id":"u1","history":[{"id":"d1","text":"x"},{"id":"d1","text":"y"}]})" "\n");
  CHECK_THROWS_AS(corpus::load_dataset(dup_doc), ParseError);
  std::remove(dup_doc.c_str());

  auto dup_user = write_temp("dup_user.jsonl",
      R"({"kind":"user","id":"u1","history":[{"id":"d1","text":"x"}]})" "\n"
      R"({"kind":"user","id":"u1","history":[{"id":"d2","text":"y"}]})" "\n");
  CHECK_THROWS_AS(corpus::load_dataset(dup_user), ParseError);
  std::remove(dup_user.c_str());

  auto bad_pos = write_temp("bad_pos.jsonl",
      R"({"kind":"user","id":"u1","history":[{"id":"d1","text":"x","position":5},{"id":"d2","text":"y","position":5}]})" "\n");
  CHECK_THROWS_AS(corpus::load_dataset(bad_pos), ParseError);
  std::remove(bad_pos.c_str());

  auto bad_kind = write_temp("bad_kind.jsonl", R"({"kind":"mystery"})" "\n");
  CHECK_THROWS_AS(corpus::load_dataset(bad_kind), ParseError);
  std::remove(bad_kind.c_str());

  CHECK_THROWS_AS(corpus::load_dataset("/tmp/definitely_missing_cfrag.jsonl"), IoError);
}

TEST_CASE("dangling sample reference is an integrity error") {
  auto path = write_temp("dangling.jsonl",
      R"({"kind":"user","id":"u1","history":[{"id":"d1","text":"x"}]})" "\n"
      R"({"kind":"sample","id":"s1","user_id":"ghost","query":"q"})" "\n");
  CHECK_THROWS_AS(corpus::load_dataset(path), IntegrityError);
  std::remove(path.c_str());
}

TEST_CASE("truncate_history keeps the most recent documents") {
  std::vector<corpus::Document> h(5);
  for (int i = 0; i < 5; ++i) {
    h[i].id = "d" + std::to_string(i);
    h[i].position = i;
  }
  auto t = corpus::truncate_history(h, 3);
  REQUIRE(t.size() == 3);
  CHECK(t[0].id == "d2");
  CHECK(t[2].id == "d4");
  CHECK(corpus::truncate_history(h, 10).size() == 5);
  CHECK(corpus::truncate_history(h, 5).size() == 5);
}
