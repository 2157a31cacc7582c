#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>
#include <string>

#include "cfrag/corpus.hpp"
#include "cfrag/errors.hpp"
#include "cfrag/prompts.hpp"

using namespace cfrag;

namespace {

#ifndef TEST_DATA_DIR
#define TEST_DATA_DIR "tests"
#endif

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  REQUIRE_MESSAGE(bool(in), ("missing golden file: " + path).c_str());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

corpus::Document doc_with(const std::string& id,
                          std::initializer_list<std::pair<std::string, std::string>> aux) {
  corpus::Document d;
  d.id = id;
  d.text = "raw text of " + id;
  for (const auto& [k, v] : aux) d.aux[k] = v;
  return d;
}

// The fixed corpus used for every golden prompt.
std::vector<corpus::Document> golden_docs(corpus::TaskId task) {
  switch (task) {
    case corpus::TaskId::LaMP1:
      return {doc_with("p1", {{"title", "Sparse Retrieval"},
                              {"abstract", "We study inverted indexes."}}),
              doc_with("p2", {{"title", "Dense Retrieval"},
                              {"abstract", "We study embeddings."}})};
    case corpus::TaskId::LaMP2:
      return {doc_with("p1", {{"description", "A spaceship crew fights aliens."},
                              {"tag", "sci-fi"}}),
              doc_with("p2", {{"description", "Two friends open a bakery."},
                              {"tag", "comedy"}})};
    case corpus::TaskId::LaMP3:
      return {doc_with("p1", {{"review", "Terrible battery life."}, {"score", "1"}}),
              doc_with("p2", {{"review", "Decent value for money."}, {"score", "4"}})};
    case corpus::TaskId::LaMP4:
      return {doc_with("p1", {{"text", "The council met on Tuesday to vote."},
                              {"title", "Council Votes On Tuesday"}})};
    case corpus::TaskId::LaMP5:
      return {doc_with("p1", {{"abstract", "We prove tight bounds for sorting."},
                              {"title", "Tight Sorting Bounds"}})};
    case corpus::TaskId::LaMP7:
      return {doc_with("p1", {{"tweet", "big game tonight, cannot wait!"}}),
              doc_with("p2", {{"tweet", "coffee first, questions later"}})};
    default:
      return {};
  }
}

std::string golden_query(corpus::TaskId task) {
  switch (task) {
    case corpus::TaskId::LaMP1:
      return "Neural Ranking Models [1] \"BM25 revisited\" [2] \"Transformers for search\"";
    case corpus::TaskId::LaMP2: return "A detective hunts a rogue android in 2049.";
    case corpus::TaskId::LaMP3: return "The product broke after two days of light use.";
    case corpus::TaskId::LaMP4: return "The mayor announced a new recycling initiative today.";
    case corpus::TaskId::LaMP5: return "We introduce a contrastive method for user modeling.";
    case corpus::TaskId::LaMP7: return "just finished the marathon and my legs are done";
    default: return "";
  }
}

const std::pair<corpus::TaskId, const char*> kGolden[] = {
    {corpus::TaskId::LaMP1, "lamp1.txt"}, {corpus::TaskId::LaMP2, "lamp2.txt"},
    {corpus::TaskId::LaMP3, "lamp3.txt"}, {corpus::TaskId::LaMP4, "lamp4.txt"},
    {corpus::TaskId::LaMP5, "lamp5.txt"}, {corpus::TaskId::LaMP7, "lamp7.txt"},
};

}  // namespace

TEST_CASE("six LaMP templates match their golden files") {
  for (const auto& [task, file] : kGolden) {
    const std::string got =
        prompts::build_prompt(task, golden_query(task), golden_docs(task));
    const std::string want = read_file(std::string(TEST_DATA_DIR) + "/golden/" + file);
    CHECK_MESSAGE(got == want, file);
  }
}

TEST_CASE("zero-shot form has no history preamble") {
  for (const auto& [task, file] : kGolden) {
    const std::string p = prompts::build_prompt(task, golden_query(task), {});
    CHECK(p.find("historical") == std::string::npos);
    CHECK(p.find("The historical profiles are as follows") == std::string::npos);
    CHECK(p.find(golden_query(task)) != std::string::npos);
  }
}

TEST_CASE("documents appear in ranked order") {
  auto docs = golden_docs(corpus::TaskId::LaMP2);
  const std::string p =
      prompts::build_prompt(corpus::TaskId::LaMP2, golden_query(corpus::TaskId::LaMP2), docs);
  const auto first = p.find("spaceship");
  const auto second = p.find("bakery");
  REQUIRE(first != std::string::npos);
  REQUIRE(second != std::string::npos);
  CHECK(first < second);

  std::reverse(docs.begin(), docs.end());
  const std::string swapped =
      prompts::build_prompt(corpus::TaskId::LaMP2, golden_query(corpus::TaskId::LaMP2), docs);
  CHECK(swapped.find("bakery") < swapped.find("spaceship"));
}

TEST_CASE("render_history_item falls back to raw text without aux fields") {
  corpus::Document bare;
  bare.id = "b1";
  bare.text = "plain history entry";
  for (auto task : {corpus::TaskId::LaMP1, corpus::TaskId::LaMP3, corpus::TaskId::LaMP7,
                    corpus::TaskId::Synthetic}) {
    CHECK(prompts::render_history_item(task, bare) == "plain history entry");
  }
  // With the right aux fields the structured form is used.
  auto tagged = doc_with("p1", {{"tweet", "hello there"}});
  CHECK(prompts::render_history_item(corpus::TaskId::LaMP7, tagged) ==
        "\"tweet\": hello there");
}

TEST_CASE("empty query is rejected") {
  CHECK_THROWS_AS(prompts::build_prompt(corpus::TaskId::LaMP4, "", {}), ContractError);
}

TEST_CASE("synthetic template embeds query and documents") {
  corpus::Document d;
  d.id = "ev";
  d.text = "t1 t2 t3 pad00";
  const std::string p = prompts::build_prompt(corpus::TaskId::Synthetic, "t1 t2 t3", {d});
  CHECK(p.find("t1 t2 t3 pad00") != std::string::npos);
  CHECK(p.find("\"query\": t1 t2 t3") != std::string::npos);
}
