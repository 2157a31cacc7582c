#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <map>
#include <random>
#include <set>

#include "cfrag/errors.hpp"
#include "cfrag/feedback.hpp"
#include "cfrag/prompts.hpp"
#include "cfrag/synthetic.hpp"

using namespace cfrag;

namespace {

synthetic::SyntheticSpec small_spec() {
  synthetic::SyntheticSpec spec;
  spec.clusters = 2;
  spec.users_per_cluster = 6;
  spec.history_len = 4;
  spec.vocab_per_cluster = 16;
  spec.filler_vocab = 12;
  spec.noise_vocab = 4;
  spec.query_topic_tokens = 5;
  spec.max_topic_overlap = 2;
  spec.doc_topic_tokens = 3;
  spec.planted_filler_tokens = 8;
  spec.decoy_filler_tokens = 6;
  spec.evidence_copies = 3;
  spec.samples_per_cluster = 5;
  spec.heldout_per_cluster = 2;
  return spec;
}

}  // namespace

TEST_CASE("generated benchmark has the advertised shape") {
  auto spec = small_spec();
  std::mt19937_64 rng(17);
  auto data = synthetic::generate_synthetic(spec, rng);

  CHECK(data.dataset.profiles.size() == 12);
  CHECK(data.dataset.samples.size() == 10);
  CHECK(data.train_sample_ids.size() == 6);
  CHECK(data.heldout_sample_ids.size() == 4);
  CHECK(data.oracle.samples.size() == 10);
  CHECK(data.evidence.size() == 10);
  for (const auto& [sid, ev] : data.evidence) CHECK(ev.size() == spec.evidence_copies);
}

TEST_CASE("planted evidence lives outside the owner's history") {
  auto spec = small_spec();
  std::mt19937_64 rng(17);
  auto data = synthetic::generate_synthetic(spec, rng);

  std::map<std::string, std::string> doc_owner;
  for (const auto& p : data.dataset.profiles)
    for (const auto& d : p.history) doc_owner[d.id] = p.user_id;

  for (const auto& s : data.dataset.samples) {
    REQUIRE(data.evidence.count(s.id) == 1);
    std::set<std::string> donors;
    for (const auto& ev_id : data.evidence.at(s.id)) {
      REQUIRE(doc_owner.count(ev_id) == 1);
      const std::string& owner = doc_owner[ev_id];
      CHECK(owner != s.user_id);  // never the querying user
      // Donors are same-cluster users: the cluster prefix before '_' matches.
      CHECK(owner.substr(0, owner.find('_')) == s.user_id.substr(0, s.user_id.find('_')));
      donors.insert(owner);
    }
    CHECK(donors.size() == spec.evidence_copies);  // distinct donors
  }
}

TEST_CASE("topic combinations are unique with bounded pairwise overlap") {
  auto spec = small_spec();
  std::mt19937_64 rng(3);
  auto data = synthetic::generate_synthetic(spec, rng);

  std::vector<std::set<std::string>> sets;
  for (const auto& info : data.oracle.samples) {
    CHECK(info.topics.size() == spec.query_topic_tokens);
    sets.emplace_back(info.topics.begin(), info.topics.end());
  }
  for (std::size_t i = 0; i < sets.size(); ++i) {
    for (std::size_t j = i + 1; j < sets.size(); ++j) {
      std::size_t shared = 0;
      for (const auto& t : sets[i]) shared += sets[j].count(t);
      CHECK(shared <= spec.max_topic_overlap);
    }
  }
}

TEST_CASE("the oracle resolves its own benchmark") {
  auto spec = small_spec();
  std::mt19937_64 rng(17);
  auto data = synthetic::generate_synthetic(spec, rng);
  feedback::MockOracleProvider oracle(data.oracle);

  std::map<std::string, corpus::Document> docs_by_id;
  for (const auto& p : data.dataset.profiles)
    for (const auto& d : p.history) docs_by_id[d.id] = d;

  for (const auto& s : data.dataset.samples) {
    // Prompt carrying the planted evidence yields the exact target.
    const auto& ev_id = data.evidence.at(s.id)[0];
    auto with_evidence =
        prompts::build_prompt(s.task, s.query, {docs_by_id.at(ev_id)});
    CHECK(oracle.generate(with_evidence) == s.target);
    CHECK(feedback::eval_output(s.task, s.target, oracle.generate(with_evidence)) ==
          doctest::Approx(1.0));

    // Zero-shot prompt cannot reach the full tier.
    auto bare = prompts::build_prompt(s.task, s.query, {});
    CHECK(oracle.generate(bare) != s.target);
  }
}

TEST_CASE("deterministic generation under a fixed seed") {
  auto spec = small_spec();
  std::mt19937_64 rng_a(99), rng_b(99);
  auto a = synthetic::generate_synthetic(spec, rng_a);
  auto b = synthetic::generate_synthetic(spec, rng_b);
  REQUIRE(a.dataset.profiles.size() == b.dataset.profiles.size());
  for (std::size_t i = 0; i < a.dataset.profiles.size(); ++i) {
    const auto& pa = a.dataset.profiles[i];
    const auto& pb = b.dataset.profiles[i];
    REQUIRE(pa.history.size() == pb.history.size());
    for (std::size_t j = 0; j < pa.history.size(); ++j)
      CHECK(pa.history[j].text == pb.history[j].text);
  }
  for (std::size_t i = 0; i < a.dataset.samples.size(); ++i)
    CHECK(a.dataset.samples[i].query == b.dataset.samples[i].query);
}

TEST_CASE("spec validation errors") {
  std::mt19937_64 rng(1);
  auto base = small_spec();

  auto bad = base;
  bad.clusters = 0;
  CHECK_THROWS_AS(synthetic::generate_synthetic(bad, rng), ConfigError);
  bad = base;
  bad.query_topic_tokens = 99;
  CHECK_THROWS_AS(synthetic::generate_synthetic(bad, rng), ConfigError);
  bad = base;
  bad.max_topic_overlap = bad.query_topic_tokens;
  CHECK_THROWS_AS(synthetic::generate_synthetic(bad, rng), ConfigError);
  bad = base;
  bad.doc_topic_tokens = bad.query_topic_tokens + 1;
  CHECK_THROWS_AS(synthetic::generate_synthetic(bad, rng), ConfigError);
  bad = base;
  bad.planted_filler_tokens = bad.filler_vocab + 1;
  CHECK_THROWS_AS(synthetic::generate_synthetic(bad, rng), ConfigError);
  bad = base;
  bad.noise_vocab = 0;
  CHECK_THROWS_AS(synthetic::generate_synthetic(bad, rng), ConfigError);
  bad = base;
  bad.heldout_per_cluster = bad.samples_per_cluster + 1;
  CHECK_THROWS_AS(synthetic::generate_synthetic(bad, rng), ConfigError);
  bad = base;
  bad.evidence_copies = bad.users_per_cluster;
  CHECK_THROWS_AS(synthetic::generate_synthetic(bad, rng), ConfigError);
  // Too many samples for the overlap cap to be satisfiable.
  bad = base;
  bad.vocab_per_cluster = 6;
  bad.query_topic_tokens = 5;
  bad.max_topic_overlap = 1;
  bad.samples_per_cluster = 12;
  CHECK_THROWS_AS(synthetic::generate_synthetic(bad, rng), ConfigError);
}

TEST_CASE("sidecar round-trip restores oracle, evidence, and split") {
  auto spec = small_spec();
  std::mt19937_64 rng(17);
  auto data = synthetic::generate_synthetic(spec, rng);
  data.oracle.seed = 17;

  const std::string ds_path = "/tmp/cfrag_synth_test.jsonl";
  const std::string sc_path = ds_path + ".sidecar.json";
  corpus::save_dataset(data.dataset, ds_path);
  synthetic::save_sidecar(data, sc_path);

  auto back = synthetic::load_with_sidecar(ds_path, sc_path);
  CHECK(back.dataset.profiles.size() == data.dataset.profiles.size());
  CHECK(back.oracle.samples.size() == data.oracle.samples.size());
  CHECK(back.oracle.seed == 17);
  CHECK(back.oracle.partial_overlap == data.oracle.partial_overlap);
  CHECK(back.evidence == data.evidence);
  CHECK(back.train_sample_ids == data.train_sample_ids);
  CHECK(back.heldout_sample_ids == data.heldout_sample_ids);
  for (std::size_t i = 0; i < data.oracle.samples.size(); ++i) {
    CHECK(back.oracle.samples[i].topics == data.oracle.samples[i].topics);
    CHECK(back.oracle.samples[i].evidence_text == data.oracle.samples[i].evidence_text);
    CHECK(back.oracle.samples[i].target == data.oracle.samples[i].target);
  }

  CHECK_THROWS_AS(synthetic::load_with_sidecar(ds_path, "/tmp/missing_sidecar_cfrag.json"),
                  IoError);
  std::remove(ds_path.c_str());
  std::remove(sc_path.c_str());
}
