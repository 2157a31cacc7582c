#include "cfrag/synthetic.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "cfrag/errors.hpp"

namespace cfrag::synthetic {

using nlohmann::json;

namespace {

// k distinct elements of pool, order randomized, via partial Fisher-Yates.
std::vector<std::string> pick_k(std::vector<std::string> pool, std::size_t k,
                                std::mt19937_64& rng) {
  if (k > pool.size()) throw ContractError("pick_k: not enough elements");
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> dist(i, pool.size() - 1);
    std::swap(pool[i], pool[dist(rng)]);
  }
  pool.resize(k);
  return pool;
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += " ";
    out += tokens[i];
  }
  return out;
}

// Fixed-width numbers keep tokens of the same family from being substrings
// of one another (the oracle matches tokens by substring search).
std::string pad2(std::size_t n) {
  std::string s = std::to_string(n);
  return s.size() < 2 ? "0" + s : s;
}

std::string pad4(std::size_t n) {
  std::string s = std::to_string(n);
  while (s.size() < 4) s = "0" + s;
  return s;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec, std::mt19937_64& rng) {
  if (spec.clusters < 1 || spec.clusters > 9)
    throw ConfigError("generate_synthetic: clusters must lie in [1,9]");
  if (spec.history_len < 1)
    throw ConfigError("generate_synthetic: history length must be >= 1");
  if (spec.query_topic_tokens > spec.vocab_per_cluster)
    throw ConfigError("generate_synthetic: query topics exceed cluster vocabulary");
  if (spec.max_topic_overlap >= spec.query_topic_tokens)
    throw ConfigError("generate_synthetic: max_topic_overlap must be below query topics");
  if (spec.doc_topic_tokens > spec.query_topic_tokens)
    throw ConfigError("generate_synthetic: decoy topics must fit inside the query's");
  if (spec.planted_filler_tokens > spec.filler_vocab ||
      spec.decoy_filler_tokens > spec.filler_vocab)
    throw ConfigError("generate_synthetic: filler tokens exceed filler vocabulary");
  if (spec.noise_vocab < 1)
    throw ConfigError("generate_synthetic: need at least one shared noise token");
  if (spec.heldout_per_cluster > spec.samples_per_cluster)
    throw ConfigError("generate_synthetic: held-out count exceeds samples per cluster");
  if (spec.evidence_copies + 1 > spec.users_per_cluster)
    throw ConfigError("generate_synthetic: not enough users per cluster for evidence donors");

  std::vector<std::vector<std::string>> topic(spec.clusters);
  for (std::size_t c = 0; c < spec.clusters; ++c)
    for (std::size_t j = 0; j < spec.vocab_per_cluster; ++j)
      topic[c].push_back("c" + std::to_string(c) + "t" + pad2(j));
  // The padding vocabulary is shared by all clusters: every cluster pushes
  // the same embedding buckets toward being discounted, so the learned
  // discount transfers to held-out samples of any cluster.
  std::vector<std::string> filler;
  for (std::size_t j = 0; j < spec.filler_vocab; ++j) filler.push_back("pad" + pad2(j));
  std::vector<std::string> noise;
  for (std::size_t j = 0; j < spec.noise_vocab; ++j) noise.push_back("noise" + std::to_string(j));

  SyntheticData data;
  std::vector<std::vector<std::size_t>> cluster_users(spec.clusters);
  for (std::size_t c = 0; c < spec.clusters; ++c) {
    for (std::size_t i = 0; i < spec.users_per_cluster; ++i) {
      corpus::UserProfile profile;
      profile.user_id = "u" + std::to_string(c) + "_" + pad2(i);
      cluster_users[c].push_back(data.dataset.profiles.size());
      data.dataset.profiles.push_back(std::move(profile));
    }
  }

  // Samples first: user histories are built from the samples' topic sets.
  struct PerSample {
    std::size_t cluster = 0;
    std::size_t owner_slot = 0;
    std::vector<std::string> topics;
    std::string planted_text;
    std::vector<std::string> donor_ids;
  };
  std::vector<PerSample> per_sample;
  data.oracle.noise_sigma = spec.noise_sigma;
  std::size_t sample_counter = 0;
  std::vector<std::set<std::string>> used_topic_sets;
  for (std::size_t c = 0; c < spec.clusters; ++c) {
    for (std::size_t s = 0; s < spec.samples_per_cluster; ++s, ++sample_counter) {
      PerSample ps;
      ps.cluster = c;
      ps.owner_slot = s % spec.users_per_cluster;
      const auto& owner = data.dataset.profiles[cluster_users[c][ps.owner_slot]];
      const bool heldout = s + spec.heldout_per_cluster >= spec.samples_per_cluster;

      const std::string tag = pad4(sample_counter);
      // Each sample is identified by its topic *combination*. Combinations
      // are kept nearly disjoint (pairwise overlap at most max_topic_overlap)
      // so that no other sample's documents resemble a query too closely:
      // this both makes oracle attribution unambiguous and keeps whatever a
      // model memorizes about one sample from dominating another sample's
      // ranking. No sample-unique token ever enters the corpus: every
      // trainable embedding bucket is shared vocabulary.
      for (int attempt = 0;; ++attempt) {
        if (attempt > 1000)
          throw ConfigError(
              "generate_synthetic: cannot draw topic combinations with the requested overlap "
              "cap; raise vocab_per_cluster or max_topic_overlap");
        ps.topics = pick_k(topic[c], spec.query_topic_tokens, rng);
        const std::set<std::string> drawn(ps.topics.begin(), ps.topics.end());
        bool ok = true;
        for (const auto& prev : used_topic_sets) {
          std::size_t shared = 0;
          for (const auto& t : drawn) shared += prev.count(t);
          if (shared > spec.max_topic_overlap) {
            ok = false;
            break;
          }
        }
        if (ok) {
          used_topic_sets.push_back(drawn);
          break;
        }
      }

      corpus::Sample sample;
      sample.id = "s" + tag;
      sample.user_id = owner.user_id;
      sample.query = join(ps.topics);
      // Targets share no tokens across samples and never occur in documents,
      // so ROUGE against the wrong sample's answer is 0 and the oracle's
      // partial tier scores 0.4.
      sample.target = "ans" + tag + " detail" + tag + " summary" + tag;
      sample.task = corpus::TaskId::Synthetic;

      // The planted document repeats the query's full topic combination
      // (topic sets are unique, so every other document shares strictly
      // fewer topics) and is diluted with cluster filler, which hides it
      // from raw cosine ranking until a model learns to discount filler.
      {
        auto tokens = ps.topics;
        for (auto& t : pick_k(filler, spec.planted_filler_tokens, rng)) tokens.push_back(t);
        tokens.push_back(noise[rng() % noise.size()]);
        ps.planted_text = join(tokens);
      }

      // Planted evidence goes to other users of the same cluster.
      std::vector<std::string> donor_pool;
      for (std::size_t i = 0; i < spec.users_per_cluster; ++i)
        if (i != ps.owner_slot)
          donor_pool.push_back(data.dataset.profiles[cluster_users[c][i]].user_id);
      ps.donor_ids = pick_k(donor_pool, spec.evidence_copies, rng);

      data.oracle.samples.push_back({ps.topics, ps.planted_text, sample.target});
      if (heldout)
        data.heldout_sample_ids.push_back(sample.id);
      else
        data.train_sample_ids.push_back(sample.id);
      data.dataset.samples.push_back(std::move(sample));
      per_sample.push_back(std::move(ps));
    }
  }

  // Histories. Each user holds clean decoys (a few topics of some cluster
  // sample plus one shared noise token) and one filler-diluted decoy. A
  // user's own samples are always decoyed in their own history, so the
  // querying user's history contains a strong partial match (the hider that
  // keeps untrained retrieval at chance) and their m=1 ablation reaches the
  // oracle's partial tier. Clean and noisy decoys of the same sample sit in
  // the same oracle tier, which a cosine model can only honor by discounting
  // filler — the same skill that surfaces planted evidence.
  std::vector<std::vector<std::size_t>> owned(data.dataset.profiles.size());
  for (std::size_t i = 0; i < per_sample.size(); ++i) {
    const auto& ps = per_sample[i];
    owned[cluster_users[ps.cluster][ps.owner_slot]].push_back(i);
  }
  // Filler decoy slots reference training samples only, so held-out topic
  // material enters training candidate pools as rarely as possible (a
  // held-out sample is decoyed only in its owner's history).
  std::set<std::string> heldout_ids(data.heldout_sample_ids.begin(),
                                    data.heldout_sample_ids.end());
  std::vector<std::vector<std::size_t>> cluster_samples(spec.clusters);
  for (std::size_t i = 0; i < per_sample.size(); ++i)
    if (!heldout_ids.count(data.dataset.samples[i].id) || data.heldout_sample_ids.size() ==
                                                              data.dataset.samples.size())
      cluster_samples[per_sample[i].cluster].push_back(i);

  for (std::size_t c = 0; c < spec.clusters; ++c) {
    for (std::size_t u = 0; u < spec.users_per_cluster; ++u) {
      const std::size_t pi = cluster_users[c][u];
      auto& profile = data.dataset.profiles[pi];
      auto sample_for_slot = [&](std::size_t slot) -> const PerSample& {
        if (slot < owned[pi].size()) return per_sample[owned[pi][slot]];
        const auto& ids = cluster_samples[c];
        return per_sample[ids[rng() % ids.size()]];
      };
      for (std::size_t n = 0; n < spec.history_len; ++n) {
        const PerSample& ps = sample_for_slot(n);
        corpus::Document doc;
        doc.id = "d_" + profile.user_id + "_" + std::to_string(n);
        auto tokens = pick_k(ps.topics, spec.doc_topic_tokens, rng);
        tokens.push_back(noise[rng() % noise.size()]);
        doc.text = join(tokens);
        doc.position = static_cast<int>(profile.history.size());
        profile.history.push_back(std::move(doc));
      }
      {
        const PerSample& ps = sample_for_slot(0);
        corpus::Document doc;
        doc.id = "nd_" + profile.user_id;
        auto tokens = pick_k(ps.topics, spec.doc_topic_tokens, rng);
        for (auto& t : pick_k(filler, spec.decoy_filler_tokens, rng)) tokens.push_back(t);
        tokens.push_back(noise[rng() % noise.size()]);
        doc.text = join(tokens);
        doc.position = static_cast<int>(profile.history.size());
        profile.history.push_back(std::move(doc));
      }
    }
  }

  for (std::size_t i = 0; i < per_sample.size(); ++i) {
    const auto& ps = per_sample[i];
    const std::string& sample_id = data.dataset.samples[i].id;
    for (std::size_t copy = 0; copy < ps.donor_ids.size(); ++copy) {
      for (auto& profile : data.dataset.profiles) {
        if (profile.user_id != ps.donor_ids[copy]) continue;
        corpus::Document doc;
        doc.id = "ev" + std::to_string(i) + "_" + std::to_string(copy);
        doc.text = ps.planted_text;
        doc.position = static_cast<int>(profile.history.size());
        profile.history.push_back(doc);
        data.evidence[sample_id].push_back(doc.id);
        break;
      }
    }
  }
  return data;
}

void save_sidecar(const SyntheticData& data, const std::string& path) {
  json j;
  j["noise_sigma"] = data.oracle.noise_sigma;
  j["seed"] = data.oracle.seed;
  j["partial_overlap"] = data.oracle.partial_overlap;
  j["samples"] = json::array();
  for (const auto& s : data.oracle.samples) {
    j["samples"].push_back({{"topics", s.topics},
                            {"evidence_text", s.evidence_text},
                            {"target", s.target}});
  }
  j["evidence"] = data.evidence;
  j["train"] = data.train_sample_ids;
  j["heldout"] = data.heldout_sample_ids;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write sidecar: " + path);
  out << j.dump(2) << "\n";
}

SyntheticData load_with_sidecar(const std::string& dataset_path, const std::string& sidecar_path) {
  SyntheticData data;
  data.dataset = corpus::load_dataset(dataset_path);
  std::ifstream in(sidecar_path);
  if (!in) throw IoError("cannot read sidecar: " + sidecar_path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ParseError(std::string("sidecar is not valid JSON: ") + e.what());
  }
  data.oracle.noise_sigma = j.at("noise_sigma").get<double>();
  data.oracle.seed = j.at("seed").get<std::uint64_t>();
  data.oracle.partial_overlap = j.at("partial_overlap").get<std::size_t>();
  for (const auto& s : j.at("samples")) {
    data.oracle.samples.push_back({s.at("topics").get<std::vector<std::string>>(),
                                   s.at("evidence_text").get<std::string>(),
                                   s.at("target").get<std::string>()});
  }
  data.evidence = j.at("evidence").get<std::map<std::string, std::vector<std::string>>>();
  data.train_sample_ids = j.at("train").get<std::vector<std::string>>();
  data.heldout_sample_ids = j.at("heldout").get<std::vector<std::string>>();
  return data;
}

}  // namespace cfrag::synthetic
