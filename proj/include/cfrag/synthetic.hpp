#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "cfrag/corpus.hpp"
#include "cfrag/feedback.hpp"

namespace cfrag::synthetic {

// Clustered benchmark with cross-user planted evidence.
//
// Each cluster owns a disjoint core vocabulary (topic tokens plus a filler
// vocabulary); a small noise vocabulary is shared by all clusters. Every
// sample is identified by a unique combination of topic tokens — no
// sample-unique token ever enters the corpus, so models can only learn
// structure over shared vocabulary. User histories hold "decoy" documents
// (partial topic matches for the cluster's queries, some clean and some
// diluted with filler), while the only documents that fully answer a query —
// repeating its entire topic combination — are planted into the histories of
// *other* users of the same cluster, so answering well requires
// collaborative retrieval. The filler dilution hides planted documents from
// raw cosine ranking; surfacing them requires learning to discount the
// filler vocabulary.
struct SyntheticSpec {
  std::size_t clusters = 4;
  std::size_t users_per_cluster = 10;
  std::size_t history_len = 8;  // clean decoy documents per user

  std::size_t vocab_per_cluster = 20;  // topic tokens per cluster
  std::size_t filler_vocab = 24;       // filler tokens per cluster
  std::size_t noise_vocab = 8;         // noise tokens shared by all clusters

  std::size_t query_topic_tokens = 6;     // topics per query (all repeated in planted)
  std::size_t max_topic_overlap = 2;      // max topics shared by two samples of a cluster
  std::size_t doc_topic_tokens = 3;       // topics per decoy document
  std::size_t planted_filler_tokens = 12; // filler tokens diluting planted documents
  std::size_t decoy_filler_tokens = 8;    // filler tokens diluting noisy decoys
  std::size_t evidence_copies = 5;        // donors per sample

  std::size_t samples_per_cluster = 8;
  std::size_t heldout_per_cluster = 3;  // of samples_per_cluster

  double noise_sigma = 0.0;  // oracle output noise
};

struct SyntheticData {
  corpus::Dataset dataset;
  feedback::MockOracleConfig oracle;
  // Planted-evidence document ids per sample id.
  std::map<std::string, std::vector<std::string>> evidence;
  std::vector<std::string> train_sample_ids;
  std::vector<std::string> heldout_sample_ids;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec, std::mt19937_64& rng);

// Sidecar persistence for everything the dataset JSONL cannot carry: the
// oracle configuration, the evidence map, and the split.
void save_sidecar(const SyntheticData& data, const std::string& path);
SyntheticData load_with_sidecar(const std::string& dataset_path, const std::string& sidecar_path);

}  // namespace cfrag::synthetic
