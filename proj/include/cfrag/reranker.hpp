#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cfrag/corpus.hpp"
#include "cfrag/retriever.hpp"
#include "cfrag/tensor.hpp"

namespace cfrag::reranker {

using retriever::Candidate;
using retriever::FeedbackFn;
using tensor::Tensor;

// Joint (query, document) feature encoder standing in for a pre-trained
// cross-encoder. Pure: same pair, same output.
class CrossFeaturizer {
 public:
  virtual ~CrossFeaturizer() = default;
  virtual std::size_t dimension() const = 0;
  virtual std::vector<double> features(const std::string& query,
                                       const std::string& doc_text) const = 0;
};

// Deterministic blend of the two hash embeddings: elementwise product plus a
// rotated absolute difference plus a query-side term (keeps h(q,d) != h(d,q)),
// L2-normalized.
class MockCrossFeaturizer : public CrossFeaturizer {
 public:
  explicit MockCrossFeaturizer(std::size_t d) : d_(d) {}
  std::size_t dimension() const override { return d_; }
  std::vector<double> features(const std::string& query,
                               const std::string& doc_text) const override;

 private:
  std::size_t d_;
};

// HTTP client: POST {"pairs": [[q, d], ...]} -> {"vectors": [[...], ...]}.
class RemoteCrossFeaturizer : public CrossFeaturizer {
 public:
  RemoteCrossFeaturizer(std::string base_url, std::string path, std::size_t d,
                        int max_retries = 3);
  std::size_t dimension() const override { return d_; }
  std::vector<double> features(const std::string& query,
                               const std::string& doc_text) const override;

 private:
  std::string base_url_;
  std::string path_;
  std::size_t d_;
  int max_retries_;
};

struct RerankerParams {
  std::size_t d = 0;
  Tensor mlp2_w1, mlp2_b1, mlp2_w2, mlp2_b2;  // d->d->d ReLU
  Tensor mlp3_w1, mlp3_b1, mlp3_w2, mlp3_b2;  // 2d->2d->1 ReLU

  static RerankerParams init(std::size_t d, std::uint64_t seed);
  std::vector<Tensor> trainable() const;

  void save(const std::string& path) const;
  static RerankerParams load(const std::string& path);
};

// MLP3(concat(h_qd, MLP2(e_u))).
Tensor rerank_score(const RerankerParams& params, const Tensor& h_qd, const Tensor& e_u);
double rerank_score_value(const RerankerParams& params, const std::vector<double>& h_qd,
                          const std::vector<double>& e_u);

// k highest rerank scores, descending, ties by ascending document id; all
// candidates in score order when fewer than k.
std::vector<Candidate> rerank_topk(const RerankerParams& params,
                                   const CrossFeaturizer& featurizer, const std::string& query,
                                   const std::vector<Candidate>& candidates,
                                   const std::vector<double>& e_u, std::size_t k);

struct RerankerTrainConfig {
  std::size_t epochs = 10;
  double learning_rate = 1e-3;
  std::uint64_t seed = 17;
};

struct SampleCandidates {
  corpus::Sample sample;
  std::vector<Candidate> candidates;  // from the trained retriever
  std::vector<double> e_u;
};

retriever::TrainingRun train_reranker(RerankerParams& params,
                                      const std::vector<SampleCandidates>& inputs,
                                      const CrossFeaturizer& featurizer,
                                      const FeedbackFn& feedback,
                                      const RerankerTrainConfig& config);

}  // namespace cfrag::reranker
