#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cfrag/corpus.hpp"
#include "cfrag/tensor.hpp"

namespace cfrag::retriever {

using tensor::Tensor;

// Trainable projection heads over frozen base embeddings plus the user
// preference MLP. Projections start at identity so step 0 reproduces the
// pre-trained (raw cosine) behavior.
struct RetrieverParams {
  std::size_t d = 0;
  double alpha = 0.5;     // weight of personalization, in [0,1]
  Tensor query_proj;      // d x d
  Tensor doc_proj;        // d x d
  Tensor mlp1_w1, mlp1_b1, mlp1_w2, mlp1_b2;  // d->d->d ReLU

  static RetrieverParams init(std::size_t d, double alpha, std::uint64_t seed);
  std::vector<Tensor> trainable() const;

  void save(const std::string& path) const;
  static RetrieverParams load(const std::string& path);
};

// Graph-building score components for one (query, user, document) triple.
Tensor semantic_score(const RetrieverParams& params, const Tensor& q_vec, const Tensor& d_vec);
Tensor preference_score(const RetrieverParams& params, const Tensor& e_u, const Tensor& d_vec);
Tensor combined_score(const RetrieverParams& params, const Tensor& s_qd, const Tensor& s_ud);

struct Scores {
  double s_qd = 0.0;
  double s_ud = 0.0;
  double s_uqd = 0.0;
};
Scores score_values(const RetrieverParams& params, const std::vector<double>& q_vec,
                    const std::vector<double>& e_u, const std::vector<double>& d_vec);

struct EmbeddedHistory {
  std::string user_id;
  std::vector<corpus::Document> docs;
  std::vector<std::vector<double>> vectors;
};

struct Candidate {
  std::string owner_user_id;
  corpus::Document doc;
  std::vector<double> embedding;
  double s_qd = 0.0;
  double s_ud = 0.0;
  double s_uqd = 0.0;
};

enum class SelectionScore { Semantic, Combined };

// For each user independently, the k best documents from that user's history
// under the selection score (all of them when the history is shorter). Ties
// break by ascending document id; duplicate document ids across users keep
// the highest-scoring instance.
std::vector<Candidate> retrieve_topk_per_user(const RetrieverParams& params,
                                              const std::vector<double>& q_vec,
                                              const std::vector<double>& e_u,
                                              const std::vector<EmbeddedHistory>& users,
                                              std::size_t k, SelectionScore selection);

// Softmax over combined scores of all candidates (temperature 1).
Tensor score_distribution(const std::vector<Tensor>& scores);
std::vector<double> distribution_values(const std::vector<double>& scores);

// KL(p || p_target) where p is a 1xn tensor on the graph and p_target is a
// constant distribution over the same support.
Tensor kl_to_constant(const Tensor& p, const std::vector<double>& p_target);
double kl_value(const std::vector<double>& p, const std::vector<double>& q);

// Produces p_llm for a sample's candidate set; supplied by the feedback
// module through the pipeline.
using FeedbackFn =
    std::function<std::vector<double>(const corpus::Sample&, const std::vector<Candidate>&)>;

struct RetrieverTrainConfig {
  std::size_t k = 5;
  std::size_t epochs = 10;
  double learning_rate = 1e-3;
  std::uint64_t seed = 17;
};

struct TrainingRun {
  std::vector<double> loss_trace;  // mean loss per epoch
};

// Sample iteration for training: candidates are selected once per sample by
// the pre-trained semantic score and held fixed; the trained distribution
// uses the personalized combined score.
TrainingRun train_retriever(RetrieverParams& params,
                            const std::vector<corpus::Sample>& samples,
                            const std::function<std::vector<double>(const corpus::Sample&)>& query_vec,
                            const std::function<std::vector<double>(const corpus::Sample&)>& user_vec,
                            const std::function<std::vector<EmbeddedHistory>(const corpus::Sample&)>& users_of,
                            const FeedbackFn& feedback, const RetrieverTrainConfig& config);

}  // namespace cfrag::retriever
