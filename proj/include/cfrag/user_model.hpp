#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cfrag/corpus.hpp"
#include "cfrag/embedding.hpp"
#include "cfrag/tensor.hpp"

namespace cfrag::user_model {

using tensor::Tensor;

// A history view produced by augmentation: an ordered selection of documents
// from the source history, some of which may be masked out.
struct ViewItem {
  std::size_t doc_index = 0;  // index into the source history
  bool masked = false;
};
using HistoryView = std::vector<ViewItem>;

struct AugmentationConfig {
  double eta_crop = 0.7;
  double eta_mask = 0.3;
  double eta_reorder = 0.3;
};

enum class AugmentationKind { Crop, Mask, Reorder };

HistoryView identity_view(std::size_t history_len);
HistoryView augment_crop(std::size_t history_len, double eta_crop, std::mt19937_64& rng);
HistoryView augment_mask(std::size_t history_len, double eta_mask, std::mt19937_64& rng);
HistoryView augment_reorder(std::size_t history_len, double eta_reorder, std::mt19937_64& rng);

// Two distinct augmentation methods drawn uniformly without replacement,
// each applied independently to the original history.
std::pair<HistoryView, HistoryView> sample_views(std::size_t history_len,
                                                 const AugmentationConfig& config,
                                                 std::mt19937_64& rng);

// One transformer encoder layer over positional-embedded document vectors,
// mean-pooled to a user embedding.
struct UserEncoderParams {
  std::size_t d = 0;
  std::size_t n_max = 64;
  std::size_t heads = 2;

  Tensor pos_table;       // n_max x d, learned
  Tensor mask_embedding;  // 1 x d, trainable stand-in for masked documents
  Tensor wq, wk, wv, wo;  // d x d attention projections
  Tensor ffn_w1, ffn_b1;  // d x 4d, 1 x 4d
  Tensor ffn_w2, ffn_b2;  // 4d x d, 1 x d
  Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;  // 1 x d

  static UserEncoderParams init(std::size_t d, std::size_t n_max, std::size_t heads,
                                std::uint64_t seed);
  std::vector<Tensor> trainable() const;
  std::vector<std::pair<std::string, Tensor>> named() const;
};

// Rows of a view's embedded history; masked slots use the mask embedding.
Tensor embed_view(const UserEncoderParams& params, const HistoryView& view,
                  const std::vector<std::vector<double>>& doc_embeddings);

// e_u = mean over rows of Trm(E_u + P[0:N]).
Tensor encode_user(const UserEncoderParams& params, const Tensor& embedded_history);

// Symmetric two-term InfoNCE over a batch of paired views. Negatives are the
// other users in the batch; the positive pair is excluded from the
// denominator.
Tensor infonce_loss(const std::vector<Tensor>& view_a, const std::vector<Tensor>& view_b,
                    double tau1);

struct UserTrainConfig {
  std::size_t d = 16;
  std::size_t n_max = 64;
  std::size_t heads = 2;
  double tau1 = 0.1;
  AugmentationConfig augmentation;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 17;
};

struct UserTrainResult {
  UserEncoderParams params;
  std::vector<double> loss_trace;  // mean loss per epoch
};

UserTrainResult train_user_encoder(const std::vector<corpus::UserProfile>& profiles,
                                   const embedding::EmbeddingProvider& provider,
                                   const UserTrainConfig& config);

// Unit-norm user embeddings keyed by user id.
struct UserIndex {
  std::vector<std::string> user_ids;
  std::vector<std::vector<double>> embeddings;

  const std::vector<double>& embedding_of(const std::string& user_id) const;
  void save(const std::string& path) const;
  static UserIndex load(const std::string& path, std::size_t d);
};

UserIndex build_user_index(const UserEncoderParams& params,
                           const std::vector<corpus::UserProfile>& profiles,
                           const embedding::EmbeddingProvider& provider);

// Top-m users by cosine similarity, descending, ties broken by ascending
// user id. The querying user is eligible and ranks first.
std::vector<std::string> retrieve_users(const UserIndex& index, const std::string& user_id,
                                        std::size_t m);

}  // namespace cfrag::user_model
