#include "cfrag/user_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cfrag/errors.hpp"
#include "cfrag/optim.hpp"

namespace cfrag::user_model {

using tensor::Tensor;

HistoryView identity_view(std::size_t history_len) {
  HistoryView view(history_len);
  for (std::size_t i = 0; i < history_len; ++i) view[i].doc_index = i;
  return view;
}

HistoryView augment_crop(std::size_t history_len, double eta_crop, std::mt19937_64& rng) {
  if (history_len == 0) throw ContractError("augment_crop: empty history");
  const std::size_t len = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(eta_crop * static_cast<double>(history_len))));
  std::uniform_int_distribution<std::size_t> start_dist(0, history_len - len);
  const std::size_t start = start_dist(rng);
  HistoryView view(len);
  for (std::size_t i = 0; i < len; ++i) view[i].doc_index = start + i;
  return view;
}

HistoryView augment_mask(std::size_t history_len, double eta_mask, std::mt19937_64& rng) {
  if (history_len == 0) throw ContractError("augment_mask: empty history");
  const std::size_t count =
      static_cast<std::size_t>(std::floor(eta_mask * static_cast<double>(history_len)));
  HistoryView view = identity_view(history_len);
  // Uniform subset via partial Fisher-Yates over positions.
  std::vector<std::size_t> positions(history_len);
  std::iota(positions.begin(), positions.end(), 0);
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> dist(i, history_len - 1);
    std::swap(positions[i], positions[dist(rng)]);
    view[positions[i]].masked = true;
  }
  return view;
}

HistoryView augment_reorder(std::size_t history_len, double eta_reorder, std::mt19937_64& rng) {
  if (history_len == 0) throw ContractError("augment_reorder: empty history");
  const std::size_t len =
      static_cast<std::size_t>(std::floor(eta_reorder * static_cast<double>(history_len)));
  HistoryView view = identity_view(history_len);
  if (len <= 1) return view;
  std::uniform_int_distribution<std::size_t> start_dist(0, history_len - len);
  const std::size_t start = start_dist(rng);
  for (std::size_t i = len - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> dist(0, i);
    std::swap(view[start + i], view[start + dist(rng)]);
  }
  return view;
}

std::pair<HistoryView, HistoryView> sample_views(std::size_t history_len,
                                                 const AugmentationConfig& config,
                                                 std::mt19937_64& rng) {
  if (history_len == 0) throw ContractError("sample_views: empty history");
  AugmentationKind kinds[3] = {AugmentationKind::Crop, AugmentationKind::Mask,
                               AugmentationKind::Reorder};
  std::uniform_int_distribution<int> first_dist(0, 2);
  const int first = first_dist(rng);
  std::uniform_int_distribution<int> second_dist(0, 1);
  int second = second_dist(rng);
  if (second >= first) ++second;  // without replacement

  auto apply = [&](AugmentationKind kind) {
    switch (kind) {
      case AugmentationKind::Crop: return augment_crop(history_len, config.eta_crop, rng);
      case AugmentationKind::Mask: return augment_mask(history_len, config.eta_mask, rng);
      case AugmentationKind::Reorder:
        return augment_reorder(history_len, config.eta_reorder, rng);
    }
    throw ContractError("sample_views: bad augmentation kind");
  };
  HistoryView a = apply(kinds[first]);
  HistoryView b = apply(kinds[second]);
  return {std::move(a), std::move(b)};
}

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = dist(rng);
  return Tensor::from(rows, cols, std::move(v), /*requires_grad=*/true);
}

Tensor const_row(std::size_t cols, double value) {
  return Tensor::from(1, cols, std::vector<double>(cols, value), /*requires_grad=*/true);
}

}  // namespace

UserEncoderParams UserEncoderParams::init(std::size_t d, std::size_t n_max, std::size_t heads,
                                          std::uint64_t seed) {
  if (heads == 0 || d % heads != 0)
    throw ConfigError("user encoder: head count must divide embedding dimension");
  std::mt19937_64 rng(seed);
  UserEncoderParams p;
  p.d = d;
  p.n_max = n_max;
  p.heads = heads;
  const double stddev = 0.02;
  p.pos_table = random_matrix(n_max, d, stddev, rng);
  p.mask_embedding = random_matrix(1, d, stddev, rng);
  p.wq = random_matrix(d, d, stddev, rng);
  p.wk = random_matrix(d, d, stddev, rng);
  p.wv = random_matrix(d, d, stddev, rng);
  p.wo = random_matrix(d, d, stddev, rng);
  p.ffn_w1 = random_matrix(d, 4 * d, stddev, rng);
  p.ffn_b1 = const_row(4 * d, 0.0);
  p.ffn_w2 = random_matrix(4 * d, d, stddev, rng);
  p.ffn_b2 = const_row(d, 0.0);
  p.ln1_gain = const_row(d, 1.0);
  p.ln1_bias = const_row(d, 0.0);
  p.ln2_gain = const_row(d, 1.0);
  p.ln2_bias = const_row(d, 0.0);
  return p;
}

std::vector<Tensor> UserEncoderParams::trainable() const {
  return {pos_table, mask_embedding, wq, wk, wv, wo, ffn_w1, ffn_b1,
          ffn_w2, ffn_b2, ln1_gain, ln1_bias, ln2_gain, ln2_bias};
}

std::vector<std::pair<std::string, Tensor>> UserEncoderParams::named() const {
  return {{"pos_table", pos_table}, {"mask_embedding", mask_embedding},
          {"wq", wq},               {"wk", wk},
          {"wv", wv},               {"wo", wo},
          {"ffn_w1", ffn_w1},       {"ffn_b1", ffn_b1},
          {"ffn_w2", ffn_w2},       {"ffn_b2", ffn_b2},
          {"ln1_gain", ln1_gain},   {"ln1_bias", ln1_bias},
          {"ln2_gain", ln2_gain},   {"ln2_bias", ln2_bias}};
}

Tensor embed_view(const UserEncoderParams& params, const HistoryView& view,
                  const std::vector<std::vector<double>>& doc_embeddings) {
  const std::size_t n = view.size();
  std::vector<Tensor> rows;
  rows.reserve(n);
  // Build as a constant matrix, then substitute mask rows through the graph
  // so the mask embedding receives gradient.
  std::vector<double> base(n * params.d, 0.0);
  std::vector<std::size_t> mask_rows;
  for (std::size_t i = 0; i < n; ++i) {
    if (view[i].masked) {
      mask_rows.push_back(i);
    } else {
      const auto& e = doc_embeddings.at(view[i].doc_index);
      std::copy(e.begin(), e.end(), base.begin() + static_cast<long>(i * params.d));
    }
  }
  Tensor matrix = Tensor::from(n, params.d, std::move(base));
  if (!mask_rows.empty()) {
    // One-hot column selecting the masked rows times the mask embedding row.
    std::vector<double> sel(n, 0.0);
    for (std::size_t r : mask_rows) sel[r] = 1.0;
    Tensor selector = Tensor::from(n, 1, std::move(sel));
    matrix = tensor::add(matrix, tensor::matmul(selector, params.mask_embedding));
  }
  return matrix;
}

Tensor encode_user(const UserEncoderParams& params, const Tensor& embedded_history) {
  const std::size_t n = embedded_history.rows();
  const std::size_t d = params.d;
  if (embedded_history.cols() != d)
    throw DimensionError("encode_user: history embedding width does not match d");
  if (n > params.n_max)
    throw ContractError("encode_user: history longer than n_max; caller must truncate");

  Tensor pos = tensor::slice_cols(tensor::transpose(params.pos_table), 0, n);
  pos = tensor::transpose(pos);  // first n rows of the positional table
  Tensor x = tensor::add(embedded_history, pos);

  // Multi-head self-attention.
  Tensor q = tensor::matmul(x, params.wq);
  Tensor k = tensor::matmul(x, params.wk);
  Tensor v = tensor::matmul(x, params.wv);
  const std::size_t dh = d / params.heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor heads_out;
  for (std::size_t h = 0; h < params.heads; ++h) {
    Tensor qh = tensor::slice_cols(q, h * dh, dh);
    Tensor kh = tensor::slice_cols(k, h * dh, dh);
    Tensor vh = tensor::slice_cols(v, h * dh, dh);
    Tensor attn = tensor::row_softmax(
        tensor::scale(tensor::matmul(qh, tensor::transpose(kh)), scale_factor));
    Tensor oh = tensor::matmul(attn, vh);
    heads_out = (h == 0) ? oh : tensor::concat_cols(heads_out, oh);
  }
  Tensor attn_out = tensor::matmul(heads_out, params.wo);

  // Post-layer-norm residual blocks.
  Tensor h1 = tensor::add_row(
      tensor::mul_row(tensor::layer_norm_rows(tensor::add(x, attn_out)), params.ln1_gain),
      params.ln1_bias);
  Tensor ff = tensor::add_row(tensor::matmul(h1, params.ffn_w1), params.ffn_b1);
  ff = tensor::relu(ff);
  ff = tensor::add_row(tensor::matmul(ff, params.ffn_w2), params.ffn_b2);
  Tensor h2 = tensor::add_row(
      tensor::mul_row(tensor::layer_norm_rows(tensor::add(h1, ff)), params.ln2_gain),
      params.ln2_bias);

  return tensor::mean_rows(h2);
}

Tensor infonce_loss(const std::vector<Tensor>& view_a, const std::vector<Tensor>& view_b,
                    double tau1) {
  const std::size_t batch = view_a.size();
  if (batch != view_b.size()) throw ContractError("infonce_loss: view lists differ in length");
  if (batch < 2) throw ContractError("infonce_loss: batch size must be at least 2");
  if (tau1 <= 0.0) throw ConfigError("infonce_loss: temperature must be positive");

  // Pairwise similarity matrix, scaled by 1/tau.
  std::vector<std::vector<Tensor>> sim(batch, std::vector<Tensor>(batch));
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t j = 0; j < batch; ++j)
      sim[i][j] = tensor::scale(tensor::cosine(view_a[i], view_b[j]), 1.0 / tau1);

  auto log_sum_exp = [](const std::vector<Tensor>& terms) {
    Tensor row = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) row = tensor::concat_cols(row, terms[i]);
    return tensor::log(tensor::sum_all(tensor::exp(row)));
  };

  Tensor total;
  for (std::size_t u = 0; u < batch; ++u) {
    std::vector<Tensor> negatives_ab, negatives_ba;
    for (std::size_t v = 0; v < batch; ++v) {
      if (v == u) continue;
      negatives_ab.push_back(sim[u][v]);  // cos(e'_u, e''_v)
      negatives_ba.push_back(sim[v][u]);  // cos(e'_v, e''_u)
    }
    Tensor term1 = tensor::sub(sim[u][u], log_sum_exp(negatives_ab));
    Tensor term2 = tensor::sub(sim[u][u], log_sum_exp(negatives_ba));
    Tensor per_user = tensor::scale(tensor::add(term1, term2), -1.0);
    total = (u == 0) ? per_user : tensor::add(total, per_user);
  }
  return tensor::scale(total, 1.0 / static_cast<double>(batch));
}

namespace {

std::vector<std::vector<double>> embed_history(const embedding::EmbeddingProvider& provider,
                                               const std::vector<corpus::Document>& history) {
  std::vector<std::vector<double>> out;
  out.reserve(history.size());
  for (const auto& doc : history) out.push_back(provider.embed_document(doc));
  return out;
}

}  // namespace

UserTrainResult train_user_encoder(const std::vector<corpus::UserProfile>& profiles,
                                   const embedding::EmbeddingProvider& provider,
                                   const UserTrainConfig& config) {
  if (profiles.size() < 2)
    throw ContractError("train_user_encoder: need at least two profiles");
  if (provider.dimension() != config.d)
    throw DimensionError("train_user_encoder: provider dimension does not match config");

  UserTrainResult result;
  result.params = UserEncoderParams::init(config.d, config.n_max, config.heads, config.seed);

  // Document embeddings are frozen; compute them once.
  std::vector<std::vector<corpus::Document>> histories;
  std::vector<std::vector<std::vector<double>>> embedded;
  histories.reserve(profiles.size());
  for (const auto& p : profiles) {
    histories.push_back(corpus::truncate_history(p.history, config.n_max));
    embedded.push_back(embed_history(provider, histories.back()));
  }

  tensor::Adam optimizer(result.params.trainable(), config.learning_rate);
  std::mt19937_64 rng(config.seed ^ 0xc0ffee);

  std::vector<std::size_t> order(profiles.size());
  std::iota(order.begin(), order.end(), 0);

  long step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      if (end - begin < 2) continue;  // no negatives in a singleton batch

      std::vector<Tensor> emb_a, emb_b;
      for (std::size_t idx = begin; idx < end; ++idx) {
        const std::size_t ui = order[idx];
        auto [va, vb] = sample_views(histories[ui].size(), config.augmentation, rng);
        emb_a.push_back(
            encode_user(result.params, embed_view(result.params, va, embedded[ui])));
        emb_b.push_back(
            encode_user(result.params, embed_view(result.params, vb, embedded[ui])));
      }
      optimizer.zero_grad();
      Tensor loss = infonce_loss(emb_a, emb_b, config.tau1);
      if (!std::isfinite(loss.item()))
        throw TrainingError("user encoder loss diverged", step);
      tensor::backward(loss);
      optimizer.step();
      epoch_loss += loss.item();
      ++batches;
      ++step;
    }
    result.loss_trace.push_back(batches ? epoch_loss / static_cast<double>(batches) : 0.0);
  }
  return result;
}

const std::vector<double>& UserIndex::embedding_of(const std::string& user_id) const {
  for (std::size_t i = 0; i < user_ids.size(); ++i) {
    if (user_ids[i] == user_id) return embeddings[i];
  }
  throw LookupError("user not in index: " + user_id);
}

void UserIndex::save(const std::string& path) const {
  std::vector<embedding::CacheEntry> entries;
  entries.reserve(user_ids.size());
  for (std::size_t i = 0; i < user_ids.size(); ++i) {
    embedding::CacheEntry e;
    e.id = user_ids[i];
    e.vector.assign(embeddings[i].begin(), embeddings[i].end());
    entries.push_back(std::move(e));
  }
  const std::uint32_t dim =
      embeddings.empty() ? 0 : static_cast<std::uint32_t>(embeddings.front().size());
  embedding::write_embedding_cache(path, dim, entries);
}

UserIndex UserIndex::load(const std::string& path, std::size_t d) {
  UserIndex index;
  for (auto& e : embedding::read_embedding_cache(path, static_cast<std::uint32_t>(d))) {
    index.user_ids.push_back(e.id);
    index.embeddings.emplace_back(e.vector.begin(), e.vector.end());
  }
  return index;
}

UserIndex build_user_index(const UserEncoderParams& params,
                           const std::vector<corpus::UserProfile>& profiles,
                           const embedding::EmbeddingProvider& provider) {
  UserIndex index;
  for (const auto& p : profiles) {
    const auto history = corpus::truncate_history(p.history, params.n_max);
    const auto embedded = embed_history(provider, history);
    Tensor e_u = encode_user(params, embed_view(params, identity_view(history.size()), embedded));
    std::vector<double> v = e_u.values();
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) throw NumericError("build_user_index: zero-norm user embedding");
    for (double& x : v) x /= norm;
    index.user_ids.push_back(p.user_id);
    index.embeddings.push_back(std::move(v));
  }
  return index;
}

std::vector<std::string> retrieve_users(const UserIndex& index, const std::string& user_id,
                                        std::size_t m) {
  if (m < 1) throw ContractError("retrieve_users: m must be at least 1");
  if (m > index.user_ids.size())
    throw ContractError("retrieve_users: m exceeds the number of indexed users");
  const auto& query = index.embedding_of(user_id);

  std::vector<std::pair<double, std::string>> scored;
  scored.reserve(index.user_ids.size());
  for (std::size_t i = 0; i < index.user_ids.size(); ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < query.size(); ++j) dot += query[j] * index.embeddings[i][j];
    scored.emplace_back(dot, index.user_ids[i]);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::string> out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) out.push_back(scored[i].second);
  return out;
}

}  // namespace cfrag::user_model
