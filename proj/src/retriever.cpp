#include "cfrag/retriever.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>

#include "cfrag/checkpoint.hpp"
#include "cfrag/errors.hpp"
#include "cfrag/optim.hpp"

namespace cfrag::retriever {

namespace {
constexpr const char* kMagic = "CFRAGRET";

Tensor mlp1_forward(const RetrieverParams& params, const Tensor& x) {
  Tensor h = tensor::add(tensor::matmul(x, params.mlp1_w1), params.mlp1_b1);
  h = tensor::relu(h);
  return tensor::add(tensor::matmul(h, params.mlp1_w2), params.mlp1_b2);
}
}  // namespace

RetrieverParams RetrieverParams::init(std::size_t d, double alpha, std::uint64_t seed) {
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("retriever alpha must lie in [0,1]");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 0.05);
  auto random_matrix = [&](std::size_t rows, std::size_t cols) {
    std::vector<double> v(rows * cols);
    for (double& x : v) x = dist(rng);
    return Tensor::from(rows, cols, std::move(v), true);
  };
  RetrieverParams p;
  p.d = d;
  p.alpha = alpha;
  p.query_proj = Tensor::identity(d, true);
  p.doc_proj = Tensor::identity(d, true);
  p.mlp1_w1 = random_matrix(d, d);
  p.mlp1_b1 = Tensor::zeros(1, d, true);
  p.mlp1_w2 = random_matrix(d, d);
  p.mlp1_b2 = Tensor::zeros(1, d, true);
  return p;
}

std::vector<Tensor> RetrieverParams::trainable() const {
  return {query_proj, doc_proj, mlp1_w1, mlp1_b1, mlp1_w2, mlp1_b2};
}

void RetrieverParams::save(const std::string& path) const {
  checkpoint::Checkpoint ckpt;
  ckpt.magic = kMagic;
  ckpt.d = static_cast<std::uint32_t>(d);
  ckpt.blobs = {{"alpha", Tensor::scalar(alpha)},
                {"query_proj", query_proj},
                {"doc_proj", doc_proj},
                {"mlp1_w1", mlp1_w1},
                {"mlp1_b1", mlp1_b1},
                {"mlp1_w2", mlp1_w2},
                {"mlp1_b2", mlp1_b2}};
  checkpoint::save_checkpoint(ckpt, path);
}

RetrieverParams RetrieverParams::load(const std::string& path) {
  auto ckpt = checkpoint::load_checkpoint(path, kMagic);
  RetrieverParams p;
  p.d = ckpt.d;
  p.alpha = ckpt.blob("alpha").item();
  p.query_proj = ckpt.blob("query_proj");
  p.doc_proj = ckpt.blob("doc_proj");
  p.mlp1_w1 = ckpt.blob("mlp1_w1");
  p.mlp1_b1 = ckpt.blob("mlp1_b1");
  p.mlp1_w2 = ckpt.blob("mlp1_w2");
  p.mlp1_b2 = ckpt.blob("mlp1_b2");
  return p;
}

Tensor semantic_score(const RetrieverParams& params, const Tensor& q_vec, const Tensor& d_vec) {
  return tensor::cosine(tensor::matmul(q_vec, params.query_proj),
                        tensor::matmul(d_vec, params.doc_proj));
}

Tensor preference_score(const RetrieverParams& params, const Tensor& e_u, const Tensor& d_vec) {
  return tensor::cosine(mlp1_forward(params, e_u), tensor::matmul(d_vec, params.doc_proj));
}

Tensor combined_score(const RetrieverParams& params, const Tensor& s_qd, const Tensor& s_ud) {
  return tensor::add(tensor::scale(s_qd, 1.0 - params.alpha),
                     tensor::scale(s_ud, params.alpha));
}

Scores score_values(const RetrieverParams& params, const std::vector<double>& q_vec,
                    const std::vector<double>& e_u, const std::vector<double>& d_vec) {
  Tensor q = Tensor::from(1, q_vec.size(), q_vec);
  Tensor u = Tensor::from(1, e_u.size(), e_u);
  Tensor d = Tensor::from(1, d_vec.size(), d_vec);
  Scores s;
  s.s_qd = semantic_score(params, q, d).item();
  s.s_ud = preference_score(params, u, d).item();
  s.s_uqd = (1.0 - params.alpha) * s.s_qd + params.alpha * s.s_ud;
  return s;
}

std::vector<Candidate> retrieve_topk_per_user(const RetrieverParams& params,
                                              const std::vector<double>& q_vec,
                                              const std::vector<double>& e_u,
                                              const std::vector<EmbeddedHistory>& users,
                                              std::size_t k, SelectionScore selection) {
  if (users.empty()) throw ContractError("retrieve_topk_per_user: no users given");
  if (k < 1) throw ContractError("retrieve_topk_per_user: k must be at least 1");

  std::vector<Candidate> all;
  for (const auto& user : users) {
    if (user.docs.empty()) throw ContractError("retrieve_topk_per_user: empty history");
    std::vector<Candidate> local;
    local.reserve(user.docs.size());
    for (std::size_t i = 0; i < user.docs.size(); ++i) {
      Candidate c;
      c.owner_user_id = user.user_id;
      c.doc = user.docs[i];
      c.embedding = user.vectors[i];
      const Scores s = score_values(params, q_vec, e_u, c.embedding);
      c.s_qd = s.s_qd;
      c.s_ud = s.s_ud;
      c.s_uqd = s.s_uqd;
      local.push_back(std::move(c));
    }
    auto key = [selection](const Candidate& c) {
      return selection == SelectionScore::Semantic ? c.s_qd : c.s_uqd;
    };
    std::sort(local.begin(), local.end(), [&](const Candidate& a, const Candidate& b) {
      if (key(a) != key(b)) return key(a) > key(b);
      return a.doc.id < b.doc.id;
    });
    const std::size_t take = std::min(k, local.size());
    all.insert(all.end(), local.begin(), local.begin() + static_cast<long>(take));
  }

  // Deduplicate by document id, keeping the highest-scoring instance.
  std::unordered_map<std::string, std::size_t> best;
  std::vector<Candidate> deduped;
  for (auto& c : all) {
    auto it = best.find(c.doc.id);
    if (it == best.end()) {
      best.emplace(c.doc.id, deduped.size());
      deduped.push_back(std::move(c));
    } else if (c.s_uqd > deduped[it->second].s_uqd) {
      deduped[it->second] = std::move(c);
    }
  }
  return deduped;
}

Tensor score_distribution(const std::vector<Tensor>& scores) {
  if (scores.empty()) throw ContractError("score_distribution: no scores");
  Tensor row = scores[0];
  for (std::size_t i = 1; i < scores.size(); ++i) row = tensor::concat_cols(row, scores[i]);
  return tensor::row_softmax(row);
}

std::vector<double> distribution_values(const std::vector<double>& scores) {
  if (scores.empty()) throw ContractError("distribution_values: no scores");
  const double mx = *std::max_element(scores.begin(), scores.end());
  std::vector<double> out(scores.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - mx);
    denom += out[i];
  }
  for (double& x : out) x /= denom;
  return out;
}

Tensor kl_to_constant(const Tensor& p, const std::vector<double>& p_target) {
  if (p.rows() != 1 || p.cols() != p_target.size())
    throw ContractError("kl_to_constant: support mismatch");
  std::vector<double> log_q(p_target.size());
  for (std::size_t i = 0; i < p_target.size(); ++i) {
    if (p_target[i] <= 0.0) throw ContractError("kl_to_constant: target must be positive");
    log_q[i] = std::log(p_target[i]);
  }
  const std::size_t n = log_q.size();
  Tensor log_q_t = Tensor::from(1, n, std::move(log_q));
  return tensor::sum_all(tensor::mul(p, tensor::sub(tensor::log(p), log_q_t)));
}

double kl_value(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw ContractError("kl_value: support mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

TrainingRun train_retriever(
    RetrieverParams& params, const std::vector<corpus::Sample>& samples,
    const std::function<std::vector<double>(const corpus::Sample&)>& query_vec,
    const std::function<std::vector<double>(const corpus::Sample&)>& user_vec,
    const std::function<std::vector<EmbeddedHistory>(const corpus::Sample&)>& users_of,
    const FeedbackFn& feedback, const RetrieverTrainConfig& config) {
  if (samples.empty()) throw ContractError("train_retriever: no samples");

  // Candidate selection per the training protocol: pre-trained semantic score,
  // fixed for the whole run.
  struct SampleState {
    std::vector<double> q;
    std::vector<double> u;
    std::vector<Candidate> candidates;
    std::vector<double> p_llm;
  };
  std::vector<SampleState> states;
  states.reserve(samples.size());
  for (const auto& s : samples) {
    SampleState st;
    st.q = query_vec(s);
    st.u = user_vec(s);
    st.candidates = retrieve_topk_per_user(params, st.q, st.u, users_of(s), config.k,
                                           SelectionScore::Semantic);
    try {
      st.p_llm = feedback(s, st.candidates);
    } catch (const std::exception& e) {
      throw TrainingError("feedback failed for sample " + s.id + ": " + e.what());
    }
    if (st.p_llm.size() != st.candidates.size())
      throw ContractError("train_retriever: feedback distribution support mismatch");
    states.push_back(std::move(st));
  }

  tensor::Adam optimizer(params.trainable(), config.learning_rate);
  TrainingRun run;
  long step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (const auto& st : states) {
      Tensor q = Tensor::from(1, st.q.size(), st.q);
      Tensor u = Tensor::from(1, st.u.size(), st.u);
      std::vector<Tensor> scores;
      scores.reserve(st.candidates.size());
      for (const auto& c : st.candidates) {
        Tensor d = Tensor::from(1, c.embedding.size(), c.embedding);
        scores.push_back(
            combined_score(params, semantic_score(params, q, d), preference_score(params, u, d)));
      }
      optimizer.zero_grad();
      Tensor loss = kl_to_constant(score_distribution(scores), st.p_llm);
      if (!std::isfinite(loss.item())) throw TrainingError("retriever loss diverged", step);
      tensor::backward(loss);
      optimizer.step();
      epoch_loss += loss.item();
      ++step;
    }
    run.loss_trace.push_back(epoch_loss / static_cast<double>(states.size()));
  }
  return run;
}

}  // namespace cfrag::retriever
