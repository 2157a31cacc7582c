#include "cfrag/reranker.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "cfrag/checkpoint.hpp"
#include "cfrag/embedding.hpp"
#include "cfrag/errors.hpp"
#include "cfrag/optim.hpp"

namespace cfrag::reranker {

using nlohmann::json;

namespace {
constexpr const char* kMagic = "CFRAGRRK";
}

std::vector<double> MockCrossFeaturizer::features(const std::string& query,
                                                  const std::string& doc_text) const {
  if (query.empty() || doc_text.empty())
    throw ContractError("cross features: texts must be nonempty");
  const auto a = embedding::hash_embed(query, d_);
  const auto b = embedding::hash_embed(doc_text, d_);
  std::vector<double> h(d_);
  for (std::size_t i = 0; i < d_; ++i) {
    const std::size_t rot = (i + 1) % d_;
    h[i] = a[i] * b[i] + 0.5 * std::abs(a[rot] - b[rot]) + 0.25 * a[i];
  }
  double norm = 0.0;
  for (double x : h) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) {
    h.assign(d_, 0.0);
    h[0] = 1.0;
    return h;
  }
  for (double& x : h) x /= norm;
  return h;
}

RemoteCrossFeaturizer::RemoteCrossFeaturizer(std::string base_url, std::string path,
                                             std::size_t d, int max_retries)
    : base_url_(std::move(base_url)), path_(std::move(path)), d_(d), max_retries_(max_retries) {}

std::vector<double> RemoteCrossFeaturizer::features(const std::string& query,
                                                    const std::string& doc_text) const {
  json body;
  body["pairs"] = json::array({json::array({query, doc_text})});
  httplib::Client client(base_url_);
  int attempts = 0;
  std::string last_error;
  while (attempts < max_retries_) {
    ++attempts;
    auto res = client.Post(path_, body.dump(), "application/json");
    if (res && res->status == 200) {
      json reply = json::parse(res->body);
      auto v = reply.at("vectors").at(0).get<std::vector<double>>();
      if (v.size() != d_) throw DimensionError("remote cross features have wrong dimension");
      return v;
    }
    last_error = res ? "status " + std::to_string(res->status) : "connection failed";
    std::this_thread::sleep_for(std::chrono::milliseconds(20 * attempts));
  }
  throw TransportError("cross-encoder request failed: " + last_error, attempts);
}

RerankerParams RerankerParams::init(std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 0.05);
  auto random_matrix = [&](std::size_t rows, std::size_t cols) {
    std::vector<double> v(rows * cols);
    for (double& x : v) x = dist(rng);
    return Tensor::from(rows, cols, std::move(v), true);
  };
  RerankerParams p;
  p.d = d;
  p.mlp2_w1 = random_matrix(d, d);
  p.mlp2_b1 = Tensor::zeros(1, d, true);
  p.mlp2_w2 = random_matrix(d, d);
  p.mlp2_b2 = Tensor::zeros(1, d, true);
  p.mlp3_w1 = random_matrix(2 * d, 2 * d);
  p.mlp3_b1 = Tensor::zeros(1, 2 * d, true);
  p.mlp3_w2 = random_matrix(2 * d, 1);
  p.mlp3_b2 = Tensor::zeros(1, 1, true);
  return p;
}

std::vector<Tensor> RerankerParams::trainable() const {
  return {mlp2_w1, mlp2_b1, mlp2_w2, mlp2_b2, mlp3_w1, mlp3_b1, mlp3_w2, mlp3_b2};
}

void RerankerParams::save(const std::string& path) const {
  checkpoint::Checkpoint ckpt;
  ckpt.magic = kMagic;
  ckpt.d = static_cast<std::uint32_t>(d);
  ckpt.blobs = {{"mlp2_w1", mlp2_w1}, {"mlp2_b1", mlp2_b1}, {"mlp2_w2", mlp2_w2},
                {"mlp2_b2", mlp2_b2}, {"mlp3_w1", mlp3_w1}, {"mlp3_b1", mlp3_b1},
                {"mlp3_w2", mlp3_w2}, {"mlp3_b2", mlp3_b2}};
  checkpoint::save_checkpoint(ckpt, path);
}

RerankerParams RerankerParams::load(const std::string& path) {
  auto ckpt = checkpoint::load_checkpoint(path, kMagic);
  RerankerParams p;
  p.d = ckpt.d;
  p.mlp2_w1 = ckpt.blob("mlp2_w1");
  p.mlp2_b1 = ckpt.blob("mlp2_b1");
  p.mlp2_w2 = ckpt.blob("mlp2_w2");
  p.mlp2_b2 = ckpt.blob("mlp2_b2");
  p.mlp3_w1 = ckpt.blob("mlp3_w1");
  p.mlp3_b1 = ckpt.blob("mlp3_b1");
  p.mlp3_w2 = ckpt.blob("mlp3_w2");
  p.mlp3_b2 = ckpt.blob("mlp3_b2");
  return p;
}

Tensor rerank_score(const RerankerParams& params, const Tensor& h_qd, const Tensor& e_u) {
  Tensor u = tensor::add(tensor::matmul(e_u, params.mlp2_w1), params.mlp2_b1);
  u = tensor::relu(u);
  u = tensor::add(tensor::matmul(u, params.mlp2_w2), params.mlp2_b2);
  Tensor joint = tensor::concat_cols(h_qd, u);
  Tensor h = tensor::add(tensor::matmul(joint, params.mlp3_w1), params.mlp3_b1);
  h = tensor::relu(h);
  return tensor::add(tensor::matmul(h, params.mlp3_w2), params.mlp3_b2);
}

double rerank_score_value(const RerankerParams& params, const std::vector<double>& h_qd,
                          const std::vector<double>& e_u) {
  Tensor h = Tensor::from(1, h_qd.size(), h_qd);
  Tensor u = Tensor::from(1, e_u.size(), e_u);
  return rerank_score(params, h, u).item();
}

std::vector<Candidate> rerank_topk(const RerankerParams& params,
                                   const CrossFeaturizer& featurizer, const std::string& query,
                                   const std::vector<Candidate>& candidates,
                                   const std::vector<double>& e_u, std::size_t k) {
  if (candidates.empty()) throw ContractError("rerank_topk: no candidates");
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto h = featurizer.features(query, candidates[i].doc.text);
    scored.emplace_back(rerank_score_value(params, h, e_u), i);
  }
  std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return candidates[a.second].doc.id < candidates[b.second].doc.id;
  });
  const std::size_t take = std::min(k, scored.size());
  std::vector<Candidate> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(candidates[scored[i].second]);
  return out;
}

retriever::TrainingRun train_reranker(RerankerParams& params,
                                      const std::vector<SampleCandidates>& inputs,
                                      const CrossFeaturizer& featurizer,
                                      const FeedbackFn& feedback,
                                      const RerankerTrainConfig& config) {
  if (inputs.empty()) throw ContractError("train_reranker: no training inputs");

  struct SampleState {
    std::vector<std::vector<double>> features;
    std::vector<double> e_u;
    std::vector<double> p_llm;
  };
  std::vector<SampleState> states;
  states.reserve(inputs.size());
  for (const auto& in : inputs) {
    SampleState st;
    st.e_u = in.e_u;
    for (const auto& c : in.candidates)
      st.features.push_back(featurizer.features(in.sample.query, c.doc.text));
    try {
      st.p_llm = feedback(in.sample, in.candidates);
    } catch (const std::exception& e) {
      throw TrainingError("feedback failed for sample " + in.sample.id + ": " + e.what());
    }
    if (st.p_llm.size() != in.candidates.size())
      throw ContractError("train_reranker: feedback distribution support mismatch");
    states.push_back(std::move(st));
  }

  tensor::Adam optimizer(params.trainable(), config.learning_rate);
  retriever::TrainingRun run;
  long step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (const auto& st : states) {
      Tensor u = Tensor::from(1, st.e_u.size(), st.e_u);
      std::vector<Tensor> scores;
      scores.reserve(st.features.size());
      for (const auto& f : st.features) {
        Tensor h = Tensor::from(1, f.size(), f);
        scores.push_back(rerank_score(params, h, u));
      }
      optimizer.zero_grad();
      Tensor loss = retriever::kl_to_constant(retriever::score_distribution(scores), st.p_llm);
      if (!std::isfinite(loss.item())) throw TrainingError("reranker loss diverged", step);
      tensor::backward(loss);
      optimizer.step();
      epoch_loss += loss.item();
      ++step;
    }
    run.loss_trace.push_back(epoch_loss / static_cast<double>(states.size()));
  }
  return run;
}

}  // namespace cfrag::reranker
