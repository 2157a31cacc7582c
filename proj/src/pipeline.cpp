#include "cfrag/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cfrag/checkpoint.hpp"
#include "cfrag/embedding.hpp"
#include "cfrag/errors.hpp"
#include "cfrag/feedback.hpp"
#include "cfrag/prompts.hpp"
#include "cfrag/reranker.hpp"
#include "cfrag/retriever.hpp"
#include "cfrag/synthetic.hpp"

namespace cfrag::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

std::string user_encoder_path(const config::PipelineConfig& c) {
  return c.out_dir + "/user_encoder.ckpt";
}
std::string user_index_path(const config::PipelineConfig& c) {
  return c.out_dir + "/user_index.bin";
}
std::string retriever_path(const config::PipelineConfig& c) {
  return c.out_dir + "/retriever.ckpt";
}
std::string reranker_path(const config::PipelineConfig& c) {
  return c.out_dir + "/reranker.ckpt";
}

namespace {

constexpr const char* kUserMagic = "CFRAGUSR";

std::string sidecar_of(const config::PipelineConfig& c) {
  return c.sidecar_path.empty() ? c.data_path + ".sidecar.json" : c.sidecar_path;
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path))
    throw CheckpointError(what + " is missing: " + path + " (run the earlier stage first)");
}

struct Bundle {
  synthetic::SyntheticData data;
  std::shared_ptr<embedding::EmbeddingProvider> embedder;
  std::unique_ptr<feedback::GenerationProvider> generator;
};

Bundle open_bundle(const config::PipelineConfig& c) {
  config::validate(c);
  if (c.data_path.empty()) throw ConfigError("data_path is required");
  Bundle b;
  const std::string sidecar = sidecar_of(c);
  if (fs::exists(sidecar)) {
    b.data = synthetic::load_with_sidecar(c.data_path, sidecar);
  } else if (c.llm_provider == "mock") {
    throw ConfigError("mock generation requires the oracle sidecar: " + sidecar);
  } else {
    b.data.dataset = corpus::load_dataset(c.data_path);
  }

  std::shared_ptr<embedding::EmbeddingProvider> inner;
  if (c.embed_provider == "hash") {
    inner = std::make_shared<embedding::HashEmbeddingProvider>(c.d);
  } else {
    inner = std::make_shared<embedding::RemoteEmbeddingProvider>(c.embed_url, "/embed", c.d);
  }
  b.embedder = std::make_shared<embedding::CachingProvider>(inner);

  if (c.llm_provider == "mock") {
    b.generator = std::make_unique<feedback::MockOracleProvider>(b.data.oracle);
  } else {
    b.generator =
        std::make_unique<feedback::HttpChatProvider>(c.llm_url, "/v1/chat/completions", c.llm_model);
  }
  return b;
}

retriever::EmbeddedHistory embed_history(const Bundle& b, const config::PipelineConfig& c,
                                         const std::string& user_id) {
  const auto& profile = b.data.dataset.profile(user_id);
  retriever::EmbeddedHistory h;
  h.user_id = user_id;
  h.docs = corpus::truncate_history(profile.history, c.n_max);
  h.vectors.reserve(h.docs.size());
  for (const auto& doc : h.docs) h.vectors.push_back(b.embedder->embed_document(doc));
  return h;
}

std::vector<corpus::Sample> split_samples(const Bundle& b, const std::vector<std::string>& ids) {
  if (ids.empty()) return b.data.dataset.samples;
  const std::set<std::string> wanted(ids.begin(), ids.end());
  std::vector<corpus::Sample> out;
  for (const auto& s : b.data.dataset.samples)
    if (wanted.count(s.id)) out.push_back(s);
  return out;
}

std::string build_candidate_prompt(const corpus::Sample& s, const corpus::Document& d) {
  return prompts::build_prompt(s.task, s.query, {d});
}

}  // namespace

void save_user_encoder(const user_model::UserEncoderParams& params, const std::string& path) {
  checkpoint::Checkpoint ckpt;
  ckpt.magic = kUserMagic;
  ckpt.d = static_cast<std::uint32_t>(params.d);
  ckpt.blobs = params.named();
  ckpt.blobs.emplace_back("meta_n_max",
                          tensor::Tensor::scalar(static_cast<double>(params.n_max)));
  ckpt.blobs.emplace_back("meta_heads",
                          tensor::Tensor::scalar(static_cast<double>(params.heads)));
  checkpoint::save_checkpoint(ckpt, path);
}

user_model::UserEncoderParams load_user_encoder(const std::string& path) {
  const auto ckpt = checkpoint::load_checkpoint(path, kUserMagic);
  user_model::UserEncoderParams p;
  p.d = ckpt.d;
  p.n_max = static_cast<std::size_t>(ckpt.blob("meta_n_max").item());
  p.heads = static_cast<std::size_t>(ckpt.blob("meta_heads").item());
  p.pos_table = ckpt.blob("pos_table");
  p.mask_embedding = ckpt.blob("mask_embedding");
  p.wq = ckpt.blob("wq");
  p.wk = ckpt.blob("wk");
  p.wv = ckpt.blob("wv");
  p.wo = ckpt.blob("wo");
  p.ffn_w1 = ckpt.blob("ffn_w1");
  p.ffn_b1 = ckpt.blob("ffn_b1");
  p.ffn_w2 = ckpt.blob("ffn_w2");
  p.ffn_b2 = ckpt.blob("ffn_b2");
  p.ln1_gain = ckpt.blob("ln1_gain");
  p.ln1_bias = ckpt.blob("ln1_bias");
  p.ln2_gain = ckpt.blob("ln2_gain");
  p.ln2_bias = ckpt.blob("ln2_bias");
  return p;
}

std::vector<double> train_user_stage(const config::PipelineConfig& c) {
  Bundle b = open_bundle(c);
  fs::create_directories(c.out_dir);
  user_model::UserTrainConfig uc{c.d,           c.n_max,      c.heads,
                                 c.tau1,        {c.eta_crop, c.eta_mask, c.eta_reorder},
                                 c.epochs_user, c.batch_user, c.lr_user,
                                 c.seed};
  auto result = user_model::train_user_encoder(b.data.dataset.profiles, *b.embedder, uc);
  save_user_encoder(result.params, user_encoder_path(c));
  auto index = user_model::build_user_index(result.params, b.data.dataset.profiles, *b.embedder);
  index.save(user_index_path(c));
  return result.loss_trace;
}

std::vector<double> train_retriever_stage(const config::PipelineConfig& c) {
  Bundle b = open_bundle(c);
  fs::create_directories(c.out_dir);
  require_file(user_index_path(c), "retriever stage: the stage-1 user index");
  auto index = user_model::UserIndex::load(user_index_path(c), c.d);
  feedback::FeedbackCache cache(c.out_dir + "/feedback_cache.jsonl");

  auto params = retriever::RetrieverParams::init(c.d, c.alpha, c.seed);
  const auto train = split_samples(b, b.data.train_sample_ids);
  if (train.empty()) throw TrainingError("retriever stage: no training samples");

  retriever::FeedbackFn fb = [&](const corpus::Sample& s,
                                 const std::vector<retriever::Candidate>& cands) {
    auto records = feedback::collect_feedback(*b.generator, s, cands, build_candidate_prompt,
                                              &cache, {c.feedback_workers});
    std::vector<double> scores;
    scores.reserve(records.size());
    for (const auto& r : records) scores.push_back(r.score);
    return feedback::llm_distribution(scores);
  };
  auto query_vec = [&](const corpus::Sample& s) { return b.embedder->embed(s.query); };
  auto user_vec = [&](const corpus::Sample& s) { return index.embedding_of(s.user_id); };
  auto users_of = [&](const corpus::Sample& s) {
    std::vector<retriever::EmbeddedHistory> out;
    for (const auto& uid : user_model::retrieve_users(index, s.user_id, c.m))
      out.push_back(embed_history(b, c, uid));
    return out;
  };

  auto run = retriever::train_retriever(params, train, query_vec, user_vec, users_of, fb,
                                        {c.k, c.epochs_retriever, c.lr_retriever, c.seed});
  params.save(retriever_path(c));
  return run.loss_trace;
}

std::vector<double> train_reranker_stage(const config::PipelineConfig& c) {
  Bundle b = open_bundle(c);
  fs::create_directories(c.out_dir);
  require_file(user_index_path(c), "reranker stage: the stage-1 user index");
  require_file(retriever_path(c), "reranker stage: the stage-2 retriever checkpoint");
  auto index = user_model::UserIndex::load(user_index_path(c), c.d);
  auto rp = retriever::RetrieverParams::load(retriever_path(c));
  if (rp.d != c.d)
    throw CheckpointError("retriever checkpoint dimension " + std::to_string(rp.d) +
                          " does not match configured d=" + std::to_string(c.d));
  feedback::FeedbackCache cache(c.out_dir + "/feedback_cache.jsonl");
  reranker::MockCrossFeaturizer featurizer(c.d);

  const auto train = split_samples(b, b.data.train_sample_ids);
  if (train.empty()) throw TrainingError("reranker stage: no training samples");

  std::vector<reranker::SampleCandidates> inputs;
  inputs.reserve(train.size());
  for (const auto& s : train) {
    std::vector<retriever::EmbeddedHistory> users;
    for (const auto& uid : user_model::retrieve_users(index, s.user_id, c.m))
      users.push_back(embed_history(b, c, uid));
    auto cands =
        retriever::retrieve_topk_per_user(rp, b.embedder->embed(s.query),
                                          index.embedding_of(s.user_id), users, c.k,
                                          retriever::SelectionScore::Combined);
    inputs.push_back({s, std::move(cands), index.embedding_of(s.user_id)});
  }

  retriever::FeedbackFn fb = [&](const corpus::Sample& s,
                                 const std::vector<retriever::Candidate>& cands) {
    auto records = feedback::collect_feedback(*b.generator, s, cands, build_candidate_prompt,
                                              &cache, {c.feedback_workers});
    std::vector<double> scores;
    scores.reserve(records.size());
    for (const auto& r : records) scores.push_back(r.score);
    return feedback::llm_distribution(scores);
  };

  auto params = reranker::RerankerParams::init(c.d, c.seed);
  auto run = reranker::train_reranker(params, inputs, featurizer, fb,
                                      {c.epochs_reranker, c.lr_reranker, c.seed});
  params.save(reranker_path(c));
  return run.loss_trace;
}

RunReport run_train(const config::PipelineConfig& c) {
  RunReport report;
  report.config_snapshot = config::to_map(c);
  report.seed = c.seed;
  try {
    report.loss_traces["user"] = train_user_stage(c);
  } catch (const std::exception& e) {
    throw TrainingError(std::string("stage user-encoder failed: ") + e.what());
  }
  try {
    report.loss_traces["retriever"] = train_retriever_stage(c);
  } catch (const std::exception& e) {
    throw TrainingError(std::string("stage retriever failed: ") + e.what());
  }
  try {
    report.loss_traces["reranker"] = train_reranker_stage(c);
  } catch (const std::exception& e) {
    throw TrainingError(std::string("stage reranker failed: ") + e.what());
  }
  emit_report(report, c.out_dir, "report_train");
  return report;
}

RunReport run_eval(const config::PipelineConfig& c) {
  Bundle b = open_bundle(c);
  fs::create_directories(c.out_dir);
  require_file(user_index_path(c), "eval: the stage-1 user index");
  require_file(retriever_path(c), "eval: the stage-2 retriever checkpoint");
  require_file(reranker_path(c), "eval: the stage-3 reranker checkpoint");
  auto index = user_model::UserIndex::load(user_index_path(c), c.d);
  auto rp_full = retriever::RetrieverParams::load(retriever_path(c));
  auto rrk_full = reranker::RerankerParams::load(reranker_path(c));
  if (rp_full.d != c.d || rrk_full.d != c.d)
    throw CheckpointError("checkpoint dimensions do not match configured d=" +
                          std::to_string(c.d));

  auto rp_alpha0 = retriever::RetrieverParams::load(retriever_path(c));
  rp_alpha0.alpha = 0.0;
  auto rp_fresh = retriever::RetrieverParams::init(c.d, c.alpha, c.seed);
  auto rrk_fresh = reranker::RerankerParams::init(c.d, c.seed);
  reranker::MockCrossFeaturizer featurizer(c.d);

  std::vector<corpus::Sample> samples;
  if (c.eval_split == "heldout")
    samples = split_samples(b, b.data.heldout_sample_ids);
  else if (c.eval_split == "train")
    samples = split_samples(b, b.data.train_sample_ids);
  else
    samples = b.data.dataset.samples;
  if (samples.empty()) throw ConfigError("run_eval: no samples in split '" + c.eval_split + "'");

  struct Variant {
    std::string name;
    const retriever::RetrieverParams* rp;
    const reranker::RerankerParams* rrk;
    std::size_t m;
  };
  const std::vector<Variant> variants = {
      {"full", &rp_full, &rrk_full, c.m},
      {"m1", &rp_full, &rrk_full, 1},
      {"alpha0", &rp_alpha0, &rrk_full, c.m},
      {"untrained_reranker", &rp_full, &rrk_fresh, c.m},
      {"untrained", &rp_fresh, &rrk_fresh, c.m},
  };

  RunReport report;
  report.config_snapshot = config::to_map(c);
  report.seed = c.seed;

  for (const auto& variant : variants) {
    VariantStats stats;
    for (const auto& s : samples) {
      std::set<std::string> evidence;
      if (auto it = b.data.evidence.find(s.id); it != b.data.evidence.end())
        evidence.insert(it->second.begin(), it->second.end());

      std::vector<retriever::EmbeddedHistory> users;
      for (const auto& uid : user_model::retrieve_users(index, s.user_id, variant.m))
        users.push_back(embed_history(b, c, uid));
      const auto q = b.embedder->embed(s.query);
      const auto& e_u = index.embedding_of(s.user_id);
      auto cands = retriever::retrieve_topk_per_user(*variant.rp, q, e_u, users, c.k,
                                                     retriever::SelectionScore::Combined);
      if (cands.empty()) throw ContractError("run_eval: empty candidate pool for " + s.id);

      std::size_t best = 0;
      for (std::size_t i = 1; i < cands.size(); ++i) {
        if (cands[i].s_uqd > cands[best].s_uqd ||
            (cands[i].s_uqd == cands[best].s_uqd && cands[i].doc.id < cands[best].doc.id))
          best = i;
      }
      const bool retr_top1 = evidence.count(cands[best].doc.id) > 0;

      auto ranked = reranker::rerank_topk(*variant.rrk, featurizer, s.query, cands, e_u,
                                          cands.size());
      const bool rr_top1 = evidence.count(ranked.front().doc.id) > 0;

      std::vector<corpus::Document> top_docs;
      bool hit = false;
      for (std::size_t i = 0; i < std::min(c.k, ranked.size()); ++i) {
        top_docs.push_back(ranked[i].doc);
        hit = hit || evidence.count(ranked[i].doc.id) > 0;
      }
      const std::string prompt = prompts::build_prompt(s.task, s.query, top_docs);
      const std::string output = b.generator->generate(prompt);
      const double score = feedback::eval_output(s.task, s.target, output);

      stats.task_score += score;
      stats.hit_rate += hit ? 1.0 : 0.0;
      stats.retriever_top1 += retr_top1 ? 1.0 : 0.0;
      stats.reranker_top1 += rr_top1 ? 1.0 : 0.0;
      stats.chance += 1.0 / static_cast<double>(cands.size());
      ++stats.samples;
      report.rows.push_back({variant.name, s.id, score, hit, retr_top1, rr_top1, cands.size()});
    }
    const double n = static_cast<double>(stats.samples);
    stats.task_score /= n;
    stats.hit_rate /= n;
    stats.retriever_top1 /= n;
    stats.reranker_top1 /= n;
    stats.chance /= n;
    report.variants[variant.name] = stats;
  }

  emit_report(report, c.out_dir, "report_eval");
  return report;
}

void emit_report(const RunReport& report, const std::string& dir, const std::string& stem) {
  fs::create_directories(dir);

  json j;
  j["seed"] = report.seed;
  j["config"] = report.config_snapshot;
  j["loss_traces"] = report.loss_traces;
  j["variants"] = json::object();
  for (const auto& [name, v] : report.variants) {
    j["variants"][name] = {{"task_score", v.task_score},
                           {"hit_rate", v.hit_rate},
                           {"retriever_top1", v.retriever_top1},
                           {"reranker_top1", v.reranker_top1},
                           {"chance", v.chance},
                           {"samples", v.samples}};
  }
  j["samples"] = json::array();
  for (const auto& r : report.rows) {
    j["samples"].push_back({{"variant", r.variant},
                            {"sample_id", r.sample_id},
                            {"score", r.score},
                            {"hit", r.hit},
                            {"retriever_top1", r.retriever_top1},
                            {"reranker_top1", r.reranker_top1},
                            {"n_candidates", r.n_candidates}});
  }
  {
    std::ofstream out(dir + "/" + stem + ".json");
    if (!out) throw IoError("cannot write report: " + dir + "/" + stem + ".json");
    out << j.dump(2) << "\n";
  }

  const auto num = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  {
    std::ofstream out(dir + "/" + stem + "_samples.csv");
    if (!out) throw IoError("cannot write samples CSV");
    out << "variant,sample_id,score,hit,retriever_top1,reranker_top1,n_candidates\n";
    for (const auto& r : report.rows) {
      out << r.variant << "," << r.sample_id << "," << num(r.score) << "," << (r.hit ? 1 : 0)
          << "," << (r.retriever_top1 ? 1 : 0) << "," << (r.reranker_top1 ? 1 : 0) << ","
          << r.n_candidates << "\n";
    }
  }
  {
    std::ofstream out(dir + "/" + stem + "_loss.csv");
    if (!out) throw IoError("cannot write loss CSV");
    out << "stage,epoch,loss\n";
    for (const auto& [stage, trace] : report.loss_traces)
      for (std::size_t e = 0; e < trace.size(); ++e)
        out << stage << "," << e << "," << num(trace[e]) << "\n";
  }
}

RunReport load_report(const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in) throw IoError("cannot read report: " + json_path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ParseError(std::string("report is not valid JSON: ") + e.what());
  }
  RunReport report;
  report.seed = j.at("seed").get<std::uint64_t>();
  report.config_snapshot = j.at("config").get<std::map<std::string, std::string>>();
  report.loss_traces = j.at("loss_traces").get<std::map<std::string, std::vector<double>>>();
  for (const auto& [name, v] : j.at("variants").items()) {
    VariantStats s;
    s.task_score = v.at("task_score").get<double>();
    s.hit_rate = v.at("hit_rate").get<double>();
    s.retriever_top1 = v.at("retriever_top1").get<double>();
    s.reranker_top1 = v.at("reranker_top1").get<double>();
    s.chance = v.at("chance").get<double>();
    s.samples = v.at("samples").get<std::size_t>();
    report.variants[name] = s;
  }
  for (const auto& r : j.at("samples")) {
    report.rows.push_back({r.at("variant").get<std::string>(),
                           r.at("sample_id").get<std::string>(), r.at("score").get<double>(),
                           r.at("hit").get<bool>(), r.at("retriever_top1").get<bool>(),
                           r.at("reranker_top1").get<bool>(),
                           r.at("n_candidates").get<std::size_t>()});
  }
  return report;
}

}  // namespace cfrag::pipeline
