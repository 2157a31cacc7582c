#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cfrag/config.hpp"
#include "cfrag/user_model.hpp"

namespace cfrag::pipeline {

struct VariantStats {
  double task_score = 0.0;      // mean oracle/task metric
  double hit_rate = 0.0;        // planted evidence present in the final top-k
  double retriever_top1 = 0.0;  // planted candidate first by combined score
  double reranker_top1 = 0.0;   // planted candidate first after reranking
  double chance = 0.0;          // mean 1/|candidates|
  std::size_t samples = 0;
};

struct SampleRow {
  std::string variant;
  std::string sample_id;
  double score = 0.0;
  bool hit = false;
  bool retriever_top1 = false;
  bool reranker_top1 = false;
  std::size_t n_candidates = 0;
};

struct RunReport {
  std::map<std::string, std::string> config_snapshot;
  std::uint64_t seed = 0;
  std::map<std::string, std::vector<double>> loss_traces;  // per stage
  std::map<std::string, VariantStats> variants;
  std::vector<SampleRow> rows;
};

// Checkpoint file names inside config.out_dir.
std::string user_encoder_path(const config::PipelineConfig& config);
std::string user_index_path(const config::PipelineConfig& config);
std::string retriever_path(const config::PipelineConfig& config);
std::string reranker_path(const config::PipelineConfig& config);

void save_user_encoder(const user_model::UserEncoderParams& params, const std::string& path);
user_model::UserEncoderParams load_user_encoder(const std::string& path);

// Stage 1: contrastive user encoder; writes encoder checkpoint + user index.
std::vector<double> train_user_stage(const config::PipelineConfig& config);
// Stage 2: retriever distillation; requires the stage-1 user index.
std::vector<double> train_retriever_stage(const config::PipelineConfig& config);
// Stage 3: reranker distillation; requires the stage-2 checkpoint.
std::vector<double> train_reranker_stage(const config::PipelineConfig& config);

// All three stages in order; writes checkpoints and the training report.
RunReport run_train(const config::PipelineConfig& config);

// Full evaluation plus the ablation variants: "full", "m1" (no user
// retrieval), "alpha0" (semantic-only retrieval), "untrained_reranker",
// and "untrained" (fresh retriever and reranker). Writes the eval report.
RunReport run_eval(const config::PipelineConfig& config);

// <stem>.json plus <stem>_samples.csv and <stem>_loss.csv under dir.
void emit_report(const RunReport& report, const std::string& dir, const std::string& stem);
RunReport load_report(const std::string& json_path);

}  // namespace cfrag::pipeline
