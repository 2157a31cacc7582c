#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cfrag::config {

// Flat configuration for training and evaluation. File format is
// `key = value` lines (# comments); command-line flags override file values.
struct PipelineConfig {
  // Dimensions.
  std::size_t d = 512;
  std::size_t n_max = 64;
  std::size_t heads = 2;

  // Retrieval.
  std::size_t k = 5;
  std::size_t m = 4;
  double alpha = 0.05;
  double tau1 = 1.0;

  // Augmentations.
  double eta_crop = 0.7;
  double eta_mask = 0.3;
  double eta_reorder = 0.3;

  // Per-stage optimization.
  double lr_user = 1e-3;
  double lr_retriever = 1e-3;
  double lr_reranker = 1e-3;
  std::size_t epochs_user = 12;
  std::size_t epochs_retriever = 40;
  std::size_t epochs_reranker = 40;
  std::size_t batch_user = 40;

  std::uint64_t seed = 17;
  std::size_t feedback_workers = 4;  // W

  // Providers: "hash" or "remote" embeddings; "mock" or "http" generation.
  std::string embed_provider = "hash";
  std::string embed_url;
  std::string llm_provider = "mock";
  std::string llm_url;
  std::string llm_model = "llama3";

  // Paths.
  std::string data_path;
  std::string sidecar_path;
  std::string out_dir = "out";

  // When on, hyperparameters must lie on the published search grids.
  bool grid_search = false;

  // Which split run_eval scores: "heldout", "train", or "all".
  std::string eval_split = "heldout";
};

// Parse a flat key=value file into overrides (missing file -> error).
std::map<std::string, std::string> read_config_file(const std::string& path);

// Apply overrides onto a config; unknown keys or unparseable values throw.
void apply_overrides(PipelineConfig& config, const std::map<std::string, std::string>& overrides);

// Basic invariants (k, m >= 1; alpha in [0,1]; etas in (0,1]); with
// grid_search also the published grids: m in {2..6}, tau1 in {0.01,0.1,1},
// alpha in [0.01,1.0], learning rates in {1e-3,1e-4,1e-5}.
void validate(const PipelineConfig& config);

// Stable serialization used for the report's config snapshot.
std::map<std::string, std::string> to_map(const PipelineConfig& config);

}  // namespace cfrag::config
