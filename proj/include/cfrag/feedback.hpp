#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "cfrag/corpus.hpp"
#include "cfrag/retriever.hpp"

namespace cfrag::feedback {

class GenerationProvider {
 public:
  virtual ~GenerationProvider() = default;
  virtual std::string id() const = 0;
  virtual std::string generate(const std::string& prompt) const = 0;
};

// Chat-completion client requesting greedy (temperature 0) decoding.
// Auth token from CFRAG_LLM_TOKEN when set.
class HttpChatProvider : public GenerationProvider {
 public:
  HttpChatProvider(std::string base_url, std::string path, std::string model,
                   int timeout_seconds = 60, int max_retries = 3);
  std::string id() const override { return "http:" + model_; }
  std::string generate(const std::string& prompt) const override;

 private:
  std::string base_url_;
  std::string path_;
  std::string model_;
  int timeout_seconds_;
  int max_retries_;
};

// Deterministic stand-in for the LLM on the synthetic benchmark. A prompt is
// attributed to the sample whose full topic set occurs latest in the prompt
// (queries sit at the end, so the query's own topic combination wins).
// Output quality then depends on how much of the sample's evidence the
// prompt carries: the exact target when the planted document is quoted
// verbatim, a weak partial answer when at least partial_overlap of the
// sample's topics are covered by profile material (i.e. occur a second time
// beyond the query itself), junk otherwise.
struct MockOracleConfig {
  struct SampleInfo {
    std::vector<std::string> topics;  // the sample's unique topic combination
    std::string evidence_text;        // full text of the planted document
    std::string target;
  };
  std::vector<SampleInfo> samples;
  std::size_t partial_overlap = 3;  // topics covered twice for partial credit
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

class MockOracleProvider : public GenerationProvider {
 public:
  explicit MockOracleProvider(MockOracleConfig config);
  std::string id() const override { return "mock-oracle"; }
  std::string generate(const std::string& prompt) const override;

 private:
  MockOracleConfig config_;
};

struct FeedbackRecord {
  std::string sample_id;
  std::string candidate_doc_id;
  std::string output;
  double score = 0.0;
};

// Higher is better for every task: ROUGE-1 F for generation tasks, exact
// match for classification, negative absolute error for rating (unparseable
// prediction scores -4, the worst gap on the 1-5 scale).
double eval_output(corpus::TaskId task, const std::string& target, const std::string& output);

// Softmax over eval scores of the m*k candidates.
std::vector<double> llm_distribution(const std::vector<double>& scores);

// JSONL-backed generation cache keyed by (provider id, prompt hash).
class FeedbackCache {
 public:
  explicit FeedbackCache(std::string path);

  bool lookup(const std::string& provider_id, const std::string& prompt,
              std::string* output) const;
  void store(const std::string& provider_id, const std::string& prompt,
             const std::string& output, double score);
  std::size_t size() const;

  static std::string key_of(const std::string& provider_id, const std::string& prompt);

 private:
  std::string path_;
  std::unordered_map<std::string, std::string> entries_;
  mutable std::mutex mutex_;
};

using PromptBuilder =
    std::function<std::string(const corpus::Sample&, const corpus::Document&)>;

struct CollectConfig {
  std::size_t max_in_flight = 4;  // W
};

// One record per candidate; at most W generation requests in flight; results
// independent of completion order. A null cache disables caching.
std::vector<FeedbackRecord> collect_feedback(const GenerationProvider& provider,
                                             const corpus::Sample& sample,
                                             const std::vector<retriever::Candidate>& candidates,
                                             const PromptBuilder& prompt_builder,
                                             FeedbackCache* cache,
                                             const CollectConfig& config = {});

// Tracks how many generation requests actually reached the provider (i.e.
// cache misses) during the last collect_feedback call on this thread.
std::size_t last_request_count();

}  // namespace cfrag::feedback
