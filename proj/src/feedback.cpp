#include "cfrag/feedback.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "cfrag/errors.hpp"
#include "cfrag/metrics.hpp"

namespace cfrag::feedback {

using nlohmann::json;

HttpChatProvider::HttpChatProvider(std::string base_url, std::string path, std::string model,
                                   int timeout_seconds, int max_retries)
    : base_url_(std::move(base_url)),
      path_(std::move(path)),
      model_(std::move(model)),
      timeout_seconds_(timeout_seconds),
      max_retries_(max_retries) {}

std::string HttpChatProvider::generate(const std::string& prompt) const {
  if (prompt.empty()) throw ContractError("generate: empty prompt");
  json body;
  body["model"] = model_;
  body["messages"] = json::array({json{{"role", "user"}, {"content", prompt}}});
  body["temperature"] = 0.0;  // greedy decoding

  httplib::Client client(base_url_);
  client.set_read_timeout(timeout_seconds_, 0);
  httplib::Headers headers;
  if (const char* token = std::getenv("CFRAG_LLM_TOKEN")) {
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }

  int attempts = 0;
  std::string last_error;
  while (attempts < max_retries_) {
    ++attempts;
    auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (res && res->status == 200) {
      json reply = json::parse(res->body);
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    }
    last_error = res ? "status " + std::to_string(res->status) : "connection failed";
    std::this_thread::sleep_for(std::chrono::milliseconds(50 * attempts));
  }
  throw TransportError("chat completion failed: " + last_error, attempts);
}

MockOracleProvider::MockOracleProvider(MockOracleConfig config) : config_(std::move(config)) {}

namespace {

std::uint64_t fnv1a64(const std::string& s, std::uint64_t seed = 0) {
  std::uint64_t h = 14695981039346656037ull ^ seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

std::string MockOracleProvider::generate(const std::string& prompt) const {
  if (prompt.empty()) throw ContractError("generate: empty prompt");
  // The user's query sits at the end of the prompt, after any history
  // documents (which may quote other samples' topics). Attribute the prompt
  // to the sample whose complete topic combination occurs latest: for each
  // sample take the earliest of its topics' last occurrences, then keep the
  // sample for which that position is largest.
  const MockOracleConfig::SampleInfo* info = nullptr;
  std::size_t best_pos = 0;
  for (const auto& s : config_.samples) {
    std::size_t min_last = std::string::npos;
    for (const auto& topic : s.topics) {
      const std::size_t pos = prompt.rfind(topic);
      if (pos == std::string::npos) {
        min_last = std::string::npos;
        break;
      }
      min_last = std::min(min_last == std::string::npos ? pos : min_last, pos);
    }
    if (min_last != std::string::npos && (info == nullptr || min_last > best_pos)) {
      info = &s;
      best_pos = min_last;
    }
  }
  std::string out;
  if (info == nullptr) {
    out = "unknown request";
  } else if (prompt.find(info->evidence_text) != std::string::npos) {
    out = info->target;
  } else {
    // Partial credit when enough of the sample's topics are covered by
    // profile material, i.e. occur at least twice (once in the query itself
    // and once more in a quoted document).
    std::size_t covered = 0;
    for (const auto& topic : info->topics) {
      const std::size_t first = prompt.find(topic);
      if (first != std::string::npos &&
          prompt.find(topic, first + topic.size()) != std::string::npos)
        ++covered;
    }
    if (covered >= config_.partial_overlap)
      out = "partial " + info->target.substr(0, info->target.find(' '));
    else
      out = "irrelevant filler output";
  }
  if (config_.noise_sigma > 0.0) {
    const std::uint64_t h = fnv1a64(prompt, config_.seed);
    const std::size_t extra = static_cast<std::size_t>(
        config_.noise_sigma * 4.0 * static_cast<double>(h % 1000) / 1000.0);
    for (std::size_t i = 0; i < extra; ++i) out += " pad" + std::to_string(h % 97 + i);
  }
  return out;
}

double eval_output(corpus::TaskId task, const std::string& target, const std::string& output) {
  switch (task) {
    case corpus::TaskId::LaMP4:
    case corpus::TaskId::LaMP5:
    case corpus::TaskId::LaMP7:
    case corpus::TaskId::Synthetic:
      return metrics::rouge1(output, target).f1;
    case corpus::TaskId::LaMP1:
    case corpus::TaskId::LaMP2: {
      const auto norm = [](std::string s) {
        std::size_t b = 0, e = s.size();
        while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
        while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
        s = s.substr(b, e - b);
        for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return s;
      };
      return norm(output) == norm(target) ? 1.0 : 0.0;
    }
    case corpus::TaskId::LaMP3: {
      double t;
      try {
        t = std::stod(target);
      } catch (...) {
        throw ConfigError("eval_output: rating target is not numeric: " + target);
      }
      try {
        std::size_t pos = 0;
        const double p = std::stod(output, &pos);
        return -std::abs(p - t);
      } catch (...) {
        return -4.0;  // worst possible gap on the 1-5 scale
      }
    }
  }
  throw ConfigError("eval_output: unknown task");
}

std::vector<double> llm_distribution(const std::vector<double>& scores) {
  if (scores.empty()) throw ContractError("llm_distribution: no scores");
  double mx = scores[0];
  for (double s : scores) {
    if (!std::isfinite(s)) throw NumericError("llm_distribution: non-finite score");
    mx = std::max(mx, s);
  }
  std::vector<double> out(scores.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - mx);
    denom += out[i];
  }
  for (double& x : out) x /= denom;
  return out;
}

FeedbackCache::FeedbackCache(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;  // fresh cache
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      entries_[j.at("key").get<std::string>()] = j.at("output").get<std::string>();
    } catch (...) {
      // Skip corrupt lines; the entry will simply be regenerated.
    }
  }
}

std::string FeedbackCache::key_of(const std::string& provider_id, const std::string& prompt) {
  return provider_id + ":" + std::to_string(fnv1a64(prompt));
}

bool FeedbackCache::lookup(const std::string& provider_id, const std::string& prompt,
                           std::string* output) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = entries_.find(key_of(provider_id, prompt));
  if (it == entries_.end()) return false;
  if (output) *output = it->second;
  return true;
}

void FeedbackCache::store(const std::string& provider_id, const std::string& prompt,
                          const std::string& output, double score) {
  std::lock_guard<std::mutex> lock(mutex_);
  const std::string key = key_of(provider_id, prompt);
  if (entries_.count(key)) return;
  entries_[key] = output;
  std::ofstream out(path_, std::ios::app);
  if (!out) throw IoError("cannot append to feedback cache: " + path_);
  json j;
  j["key"] = key;
  j["prompt_hash"] = std::to_string(fnv1a64(prompt));
  j["output"] = output;
  j["score"] = score;
  out << j.dump() << "\n";
}

std::size_t FeedbackCache::size() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return entries_.size();
}

namespace {
thread_local std::size_t g_last_request_count = 0;
}

std::size_t last_request_count() { return g_last_request_count; }

std::vector<FeedbackRecord> collect_feedback(const GenerationProvider& provider,
                                             const corpus::Sample& sample,
                                             const std::vector<retriever::Candidate>& candidates,
                                             const PromptBuilder& prompt_builder,
                                             FeedbackCache* cache, const CollectConfig& config) {
  if (candidates.empty()) throw ContractError("collect_feedback: no candidates");
  const std::size_t n = candidates.size();

  std::vector<std::string> prompts(n);
  std::vector<std::string> outputs(n);
  std::vector<bool> resolved(n, false);
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < n; ++i) {
    prompts[i] = prompt_builder(sample, candidates[i].doc);
    if (cache && cache->lookup(provider.id(), prompts[i], &outputs[i])) {
      resolved[i] = true;
    } else {
      pending.push_back(i);
    }
  }
  g_last_request_count = pending.size();

  if (!pending.empty()) {
    const std::size_t workers = std::max<std::size_t>(1, std::min(config.max_in_flight,
                                                                  pending.size()));
    std::atomic<std::size_t> next{0};
    std::vector<std::string> errors(pending.size());
    std::vector<bool> failed(pending.size(), false);
    auto work = [&]() {
      while (true) {
        const std::size_t slot = next.fetch_add(1);
        if (slot >= pending.size()) return;
        const std::size_t idx = pending[slot];
        try {
          outputs[idx] = provider.generate(prompts[idx]);
          resolved[idx] = true;
        } catch (const std::exception& e) {
          failed[slot] = true;
          errors[slot] = e.what();
        }
      }
    };
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(work);
    for (auto& t : threads) t.join();

    std::string failed_ids;
    for (std::size_t slot = 0; slot < pending.size(); ++slot) {
      if (failed[slot]) {
        if (!failed_ids.empty()) failed_ids += ", ";
        failed_ids += candidates[pending[slot]].doc.id + " (" + errors[slot] + ")";
      }
    }
    if (!failed_ids.empty())
      throw TransportError("generation failed for candidates: " + failed_ids);
  }

  std::vector<FeedbackRecord> records;
  records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    FeedbackRecord r;
    r.sample_id = sample.id;
    r.candidate_doc_id = candidates[i].doc.id;
    r.output = outputs[i];
    r.score = eval_output(sample.task, sample.target, outputs[i]);
    if (cache) cache->store(provider.id(), prompts[i], outputs[i], r.score);
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace cfrag::feedback
