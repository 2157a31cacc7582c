#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "cfrag/corpus.hpp"

namespace cfrag::embedding {

// Lowercase, split on non-alphanumeric runs.
std::vector<std::string> tokenize(const std::string& text);

// Deterministic hash embedding: each token lands in one of d signed buckets,
// the bucket sums are L2-normalized. An empty token set yields e1.
std::vector<double> hash_embed(const std::string& text, std::size_t d);

// Pure, unit-norm document embedder.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dimension() const = 0;
  virtual std::vector<double> embed(const std::string& text) const = 0;

  std::vector<double> embed_document(const corpus::Document& doc) const;
};

class HashEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit HashEmbeddingProvider(std::size_t d) : d_(d) {}
  std::size_t dimension() const override { return d_; }
  std::vector<double> embed(const std::string& text) const override;

 private:
  std::size_t d_;
};

// Serves vectors loaded from an embedding cache file; lookup is by exact text
// key (or id via embed_id).
class PrecomputedEmbeddingProvider : public EmbeddingProvider {
 public:
  PrecomputedEmbeddingProvider(std::size_t d,
                               std::unordered_map<std::string, std::vector<double>> table);
  std::size_t dimension() const override { return d_; }
  std::vector<double> embed(const std::string& key) const override;

 private:
  std::size_t d_;
  std::unordered_map<std::string, std::vector<double>> table_;
};

// HTTP client for a remote embedding service: POST {"texts": [...]} to
// endpoint, expects {"vectors": [[...], ...]}. Auth token from
// CFRAG_EMBED_TOKEN when set.
class RemoteEmbeddingProvider : public EmbeddingProvider {
 public:
  RemoteEmbeddingProvider(std::string base_url, std::string path, std::size_t d,
                          int max_retries = 3);
  std::size_t dimension() const override { return d_; }
  std::vector<double> embed(const std::string& text) const override;
  std::vector<std::vector<double>> embed_batch(const std::vector<std::string>& texts) const;

 private:
  std::string base_url_;
  std::string path_;
  std::size_t d_;
  int max_retries_;
};

// Memoizing wrapper; results are identical to the inner provider's.
class CachingProvider : public EmbeddingProvider {
 public:
  explicit CachingProvider(std::shared_ptr<EmbeddingProvider> inner);
  std::size_t dimension() const override { return inner_->dimension(); }
  std::vector<double> embed(const std::string& text) const override;

 private:
  std::shared_ptr<EmbeddingProvider> inner_;
  mutable std::unordered_map<std::string, std::vector<double>> memo_;
};

// --- On-disk embedding cache ---
// Layout: magic "CFRAGEMB", u32 dimension, u32 count, then per record:
// u16 id length, id bytes, dimension little-endian f32 values.

struct CacheEntry {
  std::string id;
  std::vector<float> vector;
};

void write_embedding_cache(const std::string& path, std::uint32_t dimension,
                           const std::vector<CacheEntry>& entries);
std::vector<CacheEntry> read_embedding_cache(const std::string& path,
                                             std::uint32_t expected_dimension);

}  // namespace cfrag::embedding
