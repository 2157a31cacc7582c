#include "cfrag/embedding.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "cfrag/errors.hpp"

namespace cfrag::embedding {

using nlohmann::json;

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  return tokens;
}

namespace {

// FNV-1a, 64-bit.
std::uint64_t fnv1a(const std::string& s, std::uint64_t seed) {
  std::uint64_t h = 14695981039346656037ull ^ seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

std::vector<double> hash_embed(const std::string& text, std::size_t d) {
  if (d == 0) throw ContractError("hash_embed: dimension must be positive");
  std::vector<double> v(d, 0.0);
  const auto tokens = tokenize(text);
  if (tokens.empty()) {
    v[0] = 1.0;
    return v;
  }
  for (const auto& tok : tokens) {
    const std::size_t bucket = fnv1a(tok, 0) % d;
    const double sign = (fnv1a(tok, 0x9e3779b97f4a7c15ull) & 1ull) ? 1.0 : -1.0;
    v[bucket] += sign;
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) {
    // Bucket sums can cancel exactly; fall back like the empty case.
    std::fill(v.begin(), v.end(), 0.0);
    v[0] = 1.0;
    return v;
  }
  for (double& x : v) x /= norm;
  return v;
}

std::vector<double> EmbeddingProvider::embed_document(const corpus::Document& doc) const {
  if (doc.text.empty()) throw ContractError("embed_document: empty document text");
  return embed(doc.text);
}

std::vector<double> HashEmbeddingProvider::embed(const std::string& text) const {
  return hash_embed(text, d_);
}

PrecomputedEmbeddingProvider::PrecomputedEmbeddingProvider(
    std::size_t d, std::unordered_map<std::string, std::vector<double>> table)
    : d_(d), table_(std::move(table)) {
  for (const auto& [key, vec] : table_) {
    if (vec.size() != d_)
      throw DimensionError("precomputed vector for \"" + key + "\" has wrong dimension");
  }
}

std::vector<double> PrecomputedEmbeddingProvider::embed(const std::string& key) const {
  auto it = table_.find(key);
  if (it == table_.end()) throw LookupError("no precomputed embedding for: " + key);
  return it->second;
}

RemoteEmbeddingProvider::RemoteEmbeddingProvider(std::string base_url, std::string path,
                                                 std::size_t d, int max_retries)
    : base_url_(std::move(base_url)), path_(std::move(path)), d_(d), max_retries_(max_retries) {}

std::vector<std::vector<double>> RemoteEmbeddingProvider::embed_batch(
    const std::vector<std::string>& texts) const {
  json body;
  body["texts"] = texts;
  const std::string payload = body.dump();

  httplib::Client client(base_url_);
  httplib::Headers headers;
  if (const char* token = std::getenv("CFRAG_EMBED_TOKEN")) {
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }

  int attempts = 0;
  std::string last_error;
  while (attempts < max_retries_) {
    ++attempts;
    auto res = client.Post(path_, headers, payload, "application/json");
    if (res && res->status == 200) {
      json reply = json::parse(res->body);
      std::vector<std::vector<double>> out;
      for (const auto& vj : reply.at("vectors")) {
        std::vector<double> v = vj.get<std::vector<double>>();
        if (v.size() != d_) throw DimensionError("remote embedding has wrong dimension");
        out.push_back(std::move(v));
      }
      return out;
    }
    last_error = res ? "status " + std::to_string(res->status) : "connection failed";
    std::this_thread::sleep_for(std::chrono::milliseconds(20 * attempts));
  }
  throw TransportError("embedding request failed: " + last_error, attempts);
}

std::vector<double> RemoteEmbeddingProvider::embed(const std::string& text) const {
  return embed_batch({text}).front();
}

CachingProvider::CachingProvider(std::shared_ptr<EmbeddingProvider> inner)
    : inner_(std::move(inner)) {}

std::vector<double> CachingProvider::embed(const std::string& text) const {
  auto it = memo_.find(text);
  if (it != memo_.end()) return it->second;
  auto vec = inner_->embed(text);
  memo_.emplace(text, vec);
  return vec;
}

// --- cache file ---

namespace {
constexpr char kMagic[8] = {'C', 'F', 'R', 'A', 'G', 'E', 'M', 'B'};

void write_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<char*>(b), 4);
}

std::uint32_t read_u32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}
}  // namespace

void write_embedding_cache(const std::string& path, std::uint32_t dimension,
                           const std::vector<CacheEntry>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write embedding cache: " + path);
  out.write(kMagic, 8);
  write_u32(out, dimension);
  write_u32(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (e.vector.size() != dimension)
      throw DimensionError("cache entry \"" + e.id + "\" has wrong dimension");
    if (e.id.size() > 0xffff) throw FormatError("cache id too long: " + e.id);
    const std::uint16_t len = static_cast<std::uint16_t>(e.id.size());
    unsigned char lb[2] = {static_cast<unsigned char>(len),
                           static_cast<unsigned char>(len >> 8)};
    out.write(reinterpret_cast<char*>(lb), 2);
    out.write(e.id.data(), static_cast<std::streamsize>(e.id.size()));
    for (float f : e.vector) {
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      write_u32(out, bits);
    }
  }
}

std::vector<CacheEntry> read_embedding_cache(const std::string& path,
                                             std::uint32_t expected_dimension) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open embedding cache: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw FormatError("bad embedding cache magic in " + path);
  const std::uint32_t dim = read_u32(in);
  if (dim != expected_dimension)
    throw FormatError("embedding cache dimension " + std::to_string(dim) +
                      " does not match configured " + std::to_string(expected_dimension));
  const std::uint32_t count = read_u32(in);
  std::vector<CacheEntry> entries;
  entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    unsigned char lb[2];
    in.read(reinterpret_cast<char*>(lb), 2);
    const std::uint16_t len =
        static_cast<std::uint16_t>(lb[0]) | (static_cast<std::uint16_t>(lb[1]) << 8);
    CacheEntry e;
    e.id.resize(len);
    in.read(e.id.data(), len);
    e.vector.resize(dim);
    for (std::uint32_t j = 0; j < dim; ++j) {
      const std::uint32_t bits = read_u32(in);
      std::memcpy(&e.vector[j], &bits, 4);
    }
    if (!in) throw FormatError("truncated embedding cache: " + path);
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace cfrag::embedding
