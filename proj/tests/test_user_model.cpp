#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <set>

#include "cfrag/embedding.hpp"
#include "cfrag/errors.hpp"
#include "cfrag/user_model.hpp"

using namespace cfrag;
using user_model::HistoryView;

namespace {

std::vector<std::size_t> indices_of(const HistoryView& view) {
  std::vector<std::size_t> out;
  for (const auto& item : view) out.push_back(item.doc_index);
  return out;
}

}  // namespace

TEST_CASE("crop contract: contiguous window of max(1, floor(eta*N))") {
  std::mt19937_64 rng(1);
  for (std::size_t n = 1; n <= 8; ++n) {
    for (int rep = 0; rep < 50; ++rep) {
      auto view = user_model::augment_crop(n, 0.7, rng);
      const std::size_t expect =
          std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(0.7 * n)));
      REQUIRE(view.size() == expect);
      for (std::size_t i = 1; i < view.size(); ++i)
        CHECK(view[i].doc_index == view[i - 1].doc_index + 1);
      CHECK(view.back().doc_index < n);
      for (const auto& item : view) CHECK_FALSE(item.masked);
    }
  }
  CHECK_THROWS_AS(user_model::augment_crop(0, 0.7, rng), ContractError);
}

TEST_CASE("mask contract: floor(eta*N) positions masked, order intact") {
  std::mt19937_64 rng(2);
  for (std::size_t n = 1; n <= 8; ++n) {
    for (int rep = 0; rep < 50; ++rep) {
      auto view = user_model::augment_mask(n, 0.3, rng);
      REQUIRE(view.size() == n);
      std::size_t masked = 0;
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(view[i].doc_index == i);
        if (view[i].masked) ++masked;
      }
      CHECK(masked == static_cast<std::size_t>(std::floor(0.3 * n)));
    }
  }
  CHECK_THROWS_AS(user_model::augment_mask(0, 0.3, rng), ContractError);
}

TEST_CASE("reorder contract: multiset preserved, out-of-window order intact") {
  std::mt19937_64 rng(3);
  for (std::size_t n = 1; n <= 8; ++n) {
    const std::size_t len = static_cast<std::size_t>(std::floor(0.3 * n));
    for (int rep = 0; rep < 100; ++rep) {
      auto view = user_model::augment_reorder(n, 0.3, rng);
      REQUIRE(view.size() == n);
      auto idx = indices_of(view);
      auto sorted = idx;
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t i = 0; i < n; ++i) CHECK(sorted[i] == i);  // a permutation

      // Everything outside one contiguous window of size len stays in place,
      // i.e. the displaced positions span at most len slots.
      std::size_t first_moved = n, last_moved = 0;
      bool any_moved = false;
      for (std::size_t i = 0; i < n; ++i) {
        if (idx[i] != i) {
          any_moved = true;
          first_moved = std::min(first_moved, i);
          last_moved = std::max(last_moved, i);
        }
      }
      if (any_moved) {
        CHECK(len > 1);
        CHECK(last_moved - first_moved + 1 <= len);
      }
      for (const auto& item : view) CHECK_FALSE(item.masked);
    }
  }
  CHECK_THROWS_AS(user_model::augment_reorder(0, 0.3, rng), ContractError);
}

TEST_CASE("sample_views draws two distinct augmentation methods") {
  std::mt19937_64 rng(4);
  user_model::AugmentationConfig cfg;  // defaults 0.7 / 0.3 / 0.3
  // With N=10: crop gives length 7, mask keeps 10 with 3 masked, reorder
  // keeps 10 unmasked. These signatures identify the method used.
  auto classify = [](const HistoryView& v) {
    if (v.size() == 7) return std::string("crop");
    std::size_t masked = 0;
    for (const auto& i : v) masked += i.masked ? 1 : 0;
    return masked == 3 ? std::string("mask") : std::string("reorder");
  };
  std::set<std::pair<std::string, std::string>> seen;
  for (int rep = 0; rep < 300; ++rep) {
    auto [a, b] = user_model::sample_views(10, cfg, rng);
    auto ca = classify(a), cb = classify(b);
    CHECK(ca != cb);
    seen.insert({ca, cb});
  }
  // All six ordered pairs of distinct methods appear over 300 draws.
  CHECK(seen.size() == 6);
}

TEST_CASE("encode_user shape, determinism, and permutation sensitivity") {
  const std::size_t d = 8, n = 4;
  auto params = user_model::UserEncoderParams::init(d, 16, 2, 5);
  embedding::HashEmbeddingProvider emb(d);
  std::vector<std::vector<double>> docs;
  for (int i = 0; i < static_cast<int>(n); ++i)
    docs.push_back(emb.embed("document number " + std::to_string(i)));

  auto view = user_model::identity_view(n);
  auto e1 = user_model::encode_user(params, user_model::embed_view(params, view, docs));
  auto e2 = user_model::encode_user(params, user_model::embed_view(params, view, docs));
  CHECK(e1.rows() == 1);
  CHECK(e1.cols() == d);
  for (std::size_t j = 0; j < d; ++j) CHECK(e1(0, j) == e2(0, j));

  // Positional embeddings make the encoder order-sensitive.
  auto swapped = view;
  std::swap(swapped[0], swapped[3]);
  auto e3 = user_model::encode_user(params, user_model::embed_view(params, swapped, docs));
  double diff = 0.0;
  for (std::size_t j = 0; j < d; ++j) diff += std::abs(e1(0, j) - e3(0, j));
  CHECK(diff > 1e-9);

  // Masked slots use the mask embedding rather than the document vector.
  auto masked = view;
  masked[1].masked = true;
  auto e4 = user_model::encode_user(params, user_model::embed_view(params, masked, docs));
  double diff2 = 0.0;
  for (std::size_t j = 0; j < d; ++j) diff2 += std::abs(e1(0, j) - e4(0, j));
  CHECK(diff2 > 1e-9);
}

TEST_CASE("encode_user enforces n_max and width") {
  auto params = user_model::UserEncoderParams::init(4, 2, 2, 5);
  auto too_long = tensor::Tensor::zeros(3, 4);
  CHECK_THROWS_AS(user_model::encode_user(params, too_long), ContractError);
  auto wrong_width = tensor::Tensor::zeros(2, 6);
  CHECK_THROWS_AS(user_model::encode_user(params, wrong_width), DimensionError);
  CHECK_THROWS_AS(user_model::UserEncoderParams::init(5, 16, 2, 5), ConfigError);
}

TEST_CASE("infonce_loss pinned two-user case") {
  using tensor::Tensor;
  // Orthogonal users with perfectly aligned positives. Each direction
  // contributes -(cos_pos/tau - logsumexp(negatives/tau)); with one negative
  // at cosine 0 the logsumexp is 0, so the per-user term is -2/tau and the
  // batch mean equals -2/tau as well.
  std::vector<Tensor> a{Tensor::from(1, 2, {1.0, 0.0}), Tensor::from(1, 2, {0.0, 1.0})};
  std::vector<Tensor> b{Tensor::from(1, 2, {1.0, 0.0}), Tensor::from(1, 2, {0.0, 1.0})};
  CHECK(user_model::infonce_loss(a, b, 1.0).item() == doctest::Approx(-2.0).epsilon(1e-9));
  CHECK(user_model::infonce_loss(a, b, 0.5).item() == doctest::Approx(-4.0).epsilon(1e-9));
}

TEST_CASE("infonce_loss drops as positives align and negatives separate") {
  using tensor::Tensor;
  std::vector<Tensor> a{Tensor::from(1, 2, {1.0, 0.0}), Tensor::from(1, 2, {0.0, 1.0})};
  std::vector<Tensor> aligned{Tensor::from(1, 2, {1.0, 0.0}), Tensor::from(1, 2, {0.0, 1.0})};
  std::vector<Tensor> crossed{Tensor::from(1, 2, {0.0, 1.0}), Tensor::from(1, 2, {1.0, 0.0})};
  auto good = user_model::infonce_loss(a, aligned, 0.5);
  auto bad = user_model::infonce_loss(a, crossed, 0.5);
  CHECK(good.item() < bad.item());

  CHECK_THROWS_AS(user_model::infonce_loss(a, {a[0]}, 1.0), ContractError);
  CHECK_THROWS_AS(user_model::infonce_loss({a[0]}, {aligned[0]}, 1.0), ContractError);
  CHECK_THROWS_AS(user_model::infonce_loss(a, aligned, 0.0), ConfigError);
}

TEST_CASE("user index: save/load round-trip and retrieve_users ordering") {
  user_model::UserIndex index;
  index.user_ids = {"u_a", "u_b", "u_c", "u_d"};
  index.embeddings = {{1.0, 0.0}, {0.8, 0.6}, {0.0, 1.0}, {-1.0, 0.0}};

  auto top = user_model::retrieve_users(index, "u_a", 3);
  REQUIRE(top.size() == 3);
  CHECK(top[0] == "u_a");  // self ranks first (cosine 1)
  CHECK(top[1] == "u_b");
  CHECK(top[2] == "u_c");

  // Ties break by ascending user id: u_c and u_b seen from u_c's axis.
  auto from_c = user_model::retrieve_users(index, "u_c", 2);
  CHECK(from_c[0] == "u_c");

  CHECK_THROWS_AS(user_model::retrieve_users(index, "ghost", 2), LookupError);
  CHECK_THROWS_AS(user_model::retrieve_users(index, "u_a", 0), ContractError);
  CHECK_THROWS_AS(user_model::retrieve_users(index, "u_a", 5), ContractError);

  const std::string path = "/tmp/cfrag_user_index_test.bin";
  index.save(path);
  auto back = user_model::UserIndex::load(path, 2);
  REQUIRE(back.user_ids == index.user_ids);
  for (std::size_t i = 0; i < back.embeddings.size(); ++i)
    for (std::size_t j = 0; j < 2; ++j)
      CHECK(back.embeddings[i][j] == doctest::Approx(index.embeddings[i][j]));
  CHECK(back.embedding_of("u_b")[1] == doctest::Approx(0.6));
  std::remove(path.c_str());
}

TEST_CASE("retrieve_users brute-force oracle on random indexes") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    user_model::UserIndex index;
    const std::size_t n = 8, d = 4;
    for (std::size_t u = 0; u < n; ++u) {
      index.user_ids.push_back("user" + std::to_string(u));
      std::vector<double> v(d);
      double s = 0.0;
      for (auto& x : v) {
        x = dist(rng);
        s += x * x;
      }
      for (auto& x : v) x /= std::sqrt(s);
      index.embeddings.push_back(v);
    }
    const std::string self = "user3";
    auto got = user_model::retrieve_users(index, self, 4);

    // Brute force: cosine descending, ties by ascending user id.
    std::vector<std::pair<double, std::string>> scored;
    const auto& q = index.embedding_of(self);
    for (std::size_t u = 0; u < n; ++u) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += q[j] * index.embeddings[u][j];
      scored.push_back({dot, index.user_ids[u]});
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (std::size_t i = 0; i < 4; ++i) CHECK(got[i] == scored[i].second);
  }
}

TEST_CASE("train_user_encoder runs and returns a loss trace") {
  embedding::HashEmbeddingProvider emb(8);
  std::vector<corpus::UserProfile> profiles(4);
  for (int u = 0; u < 4; ++u) {
    profiles[u].user_id = "u" + std::to_string(u);
    for (int i = 0; i < 4; ++i) {
      corpus::Document d;
      d.id = "u" + std::to_string(u) + "_d" + std::to_string(i);
      d.text = "cluster" + std::to_string(u % 2) + " token" + std::to_string(i);
      d.position = i;
      profiles[u].history.push_back(d);
    }
  }
  user_model::UserTrainConfig cfg;
  cfg.d = 8;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.seed = 3;
  auto result = user_model::train_user_encoder(profiles, emb, cfg);
  CHECK(result.loss_trace.size() == 2);
  for (double l : result.loss_trace) CHECK(std::isfinite(l));

  auto index = user_model::build_user_index(result.params, profiles, emb);
  REQUIRE(index.user_ids.size() == 4);
  for (const auto& e : index.embeddings) {
    double n2 = 0.0;
    for (double x : e) n2 += x * x;
    CHECK(std::sqrt(n2) == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK_THROWS_AS(user_model::train_user_encoder({profiles[0]}, emb, cfg), ContractError);
}
