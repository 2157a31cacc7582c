#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "cfrag/errors.hpp"
#include "cfrag/optim.hpp"
#include "cfrag/tensor.hpp"

using namespace cfrag;
using tensor::Tensor;

namespace {

// Builds a scalar parameter with the given value and accumulated gradient.
Tensor param_with_grad(double value, double grad) {
  auto p = Tensor::from(1, 1, {value}, true);
  auto loss = tensor::sum_all(tensor::scale(p, grad));
  tensor::backward(loss);
  return p;
}

}  // namespace

TEST_CASE("single Adam step with unit gradient moves by ~lr") {
  auto p = param_with_grad(0.0, 1.0);
  std::vector<Tensor> params{p};
  tensor::AdamState state;
  tensor::adam_step(params, state, 1e-3);
  // mhat = vhat = 1 after bias correction, so the step is lr/(1 + eps).
  CHECK(p.item() == doctest::Approx(-1e-3).epsilon(1e-6));
  CHECK(state.t == 1);
}

TEST_CASE("two steps with constant gradient match a reference trace") {
  auto p = param_with_grad(0.0, 1.0);
  std::vector<Tensor> params{p};
  tensor::AdamState state;
  tensor::adam_step(params, state, 1e-3);
  p.zero_grad();
  tensor::backward(tensor::sum_all(tensor::scale(p, 1.0)));
  tensor::adam_step(params, state, 1e-3);

  // Hand-rolled Adam on the same schedule.
  double m = 0.0, v = 0.0, theta = 0.0;
  for (int t = 1; t <= 2; ++t) {
    m = 0.9 * m + 0.1 * 1.0;
    v = 0.999 * v + 0.001 * 1.0;
    const double mhat = m / (1.0 - std::pow(0.9, t));
    const double vhat = v / (1.0 - std::pow(0.999, t));
    theta -= 1e-3 * mhat / (std::sqrt(vhat) + 1e-8);
  }
  CHECK(p.item() == doctest::Approx(theta).epsilon(1e-12));
  CHECK(state.t == 2);
}

TEST_CASE("zero gradient leaves the parameter unchanged but advances t") {
  auto p = Tensor::from(1, 1, {0.25}, true);
  std::vector<Tensor> params{p};
  tensor::AdamState state;
  tensor::adam_step(params, state, 1e-3);
  CHECK(p.item() == doctest::Approx(0.25));
  CHECK(state.t == 1);
}

TEST_CASE("moment buffers persist across steps") {
  auto p = param_with_grad(0.0, 2.0);
  std::vector<Tensor> params{p};
  tensor::AdamState state;
  tensor::adam_step(params, state, 1e-2);
  CHECK(state.m[0][0] == doctest::Approx(0.2));
  CHECK(state.v[0][0] == doctest::Approx(0.004));
}

TEST_CASE("invalid learning rates are rejected") {
  auto p = Tensor::from(1, 1, {0.0}, true);
  std::vector<Tensor> params{p};
  tensor::AdamState state;
  CHECK_THROWS_AS(tensor::adam_step(params, state, 0.0), ConfigError);
  CHECK_THROWS_AS(tensor::adam_step(params, state, -1.0), ConfigError);
  CHECK_THROWS_AS(tensor::Adam(params, 0.0), ConfigError);
}

TEST_CASE("state/parameter mismatch is detected") {
  auto a = param_with_grad(0.0, 1.0);
  auto b = param_with_grad(0.0, 1.0);
  std::vector<Tensor> both{a, b};
  tensor::AdamState state;
  tensor::adam_step(both, state, 1e-3);
  std::vector<Tensor> just_one{a};
  CHECK_THROWS_AS(tensor::adam_step(just_one, state, 1e-3), DimensionError);
}

TEST_CASE("Adam wrapper: zero_grad + step run a training loop") {
  auto w = Tensor::from(1, 1, {5.0}, true);
  tensor::Adam opt({w}, 0.1);
  // Minimize w^2: 200 steps should take |w| well below the start.
  for (int i = 0; i < 200; ++i) {
    opt.zero_grad();
    tensor::backward(tensor::sum_all(tensor::mul(w, w)));
    opt.step();
  }
  CHECK(std::abs(w.item()) < 1.0);
  CHECK(opt.state().t == 200);
  CHECK(opt.learning_rate() == doctest::Approx(0.1));
}
