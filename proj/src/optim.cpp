#include "cfrag/optim.hpp"

#include <cmath>

#include "cfrag/errors.hpp"

namespace cfrag::tensor {

void adam_step(std::vector<Tensor>& params, AdamState& state, double lr) {
  if (lr <= 0.0) throw ConfigError("adam_step: learning rate must be positive");
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].size(), 0.0);
      state.v[i].assign(params[i].size(), 0.0);
    }
  }
  if (state.m.size() != params.size())
    throw DimensionError("adam_step: state does not match parameter count");

  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));

  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].requires_grad()) continue;
    const auto& g = params[i].grad();
    auto& w = params[i].mutable_values();
    if (state.m[i].size() != w.size())
      throw DimensionError("adam_step: moment shape does not match parameter");
    for (std::size_t j = 0; j < w.size(); ++j) {
      state.m[i][j] = state.beta1 * state.m[i][j] + (1.0 - state.beta1) * g[j];
      state.v[i][j] = state.beta2 * state.v[i][j] + (1.0 - state.beta2) * g[j] * g[j];
      const double mhat = state.m[i][j] / bc1;
      const double vhat = state.v[i][j] / bc2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

Adam::Adam(std::vector<Tensor> params, double lr) : params_(std::move(params)), lr_(lr) {
  if (lr <= 0.0) throw ConfigError("Adam: learning rate must be positive");
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::step() { adam_step(params_, state_, lr_); }

}  // namespace cfrag::tensor
