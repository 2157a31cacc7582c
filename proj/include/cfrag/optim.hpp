#pragma once

#include <cstdint>
#include <vector>

#include "cfrag/tensor.hpp"

namespace cfrag::tensor {

// Per-parameter Adam moment buffers plus the shared step counter.
struct AdamState {
  std::vector<std::vector<double>> m;  // first moments, one buffer per parameter
  std::vector<std::vector<double>> v;  // second moments
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard Adam with bias correction. Reads each parameter's accumulated
// gradient and updates its values in place; increments state.t by one.
// Gradients are NOT zeroed here; the caller zeroes them at step start.
void adam_step(std::vector<Tensor>& params, AdamState& state, double lr);

// Convenience wrapper owning the state for a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<Tensor> params, double lr);

  void zero_grad();
  void step();

  double learning_rate() const { return lr_; }
  const AdamState& state() const { return state_; }
  std::vector<Tensor>& params() { return params_; }

 private:
  std::vector<Tensor> params_;
  AdamState state_;
  double lr_;
};

}  // namespace cfrag::tensor
