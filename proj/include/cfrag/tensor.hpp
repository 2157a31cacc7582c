#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

namespace cfrag::tensor {

// Dense row-major 2-D tensor participating in a reverse-mode autodiff graph.
// A Tensor is a cheap handle; copies share the underlying node. Vectors are
// represented as 1xd tensors, scalars as 1x1.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
  static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor identity(std::size_t n, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const { return rows() * cols(); }

  double operator()(std::size_t r, std::size_t c) const;
  double item() const;  // requires 1x1

  const std::vector<double>& values() const;
  // Mutable access to a leaf's values (invalid on non-leaf nodes).
  std::vector<double>& mutable_values();

  bool requires_grad() const;
  const std::vector<double>& grad() const;
  void zero_grad();

  // Detached copy: same values, fresh leaf, no history.
  Tensor detach(bool requires_grad = false) const;

  struct Node;
  const std::shared_ptr<Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node> node_;
};

struct Tensor::Node {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // adds into parents' grads
};

// --- Primitive forward ops (record the graph when any input requires grad) ---

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);       // elementwise
Tensor scale(const Tensor& a, double c);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t len);
Tensor mean_rows(const Tensor& a);                  // n x d -> 1 x d
Tensor sum_all(const Tensor& a);                    // -> 1 x 1
Tensor row_softmax(const Tensor& a);                // max-subtracted, rows sum to 1
Tensor layer_norm_rows(const Tensor& a, double eps = 1e-5);
Tensor relu(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor add_row(const Tensor& a, const Tensor& row);  // broadcast 1xd over n rows
Tensor mul_row(const Tensor& a, const Tensor& row);
Tensor cosine(const Tensor& a, const Tensor& b);     // 1xd vectors -> 1x1

// Backpropagates d(loss)/d(leaf) into every requires_grad leaf. Gradients
// accumulate across calls; zero them before each training step.
void backward(const Tensor& loss);

// Max over coordinates of |autodiff - central difference| / (|cd| + 1e-12).
// f must be a deterministic scalar function of the given leaf parameters.
double finite_diff_check(const std::function<Tensor()>& f, std::vector<Tensor>& params,
                         double eps = 1e-5);

}  // namespace cfrag::tensor
