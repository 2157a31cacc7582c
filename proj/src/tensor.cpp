#include "cfrag/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "cfrag/errors.hpp"

namespace cfrag::tensor {

namespace {

using Node = Tensor::Node;

void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string("non-finite result in ") + op);
    }
  }
}

std::shared_ptr<Node> make_leaf(std::size_t rows, std::size_t cols, std::vector<double> values,
                                bool requires_grad) {
  if (values.size() != rows * cols) {
    throw DimensionError("tensor values length does not match shape");
  }
  check_finite(values, "leaf construction");
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->values = std::move(values);
  n->requires_grad = requires_grad;
  n->is_leaf = true;
  if (requires_grad) n->grad.assign(rows * cols, 0.0);
  return n;
}

Tensor make_op(std::size_t rows, std::size_t cols, std::vector<double> values,
               std::vector<std::shared_ptr<Node>> parents, std::function<void(Node&)> backprop,
               const char* op) {
  check_finite(values, op);
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->values = std::move(values);
  n->is_leaf = false;
  for (const auto& p : parents) {
    if (p->requires_grad) n->requires_grad = true;
  }
  if (n->requires_grad) {
    n->grad.assign(n->values.size(), 0.0);
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return Tensor(std::move(n));
}

void ensure_grad(Node& n) {
  if (n.requires_grad && n.grad.empty()) n.grad.assign(n.values.size(), 0.0);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
  }
}

}  // namespace

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  return Tensor(make_leaf(rows, cols, std::vector<double>(rows * cols, 0.0), requires_grad));
}

Tensor Tensor::from(std::size_t rows, std::size_t cols, std::vector<double> values,
                    bool requires_grad) {
  return Tensor(make_leaf(rows, cols, std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from(1, 1, {value}, requires_grad);
}

Tensor Tensor::identity(std::size_t n, bool requires_grad) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return from(n, n, std::move(v), requires_grad);
}

std::size_t Tensor::rows() const { return node_ ? node_->rows : 0; }
std::size_t Tensor::cols() const { return node_ ? node_->cols : 0; }

double Tensor::operator()(std::size_t r, std::size_t c) const {
  return node_->values[r * node_->cols + c];
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() requires a 1x1 tensor");
  return node_->values[0];
}

const std::vector<double>& Tensor::values() const { return node_->values; }

std::vector<double>& Tensor::mutable_values() {
  if (!node_->is_leaf) throw ContractError("mutable_values() only valid on leaf tensors");
  return node_->values;
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

const std::vector<double>& Tensor::grad() const {
  if (!requires_grad()) throw ContractError("grad() on a tensor without requires_grad");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (requires_grad()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach(bool requires_grad) const {
  return from(rows(), cols(), node_->values, requires_grad);
}

// --- ops ---

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  auto pa = a.node(), pb = b.node();
  return make_op(a.rows(), a.cols(), std::move(out), {pa, pb},
                 [pa, pb](Node& n) {
                   if (pa->requires_grad) {
                     ensure_grad(*pa);
                     for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i];
                   }
                   if (pb->requires_grad) {
                     ensure_grad(*pb);
                     for (std::size_t i = 0; i < n.grad.size(); ++i) pb->grad[i] += n.grad[i];
                   }
                 },
                 "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  auto pa = a.node(), pb = b.node();
  return make_op(a.rows(), a.cols(), std::move(out), {pa, pb},
                 [pa, pb](Node& n) {
                   if (pa->requires_grad) {
                     ensure_grad(*pa);
                     for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i];
                   }
                   if (pb->requires_grad) {
                     ensure_grad(*pb);
                     for (std::size_t i = 0; i < n.grad.size(); ++i) pb->grad[i] -= n.grad[i];
                   }
                 },
                 "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  auto pa = a.node(), pb = b.node();
  return make_op(a.rows(), a.cols(), std::move(out), {pa, pb},
                 [pa, pb](Node& n) {
                   if (pa->requires_grad) {
                     ensure_grad(*pa);
                     for (std::size_t i = 0; i < n.grad.size(); ++i)
                       pa->grad[i] += n.grad[i] * pb->values[i];
                   }
                   if (pb->requires_grad) {
                     ensure_grad(*pb);
                     for (std::size_t i = 0; i < n.grad.size(); ++i)
                       pb->grad[i] += n.grad[i] * pa->values[i];
                   }
                 },
                 "mul");
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * c;
  auto pa = a.node();
  return make_op(a.rows(), a.cols(), std::move(out), {pa},
                 [pa, c](Node& n) {
                   ensure_grad(*pa);
                   for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i] * c;
                 },
                 "scale");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree (" + std::to_string(a.cols()) +
                         " vs " + std::to_string(b.rows()) + ")");
  }
  const std::size_t n = a.rows(), m = a.cols(), p = b.cols();
  std::vector<double> out(n * p, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < m; ++k) {
      const double aik = av[i * m + k];
      if (aik == 0.0) continue;
      const double* brow = &bv[k * p];
      double* orow = &out[i * p];
      for (std::size_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
    }
  }
  auto pa = a.node(), pb = b.node();
  return make_op(n, p, std::move(out), {pa, pb},
                 [pa, pb, n, m, p](Node& node) {
                   if (pa->requires_grad) {
                     ensure_grad(*pa);
                     // dA += dC * B^T
                     for (std::size_t i = 0; i < n; ++i)
                       for (std::size_t k = 0; k < m; ++k) {
                         double s = 0.0;
                         const double* grow = &node.grad[i * p];
                         const double* brow = &pb->values[k * p];
                         for (std::size_t j = 0; j < p; ++j) s += grow[j] * brow[j];
                         pa->grad[i * m + k] += s;
                       }
                   }
                   if (pb->requires_grad) {
                     ensure_grad(*pb);
                     // dB += A^T * dC
                     for (std::size_t i = 0; i < n; ++i)
                       for (std::size_t k = 0; k < m; ++k) {
                         const double aik = pa->values[i * m + k];
                         if (aik == 0.0) continue;
                         const double* grow = &node.grad[i * p];
                         double* brow = &pb->grad[k * p];
                         for (std::size_t j = 0; j < p; ++j) brow[j] += aik * grow[j];
                       }
                   }
                 },
                 "matmul");
}

Tensor transpose(const Tensor& a) {
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j * n + i] = a.values()[i * m + j];
  auto pa = a.node();
  return make_op(m, n, std::move(out), {pa},
                 [pa, n, m](Node& node) {
                   ensure_grad(*pa);
                   for (std::size_t i = 0; i < n; ++i)
                     for (std::size_t j = 0; j < m; ++j)
                       pa->grad[i * m + j] += node.grad[j * n + i];
                 },
                 "transpose");
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) throw DimensionError("concat_cols: row counts differ");
  const std::size_t n = a.rows(), ca = a.cols(), cb = b.cols();
  std::vector<double> out(n * (ca + cb));
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(&a.values()[i * ca], ca, &out[i * (ca + cb)]);
    std::copy_n(&b.values()[i * cb], cb, &out[i * (ca + cb) + ca]);
  }
  auto pa = a.node(), pb = b.node();
  return make_op(n, ca + cb, std::move(out), {pa, pb},
                 [pa, pb, n, ca, cb](Node& node) {
                   for (std::size_t i = 0; i < n; ++i) {
                     if (pa->requires_grad) {
                       ensure_grad(*pa);
                       for (std::size_t j = 0; j < ca; ++j)
                         pa->grad[i * ca + j] += node.grad[i * (ca + cb) + j];
                     }
                     if (pb->requires_grad) {
                       ensure_grad(*pb);
                       for (std::size_t j = 0; j < cb; ++j)
                         pb->grad[i * cb + j] += node.grad[i * (ca + cb) + ca + j];
                     }
                   }
                 },
                 "concat_cols");
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t len) {
  if (start + len > a.cols()) throw DimensionError("slice_cols: range out of bounds");
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<double> out(n * len);
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(&a.values()[i * m + start], len, &out[i * len]);
  auto pa = a.node();
  return make_op(n, len, std::move(out), {pa},
                 [pa, n, m, start, len](Node& node) {
                   ensure_grad(*pa);
                   for (std::size_t i = 0; i < n; ++i)
                     for (std::size_t j = 0; j < len; ++j)
                       pa->grad[i * m + start + j] += node.grad[i * len + j];
                 },
                 "slice_cols");
}

Tensor mean_rows(const Tensor& a) {
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j] += a.values()[i * m + j];
  for (std::size_t j = 0; j < m; ++j) out[j] /= static_cast<double>(n);
  auto pa = a.node();
  return make_op(1, m, std::move(out), {pa},
                 [pa, n, m](Node& node) {
                   ensure_grad(*pa);
                   const double inv = 1.0 / static_cast<double>(n);
                   for (std::size_t i = 0; i < n; ++i)
                     for (std::size_t j = 0; j < m; ++j)
                       pa->grad[i * m + j] += node.grad[j] * inv;
                 },
                 "mean_rows");
}

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  auto pa = a.node();
  return make_op(1, 1, {s}, {pa},
                 [pa](Node& node) {
                   ensure_grad(*pa);
                   for (double& g : pa->grad) g += node.grad[0];
                 },
                 "sum_all");
}

Tensor row_softmax(const Tensor& a) {
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = &a.values()[i * m];
    double mx = row[0];
    for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      out[i * m + j] = std::exp(row[j] - mx);
      denom += out[i * m + j];
    }
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] /= denom;
  }
  auto pa = a.node();
  return make_op(n, m, std::move(out), {pa},
                 [pa, n, m](Node& node) {
                   ensure_grad(*pa);
                   for (std::size_t i = 0; i < n; ++i) {
                     const double* y = &node.values[i * m];
                     const double* dy = &node.grad[i * m];
                     double dot = 0.0;
                     for (std::size_t j = 0; j < m; ++j) dot += dy[j] * y[j];
                     for (std::size_t j = 0; j < m; ++j)
                       pa->grad[i * m + j] += y[j] * (dy[j] - dot);
                   }
                 },
                 "row_softmax");
}

Tensor layer_norm_rows(const Tensor& a, double eps) {
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<double> out(n * m);
  std::vector<double> inv_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = &a.values()[i * m];
    double mu = 0.0;
    for (std::size_t j = 0; j < m; ++j) mu += row[j];
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t j = 0; j < m; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(m);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = (row[j] - mu) * inv_std[i];
  }
  auto pa = a.node();
  return make_op(n, m, std::move(out), {pa},
                 [pa, n, m, inv_std](Node& node) {
                   ensure_grad(*pa);
                   for (std::size_t i = 0; i < n; ++i) {
                     const double* y = &node.values[i * m];
                     const double* dy = &node.grad[i * m];
                     double mean_dy = 0.0, mean_dy_y = 0.0;
                     for (std::size_t j = 0; j < m; ++j) {
                       mean_dy += dy[j];
                       mean_dy_y += dy[j] * y[j];
                     }
                     mean_dy /= static_cast<double>(m);
                     mean_dy_y /= static_cast<double>(m);
                     for (std::size_t j = 0; j < m; ++j)
                       pa->grad[i * m + j] += inv_std[i] * (dy[j] - mean_dy - y[j] * mean_dy_y);
                   }
                 },
                 "layer_norm_rows");
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, a.values()[i]);
  auto pa = a.node();
  return make_op(a.rows(), a.cols(), std::move(out), {pa},
                 [pa](Node& node) {
                   ensure_grad(*pa);
                   for (std::size_t i = 0; i < node.grad.size(); ++i)
                     if (pa->values[i] > 0.0) pa->grad[i] += node.grad[i];
                 },
                 "relu");
}

Tensor log(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(a.values()[i]);
  auto pa = a.node();
  return make_op(a.rows(), a.cols(), std::move(out), {pa},
                 [pa](Node& node) {
                   ensure_grad(*pa);
                   for (std::size_t i = 0; i < node.grad.size(); ++i)
                     pa->grad[i] += node.grad[i] / pa->values[i];
                 },
                 "log");
}

Tensor exp(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.values()[i]);
  auto pa = a.node();
  return make_op(a.rows(), a.cols(), std::move(out), {pa},
                 [pa](Node& node) {
                   ensure_grad(*pa);
                   for (std::size_t i = 0; i < node.grad.size(); ++i)
                     pa->grad[i] += node.grad[i] * node.values[i];
                 },
                 "exp");
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw DimensionError("add_row: row must be 1x" + std::to_string(a.cols()));
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = a.values()[i * m + j] + row.values()[j];
  auto pa = a.node(), pr = row.node();
  return make_op(n, m, std::move(out), {pa, pr},
                 [pa, pr, n, m](Node& node) {
                   if (pa->requires_grad) {
                     ensure_grad(*pa);
                     for (std::size_t i = 0; i < n * m; ++i) pa->grad[i] += node.grad[i];
                   }
                   if (pr->requires_grad) {
                     ensure_grad(*pr);
                     for (std::size_t i = 0; i < n; ++i)
                       for (std::size_t j = 0; j < m; ++j) pr->grad[j] += node.grad[i * m + j];
                   }
                 },
                 "add_row");
}

Tensor mul_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw DimensionError("mul_row: row must be 1x" + std::to_string(a.cols()));
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = a.values()[i * m + j] * row.values()[j];
  auto pa = a.node(), pr = row.node();
  return make_op(n, m, std::move(out), {pa, pr},
                 [pa, pr, n, m](Node& node) {
                   if (pa->requires_grad) {
                     ensure_grad(*pa);
                     for (std::size_t i = 0; i < n; ++i)
                       for (std::size_t j = 0; j < m; ++j)
                         pa->grad[i * m + j] += node.grad[i * m + j] * pr->values[j];
                   }
                   if (pr->requires_grad) {
                     ensure_grad(*pr);
                     for (std::size_t i = 0; i < n; ++i)
                       for (std::size_t j = 0; j < m; ++j)
                         pr->grad[j] += node.grad[i * m + j] * pa->values[i * m + j];
                   }
                 },
                 "mul_row");
}

Tensor cosine(const Tensor& a, const Tensor& b) {
  if (a.rows() != 1 || b.rows() != 1) throw DimensionError("cosine: expects 1xd vectors");
  require_same_shape(a, b, "cosine");
  const std::size_t d = a.cols();
  double dot = 0.0, na2 = 0.0, nb2 = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    dot += a.values()[j] * b.values()[j];
    na2 += a.values()[j] * a.values()[j];
    nb2 += b.values()[j] * b.values()[j];
  }
  const double na = std::sqrt(na2), nb = std::sqrt(nb2);
  if (na == 0.0 || nb == 0.0) throw NumericError("cosine: zero-norm operand");
  const double c = dot / (na * nb);
  auto pa = a.node(), pb = b.node();
  return make_op(1, 1, {c}, {pa, pb},
                 [pa, pb, d, na, nb, c](Node& node) {
                   const double g = node.grad[0];
                   if (pa->requires_grad) {
                     ensure_grad(*pa);
                     for (std::size_t j = 0; j < d; ++j)
                       pa->grad[j] += g * (pb->values[j] / (na * nb) - c * pa->values[j] / (na * na));
                   }
                   if (pb->requires_grad) {
                     ensure_grad(*pb);
                     for (std::size_t j = 0; j < d; ++j)
                       pb->grad[j] += g * (pa->values[j] / (na * nb) - c * pb->values[j] / (nb * nb));
                   }
                 },
                 "cosine");
}

void backward(const Tensor& loss) {
  if (loss.size() != 1) throw ContractError("backward: loss must be scalar");
  if (!loss.requires_grad()) return;

  // Topological order via iterative DFS.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* parent = node->parents[idx].get();
      ++idx;
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

double finite_diff_check(const std::function<Tensor()>& f, std::vector<Tensor>& params,
                         double eps) {
  // Autodiff pass.
  for (auto& p : params) p.zero_grad();
  Tensor loss = f();
  backward(loss);
  std::vector<std::vector<double>> auto_grads;
  auto_grads.reserve(params.size());
  for (auto& p : params) auto_grads.push_back(p.grad());

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& vals = params[pi].mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double saved = vals[i];
      vals[i] = saved + eps;
      const double up = f().item();
      vals[i] = saved - eps;
      const double down = f().item();
      vals[i] = saved;
      const double cd = (up - down) / (2.0 * eps);
      const double rel = std::abs(auto_grads[pi][i] - cd) / (std::abs(cd) + 1e-12);
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace cfrag::tensor
