#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "rtv/rng.hpp"

namespace rtv {

using Shape = std::vector<int>;

// One node of the gradient tape. Tensors are thin handles over these; an op
// records its parents and a closure that scatters the node's grad back into
// them. Nodes are immutable after creation except for grad buffers and
// parameter values (mutated only by the optimizer between passes).
struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until backward (or zero_grad) touches it
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;  // may be null for leaves

  int size() const {
    int n = 1;
    for (int d : shape) n *= d;
    return n;
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> n) : n_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  int rank() const { return static_cast<int>(n_->shape.size()); }
  int dim(int i) const { return n_->shape[static_cast<size_t>(i)]; }
  int size() const { return n_->size(); }

  const std::vector<double>& values() const { return n_->value; }
  // Direct mutable access; used by init and the optimizer only.
  std::vector<double>& raw() { return n_->value; }
  const std::vector<double>& grad() const { return n_->grad; }
  bool has_grad() const { return !n_->grad.empty(); }
  bool requires_grad() const { return n_->requires_grad; }

  double item() const;  // scalar tensors only
  double at(int i) const { return n_->value[static_cast<size_t>(i)]; }
  double at(int i, int j) const {
    return n_->value[static_cast<size_t>(i * dim(1) + j)];
  }

  std::shared_ptr<TensorNode> node() const { return n_; }

 private:
  std::shared_ptr<TensorNode> n_;
};

// ---- elementwise / arithmetic ----
Tensor add(const Tensor& a, const Tensor& b);  // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // hadamard
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor gelu(const Tensor& a);  // exact erf form: x * Phi(x)
Tensor clamp_min(const Tensor& a, double lo);

// ---- shape / structure ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor row(const Tensor& a, int i);               // [m x n] -> [n]
Tensor cols(const Tensor& a, int c0, int c1);     // half-open column range
Tensor index(const Tensor& a, int i);             // 1-D -> scalar
Tensor concat(const std::vector<Tensor>& xs);     // 1-D tensors end to end
Tensor concat_cols(const std::vector<Tensor>& xs);  // same row count
Tensor stack_rows(const std::vector<Tensor>& xs);   // 1-D tensors -> matrix
Tensor add_rowvec(const Tensor& a, const Tensor& b);  // broadcast b over rows

// ---- reductions ----
Tensor sum(const Tensor& a);   // scalar
Tensor mean(const Tensor& a);  // scalar
Tensor mean_over_rows(const Tensor& a);  // [m x n] -> [n], column means
Tensor max_over_rows(const Tensor& a);   // [m x n] -> [n], column maxima
Tensor logsumexp(const Tensor& a);       // 1-D -> scalar, stable

// ---- softmax ----
// Softmax along `axis` of a 1-D or 2-D tensor. Masked positions (mask value
// 0) get probability exactly zero and receive no gradient. An empty mask
// means no masking. A fully masked slice is an error.
Tensor masked_softmax(const Tensor& x, const std::vector<uint8_t>& mask,
                      int axis);
Tensor softmax(const Tensor& x, int axis);

// ---- regularization ----
// Inverted dropout: zero with probability `rate`, scale survivors by
// 1/(1-rate). Identity when not training. rate must be in [0, 1).
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng);

// ---- span enumeration ----
// All (i, j) with i <= j and j - i < max_len over a length-n sequence,
// ordered by i then j. Shared by losses, decoding, and the test oracles.
std::vector<std::pair<int, int>> enumerate_spans(int n, int max_len);
// 1-D tensor of alpha_i + beta_j over enumerate_spans(n, max_len).
Tensor span_logits(const Tensor& alpha, const Tensor& beta, int max_len);

// ---- embedding ----
Tensor gather_rows(const Tensor& table, const std::vector<int>& idx);

// ---- normalization ----
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// ---- backward ----
// Reverse-mode sweep from a scalar loss. Zeroes grads of every node in the
// reachable graph, then accumulates. Each node's backprop runs exactly once.
void backward(const Tensor& loss);

// ---- parameters ----
// Ordered, named parameter registry. Iteration order is insertion order and
// defines the checkpoint layout and optimizer slot order.
class ParamStore {
 public:
  Tensor add(const std::string& name, Tensor t);
  Tensor get(const std::string& name) const;
  bool has(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& items() const {
    return items_;
  }
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

// Glorot-uniform matrix parameter; zero vector for biases.
Tensor glorot(Shape shape, int fan_in, int fan_out, Rng& rng);

struct AdamConfig {
  double lr = 0.0008;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(ParamStore& params, AdamConfig cfg = {});
  // One bias-corrected update from current grads. A parameter without a
  // populated grad is an error naming the parameter.
  void step();
  int step_count() const { return t_; }

 private:
  ParamStore& params_;
  AdamConfig cfg_;
  int t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace rtv
