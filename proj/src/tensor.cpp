#include "rtv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace rtv {

namespace {

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

std::shared_ptr<TensorNode> make_node(Shape shape, std::vector<double> value,
                                      std::vector<std::shared_ptr<TensorNode>> parents) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents) {
    if (p->requires_grad) {
      n->requires_grad = true;
      break;
    }
  }
  return n;
}

void ensure_grad(TensorNode& n) {
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
}

double phi_cdf(double x) { return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))); }
double phi_pdf(double x) {
  static const double inv_sqrt_2pi = 0.3989422804014327;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  int sz = n->size();
  n->value.assign(static_cast<size_t>(sz), 0.0);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  if (static_cast<size_t>(n->size()) != values.size())
    throw std::invalid_argument("Tensor::from: " + std::to_string(values.size()) +
                                " values for shape " + shape_str(n->shape));
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from({}, {v}, requires_grad);
}

double Tensor::item() const {
  if (n_->size() != 1)
    throw std::invalid_argument("Tensor::item on non-scalar shape " +
                                shape_str(n_->shape));
  return n_->value[0];
}

// ---- elementwise ----

static void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.values());
  for (size_t i = 0; i < out.size(); ++i) out[i] += b.values()[i];
  auto n = make_node(a.shape(), std::move(out), {a.node(), b.node()});
  n->backprop = [](TensorNode& self) {
    for (auto& p : self.parents) {
      ensure_grad(*p);
      for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
  };
  return Tensor(n);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.values());
  for (size_t i = 0; i < out.size(); ++i) out[i] -= b.values()[i];
  auto n = make_node(a.shape(), std::move(out), {a.node(), b.node()});
  n->backprop = [](TensorNode& self) {
    ensure_grad(*self.parents[0]);
    ensure_grad(*self.parents[1]);
    for (size_t i = 0; i < self.grad.size(); ++i) {
      self.parents[0]->grad[i] += self.grad[i];
      self.parents[1]->grad[i] -= self.grad[i];
    }
  };
  return Tensor(n);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.values());
  for (size_t i = 0; i < out.size(); ++i) out[i] *= b.values()[i];
  auto n = make_node(a.shape(), std::move(out), {a.node(), b.node()});
  n->backprop = [](TensorNode& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    ensure_grad(pa);
    ensure_grad(pb);
    for (size_t i = 0; i < self.grad.size(); ++i) {
      pa.grad[i] += self.grad[i] * pb.value[i];
      pb.grad[i] += self.grad[i] * pa.value[i];
    }
  };
  return Tensor(n);
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.values());
  for (auto& v : out) v *= c;
  auto n = make_node(a.shape(), std::move(out), {a.node()});
  n->backprop = [c](TensorNode& self) {
    auto& p = *self.parents[0];
    ensure_grad(p);
    for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += c * self.grad[i];
  };
  return Tensor(n);
}

Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.values());
  for (auto& v : out) v += c;
  auto n = make_node(a.shape(), std::move(out), {a.node()});
  n->backprop = [](TensorNode& self) {
    auto& p = *self.parents[0];
    ensure_grad(p);
    for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  };
  return Tensor(n);
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

template <typename FwdFn, typename DerivFn>
static Tensor unary_op(const Tensor& a, FwdFn fwd, DerivFn deriv) {
  std::vector<double> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(a.values()[i]);
  auto n = make_node(a.shape(), std::move(out), {a.node()});
  n->backprop = [deriv](TensorNode& self) {
    auto& p = *self.parents[0];
    ensure_grad(p);
    for (size_t i = 0; i < self.grad.size(); ++i)
      p.grad[i] += self.grad[i] * deriv(p.value[i], self.value[i]);
  };
  return Tensor(n);
}

Tensor tanh(const Tensor& a) {
  return unary_op(a, [](double x) { return std::tanh(x); },
                  [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                  [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
  return unary_op(a, [](double x) { return std::exp(x); },
                  [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary_op(a, [](double x) { return std::log(x); },
                  [](double x, double) { return 1.0 / x; });
}

Tensor gelu(const Tensor& a) {
  return unary_op(a, [](double x) { return x * phi_cdf(x); },
                  [](double x, double) { return phi_cdf(x) + x * phi_pdf(x); });
}

Tensor clamp_min(const Tensor& a, double lo) {
  return unary_op(a, [lo](double x) { return x < lo ? lo : x; },
                  [lo](double x, double) { return x < lo ? 0.0 : 1.0; });
}

// ---- structure ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: incompatible shapes " +
                                shape_str(a.shape()) + " and " + shape_str(b.shape()));
  int m = a.dim(0), k = a.dim(1), nn = b.dim(1);
  std::vector<double> out(static_cast<size_t>(m * nn), 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      double aip = av[static_cast<size_t>(i * k + p)];
      if (aip == 0.0) continue;
      for (int j = 0; j < nn; ++j)
        out[static_cast<size_t>(i * nn + j)] += aip * bv[static_cast<size_t>(p * nn + j)];
    }
  auto n = make_node({m, nn}, std::move(out), {a.node(), b.node()});
  n->backprop = [m, k, nn](TensorNode& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    ensure_grad(pa);
    ensure_grad(pb);
    // dA = dC * B^T ; dB = A^T * dC
    for (int i = 0; i < m; ++i)
      for (int p = 0; p < k; ++p) {
        double acc = 0.0;
        for (int j = 0; j < nn; ++j)
          acc += self.grad[static_cast<size_t>(i * nn + j)] *
                 pb.value[static_cast<size_t>(p * nn + j)];
        pa.grad[static_cast<size_t>(i * k + p)] += acc;
      }
    for (int p = 0; p < k; ++p)
      for (int j = 0; j < nn; ++j) {
        double acc = 0.0;
        for (int i = 0; i < m; ++i)
          acc += pa.value[static_cast<size_t>(i * k + p)] *
                 self.grad[static_cast<size_t>(i * nn + j)];
        pb.grad[static_cast<size_t>(p * nn + j)] += acc;
      }
  };
  return Tensor(n);
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw std::invalid_argument("transpose: rank-2 only");
  int m = a.dim(0), k = a.dim(1);
  std::vector<double> out(static_cast<size_t>(m * k));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < k; ++j)
      out[static_cast<size_t>(j * m + i)] = a.values()[static_cast<size_t>(i * k + j)];
  auto n = make_node({k, m}, std::move(out), {a.node()});
  n->backprop = [m, k](TensorNode& self) {
    auto& p = *self.parents[0];
    ensure_grad(p);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < k; ++j)
        p.grad[static_cast<size_t>(i * k + j)] += self.grad[static_cast<size_t>(j * m + i)];
  };
  return Tensor(n);
}

Tensor row(const Tensor& a, int i) {
  if (a.rank() != 2 || i < 0 || i >= a.dim(0))
    throw std::out_of_range("row: index " + std::to_string(i) + " in shape " +
                            shape_str(a.shape()));
  int k = a.dim(1);
  std::vector<double> out(a.values().begin() + static_cast<long>(i) * k,
                          a.values().begin() + static_cast<long>(i + 1) * k);
  auto n = make_node({k}, std::move(out), {a.node()});
  n->backprop = [i, k](TensorNode& self) {
    auto& p = *self.parents[0];
    ensure_grad(p);
    for (int j = 0; j < k; ++j)
      p.grad[static_cast<size_t>(i * k + j)] += self.grad[static_cast<size_t>(j)];
  };
  return Tensor(n);
}

Tensor cols(const Tensor& a, int c0, int c1) {
  bool vec = a.rank() == 1;
  int m = vec ? 1 : a.dim(0);
  int k = vec ? a.dim(0) : a.dim(1);
  if (c0 < 0 || c1 > k || c0 >= c1)
    throw std::out_of_range("cols: range [" + std::to_string(c0) + "," +
                            std::to_string(c1) + ") in shape " + shape_str(a.shape()));
  int w = c1 - c0;
  std::vector<double> out(static_cast<size_t>(m * w));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < w; ++j)
      out[static_cast<size_t>(i * w + j)] = a.values()[static_cast<size_t>(i * k + c0 + j)];
  Shape shape = vec ? Shape{w} : Shape{m, w};
  auto n = make_node(std::move(shape), std::move(out), {a.node()});
  n->backprop = [m, k, w, c0](TensorNode& self) {
    auto& p = *self.parents[0];
    ensure_grad(p);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j)
        p.grad[static_cast<size_t>(i * k + c0 + j)] += self.grad[static_cast<size_t>(i * w + j)];
  };
  return Tensor(n);
}

Tensor index(const Tensor& a, int i) {
  if (a.rank() != 1 || i < 0 || i >= a.dim(0))
    throw std::out_of_range("index: " + std::to_string(i) + " in shape " +
                            shape_str(a.shape()));
  auto n = make_node({}, {a.values()[static_cast<size_t>(i)]}, {a.node()});
  n->backprop = [i](TensorNode& self) {
    auto& p = *self.parents[0];
    ensure_grad(p);
    p.grad[static_cast<size_t>(i)] += self.grad[0];
  };
  return Tensor(n);
}

Tensor concat(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat: empty input");
  std::vector<double> out;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::vector<int> sizes;
  for (const auto& x : xs) {
    if (x.rank() != 1 && x.rank() != 0)
      throw std::invalid_argument("concat: 1-D or scalar tensors only");
    out.insert(out.end(), x.values().begin(), x.values().end());
    parents.push_back(x.node());
    sizes.push_back(x.size());
  }
  int total = static_cast<int>(out.size());
  auto n = make_node({total}, std::move(out), std::move(parents));
  n->backprop = [sizes](TensorNode& self) {
    size_t off = 0;
    for (size_t p = 0; p < self.parents.size(); ++p) {
      auto& par = *self.parents[p];
      ensure_grad(par);
      for (int j = 0; j < sizes[p]; ++j)
        par.grad[static_cast<size_t>(j)] += self.grad[off + static_cast<size_t>(j)];
      off += static_cast<size_t>(sizes[p]);
    }
  };
  return Tensor(n);
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_cols: empty input");
  int m = xs[0].dim(0);
  int total = 0;
  std::vector<int> widths;
  std::vector<std::shared_ptr<TensorNode>> parents;
  for (const auto& x : xs) {
    if (x.rank() != 2 || x.dim(0) != m)
      throw std::invalid_argument("concat_cols: row count mismatch");
    widths.push_back(x.dim(1));
    total += x.dim(1);
    parents.push_back(x.node());
  }
  std::vector<double> out(static_cast<size_t>(m * total));
  int coff = 0;
  for (size_t p = 0; p < xs.size(); ++p) {
    int w = widths[p];
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j)
        out[static_cast<size_t>(i * total + coff + j)] =
            xs[p].values()[static_cast<size_t>(i * w + j)];
    coff += w;
  }
  auto n = make_node({m, total}, std::move(out), std::move(parents));
  n->backprop = [m, total, widths](TensorNode& self) {
    int coff2 = 0;
    for (size_t p = 0; p < self.parents.size(); ++p) {
      auto& par = *self.parents[p];
      ensure_grad(par);
      int w = widths[p];
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < w; ++j)
          par.grad[static_cast<size_t>(i * w + j)] +=
              self.grad[static_cast<size_t>(i * total + coff2 + j)];
      coff2 += w;
    }
  };
  return Tensor(n);
}

Tensor stack_rows(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw std::invalid_argument("stack_rows: empty input");
  int k = xs[0].dim(0);
  std::vector<double> out;
  std::vector<std::shared_ptr<TensorNode>> parents;
  for (const auto& x : xs) {
    if (x.rank() != 1 || x.dim(0) != k)
      throw std::invalid_argument("stack_rows: width mismatch");
    out.insert(out.end(), x.values().begin(), x.values().end());
    parents.push_back(x.node());
  }
  int m = static_cast<int>(xs.size());
  auto n = make_node({m, k}, std::move(out), std::move(parents));
  n->backprop = [k](TensorNode& self) {
    for (size_t p = 0; p < self.parents.size(); ++p) {
      auto& par = *self.parents[p];
      ensure_grad(par);
      for (int j = 0; j < k; ++j)
        par.grad[static_cast<size_t>(j)] += self.grad[p * static_cast<size_t>(k) + static_cast<size_t>(j)];
    }
  };
  return Tensor(n);
}

Tensor add_rowvec(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 1 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("add_rowvec: " + shape_str(a.shape()) + " + " +
                                shape_str(b.shape()));
  int m = a.dim(0), k = a.dim(1);
  std::vector<double> out(a.values());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < k; ++j) out[static_cast<size_t>(i * k + j)] += b.values()[static_cast<size_t>(j)];
  auto n = make_node(a.shape(), std::move(out), {a.node(), b.node()});
  n->backprop = [m, k](TensorNode& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    ensure_grad(pa);
    ensure_grad(pb);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < k; ++j) {
        double g = self.grad[static_cast<size_t>(i * k + j)];
        pa.grad[static_cast<size_t>(i * k + j)] += g;
        pb.grad[static_cast<size_t>(j)] += g;
      }
  };
  return Tensor(n);
}

// ---- reductions ----

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  auto n = make_node({}, {s}, {a.node()});
  n->backprop = [](TensorNode& self) {
    auto& p = *self.parents[0];
    ensure_grad(p);
    for (auto& g : p.grad) g += self.grad[0];
  };
  return Tensor(n);
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / a.size()); }

Tensor mean_over_rows(const Tensor& a) {
  if (a.rank() != 2) throw std::invalid_argument("mean_over_rows: rank-2 only");
  int m = a.dim(0), k = a.dim(1);
  std::vector<double> out(static_cast<size_t>(k), 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < k; ++j) out[static_cast<size_t>(j)] += a.values()[static_cast<size_t>(i * k + j)];
  for (auto& v : out) v /= m;
  auto n = make_node({k}, std::move(out), {a.node()});
  n->backprop = [m, k](TensorNode& self) {
    auto& p = *self.parents[0];
    ensure_grad(p);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < k; ++j)
        p.grad[static_cast<size_t>(i * k + j)] += self.grad[static_cast<size_t>(j)] / m;
  };
  return Tensor(n);
}

Tensor max_over_rows(const Tensor& a) {
  if (a.rank() != 2) throw std::invalid_argument("max_over_rows: rank-2 only");
  int m = a.dim(0), k = a.dim(1);
  std::vector<double> out(static_cast<size_t>(k));
  std::vector<int> argmax(static_cast<size_t>(k), 0);
  for (int j = 0; j < k; ++j) {
    double best = a.values()[static_cast<size_t>(j)];
    int bi = 0;
    for (int i = 1; i < m; ++i) {
      double v = a.values()[static_cast<size_t>(i * k + j)];
      if (v > best) {
        best = v;
        bi = i;
      }
    }
    out[static_cast<size_t>(j)] = best;
    argmax[static_cast<size_t>(j)] = bi;
  }
  auto n = make_node({k}, std::move(out), {a.node()});
  n->backprop = [k, argmax](TensorNode& self) {
    auto& p = *self.parents[0];
    ensure_grad(p);
    for (int j = 0; j < k; ++j)
      p.grad[static_cast<size_t>(argmax[static_cast<size_t>(j)] * k + j)] +=
          self.grad[static_cast<size_t>(j)];
  };
  return Tensor(n);
}

Tensor logsumexp(const Tensor& a) {
  if (a.rank() != 1) throw std::invalid_argument("logsumexp: 1-D only");
  double m = -std::numeric_limits<double>::infinity();
  for (double v : a.values()) m = std::max(m, v);
  double s = 0.0;
  for (double v : a.values()) s += std::exp(v - m);
  double lse = m + std::log(s);
  auto n = make_node({}, {lse}, {a.node()});
  n->backprop = [lse](TensorNode& self) {
    auto& p = *self.parents[0];
    ensure_grad(p);
    for (size_t i = 0; i < p.value.size(); ++i)
      p.grad[i] += self.grad[0] * std::exp(p.value[i] - lse);
  };
  return Tensor(n);
}

// ---- softmax ----

Tensor masked_softmax(const Tensor& x, const std::vector<uint8_t>& mask, int axis) {
  if (x.rank() != 1 && x.rank() != 2)
    throw std::invalid_argument("masked_softmax: 1-D or 2-D only");
  if (!mask.empty() && mask.size() != x.values().size())
    throw std::invalid_argument("masked_softmax: mask size mismatch");
  int m = x.rank() == 2 ? x.dim(0) : 1;
  int k = x.rank() == 2 ? x.dim(1) : x.dim(0);
  if (x.rank() == 1) axis = 1;
  if (axis != 0 && axis != 1) throw std::invalid_argument("masked_softmax: bad axis");

  // slices: along rows (axis=1) or columns (axis=0)
  int nslices = axis == 1 ? m : k;
  int slice_len = axis == 1 ? k : m;
  auto at = [axis, k](int s, int t) { return axis == 1 ? s * k + t : t * k + s; };

  std::vector<double> out(x.values().size(), 0.0);
  for (int s = 0; s < nslices; ++s) {
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (int t = 0; t < slice_len; ++t) {
      size_t i = static_cast<size_t>(at(s, t));
      if (mask.empty() || mask[i]) {
        any = true;
        mx = std::max(mx, x.values()[i]);
      }
    }
    if (!any)
      throw std::invalid_argument("masked_softmax: fully masked slice " + std::to_string(s));
    double z = 0.0;
    for (int t = 0; t < slice_len; ++t) {
      size_t i = static_cast<size_t>(at(s, t));
      if (mask.empty() || mask[i]) z += std::exp(x.values()[i] - mx);
    }
    for (int t = 0; t < slice_len; ++t) {
      size_t i = static_cast<size_t>(at(s, t));
      if (mask.empty() || mask[i]) out[i] = std::exp(x.values()[i] - mx) / z;
    }
  }
  auto n = make_node(x.shape(), std::move(out), {x.node()});
  n->backprop = [mask, nslices, slice_len, at](TensorNode& self) {
    auto& p = *self.parents[0];
    ensure_grad(p);
    for (int s = 0; s < nslices; ++s) {
      double dot = 0.0;
      for (int t = 0; t < slice_len; ++t) {
        size_t i = static_cast<size_t>(at(s, t));
        dot += self.value[i] * self.grad[i];
      }
      for (int t = 0; t < slice_len; ++t) {
        size_t i = static_cast<size_t>(at(s, t));
        if (mask.empty() || mask[i])
          p.grad[i] += self.value[i] * (self.grad[i] - dot);
      }
    }
  };
  return Tensor(n);
}

Tensor softmax(const Tensor& x, int axis) { return masked_softmax(x, {}, axis); }

// ---- dropout ----

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("dropout: rate " + std::to_string(rate) +
                                " outside [0, 1)");
  if (!training || rate == 0.0) return x;
  double keep = 1.0 - rate;
  std::vector<double> mask(x.values().size());
  for (auto& v : mask) v = rng.uniform() < rate ? 0.0 : 1.0 / keep;
  std::vector<double> out(x.values());
  for (size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  auto n = make_node(x.shape(), std::move(out), {x.node()});
  n->backprop = [mask](TensorNode& self) {
    auto& p = *self.parents[0];
    ensure_grad(p);
    for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * mask[i];
  };
  return Tensor(n);
}

// ---- spans ----

std::vector<std::pair<int, int>> enumerate_spans(int n, int max_len) {
  std::vector<std::pair<int, int>> spans;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n && j - i < max_len; ++j) spans.emplace_back(i, j);
  return spans;
}

Tensor span_logits(const Tensor& alpha, const Tensor& beta, int max_len) {
  if (alpha.rank() != 1 || beta.rank() != 1 || alpha.dim(0) != beta.dim(0))
    throw std::invalid_argument("span_logits: alpha/beta must be 1-D of equal length");
  auto spans = enumerate_spans(alpha.dim(0), max_len);
  std::vector<double> out(spans.size());
  for (size_t s = 0; s < spans.size(); ++s)
    out[s] = alpha.values()[static_cast<size_t>(spans[s].first)] +
             beta.values()[static_cast<size_t>(spans[s].second)];
  auto n = make_node({static_cast<int>(spans.size())}, std::move(out),
                     {alpha.node(), beta.node()});
  n->backprop = [spans](TensorNode& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    ensure_grad(pa);
    ensure_grad(pb);
    for (size_t s = 0; s < spans.size(); ++s) {
      pa.grad[static_cast<size_t>(spans[s].first)] += self.grad[s];
      pb.grad[static_cast<size_t>(spans[s].second)] += self.grad[s];
    }
  };
  return Tensor(n);
}

// ---- embedding ----

Tensor gather_rows(const Tensor& table, const std::vector<int>& idx) {
  if (table.rank() != 2) throw std::invalid_argument("gather_rows: rank-2 table");
  int k = table.dim(1);
  std::vector<double> out;
  out.reserve(idx.size() * static_cast<size_t>(k));
  for (int i : idx) {
    if (i < 0 || i >= table.dim(0))
      throw std::out_of_range("gather_rows: index " + std::to_string(i) +
                              " out of range for " + std::to_string(table.dim(0)) + " rows");
    out.insert(out.end(), table.values().begin() + static_cast<long>(i) * k,
               table.values().begin() + static_cast<long>(i + 1) * k);
  }
  auto n = make_node({static_cast<int>(idx.size()), k}, std::move(out), {table.node()});
  n->backprop = [idx, k](TensorNode& self) {
    auto& p = *self.parents[0];
    ensure_grad(p);
    for (size_t r = 0; r < idx.size(); ++r)
      for (int j = 0; j < k; ++j)
        p.grad[static_cast<size_t>(idx[r] * k + j)] +=
            self.grad[r * static_cast<size_t>(k) + static_cast<size_t>(j)];
  };
  return Tensor(n);
}

// ---- layer norm ----

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() != 2 || gain.rank() != 1 || bias.rank() != 1 ||
      gain.dim(0) != x.dim(1) || bias.dim(0) != x.dim(1))
    throw std::invalid_argument("layer_norm: shape mismatch");
  int m = x.dim(0), k = x.dim(1);
  std::vector<double> out(static_cast<size_t>(m * k));
  std::vector<double> xhat(static_cast<size_t>(m * k));
  std::vector<double> inv_std(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    double mu = 0.0;
    for (int j = 0; j < k; ++j) mu += x.values()[static_cast<size_t>(i * k + j)];
    mu /= k;
    double var = 0.0;
    for (int j = 0; j < k; ++j) {
      double d = x.values()[static_cast<size_t>(i * k + j)] - mu;
      var += d * d;
    }
    var /= k;
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(i)] = is;
    for (int j = 0; j < k; ++j) {
      double h = (x.values()[static_cast<size_t>(i * k + j)] - mu) * is;
      xhat[static_cast<size_t>(i * k + j)] = h;
      out[static_cast<size_t>(i * k + j)] =
          gain.values()[static_cast<size_t>(j)] * h + bias.values()[static_cast<size_t>(j)];
    }
  }
  auto n = make_node({m, k}, std::move(out), {x.node(), gain.node(), bias.node()});
  n->backprop = [m, k, xhat, inv_std](TensorNode& self) {
    auto& px = *self.parents[0];
    auto& pg = *self.parents[1];
    auto& pb = *self.parents[2];
    ensure_grad(px);
    ensure_grad(pg);
    ensure_grad(pb);
    for (int i = 0; i < m; ++i) {
      double mean_gdy = 0.0, mean_gdy_xhat = 0.0;
      for (int j = 0; j < k; ++j) {
        size_t ij = static_cast<size_t>(i * k + j);
        double gdy = pg.value[static_cast<size_t>(j)] * self.grad[ij];
        mean_gdy += gdy;
        mean_gdy_xhat += gdy * xhat[ij];
      }
      mean_gdy /= k;
      mean_gdy_xhat /= k;
      for (int j = 0; j < k; ++j) {
        size_t ij = static_cast<size_t>(i * k + j);
        double gdy = pg.value[static_cast<size_t>(j)] * self.grad[ij];
        px.grad[ij] += (gdy - mean_gdy - xhat[ij] * mean_gdy_xhat) * inv_std[static_cast<size_t>(i)];
        pg.grad[static_cast<size_t>(j)] += self.grad[ij] * xhat[ij];
        pb.grad[static_cast<size_t>(j)] += self.grad[ij];
      }
    }
  };
  return Tensor(n);
}

// ---- backward ----

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw std::invalid_argument("backward: seed must be a scalar tensor");
  // iterative post-order topological sort
  std::vector<TensorNode*> topo;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, child] = stack.back();
    if (child < node->parents.size()) {
      TensorNode* p = node->parents[child++].get();
      if (visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }
  for (TensorNode* n : topo) n->grad.assign(n->value.size(), 0.0);
  loss.node()->grad[0] = 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it)
    if ((*it)->backprop && (*it)->requires_grad) (*it)->backprop(**it);
}

// ---- parameters ----

Tensor ParamStore::add(const std::string& name, Tensor t) {
  if (has(name)) throw std::invalid_argument("ParamStore: duplicate name " + name);
  t.node()->requires_grad = true;
  items_.emplace_back(name, t);
  return t;
}

Tensor ParamStore::get(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return t;
  throw std::out_of_range("ParamStore: no parameter named " + name);
}

bool ParamStore::has(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return true;
  return false;
}

void ParamStore::zero_grad() {
  for (auto& [n, t] : items_) t.node()->grad.assign(t.node()->value.size(), 0.0);
}

Tensor glorot(Shape shape, int fan_in, int fan_out, Rng& rng) {
  double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.raw()) v = rng.uniform(-limit, limit);
  return t;
}

Adam::Adam(ParamStore& params, AdamConfig cfg) : params_(params), cfg_(cfg) {
  for (const auto& [name, t] : params_.items()) {
    m_.emplace_back(t.values().size(), 0.0);
    v_.emplace_back(t.values().size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  size_t slot = 0;
  for (const auto& [name, t] : params_.items()) {
    auto node = t.node();
    if (node->grad.size() != node->value.size())
      throw std::runtime_error("adam_step: parameter " + name + " has no gradient");
    auto& m = m_[slot];
    auto& v = v_[slot];
    for (size_t i = 0; i < node->value.size(); ++i) {
      double g = node->grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      node->value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    ++slot;
  }
}

}  // namespace rtv
