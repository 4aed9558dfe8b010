#pragma once

// Finite-difference gradient oracle shared by the unit and acceptance tests.
// Analytic gradients from backward() are compared against central differences
// with step 1e-5 on randomly sampled parameter coordinates.

#include <cmath>
#include <functional>
#include <vector>

#include "rtv/rng.hpp"
#include "rtv/tensor.hpp"

namespace rtvtest {

inline double grad_rel_err(double analytic, double numeric) {
  double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
  return std::fabs(analytic - numeric) / denom;
}

// `make_loss` must rebuild the graph from the current leaf values on every
// call (all rtv ops read values at construction time). Returns the max
// relative error over up to `n_coords` sampled coordinates per leaf.
inline double max_grad_rel_err(const std::function<rtv::Tensor()>& make_loss,
                               const std::vector<rtv::Tensor>& leaves,
                               int n_coords, rtv::Rng& rng, double step = 1e-5) {
  rtv::Tensor loss = make_loss();
  rtv::backward(loss);
  std::vector<std::vector<double>> grads;
  for (const auto& leaf : leaves) grads.push_back(leaf.grad());

  double worst = 0.0;
  for (size_t l = 0; l < leaves.size(); ++l) {
    rtv::Tensor leaf = leaves[l];
    size_t n = leaf.values().size();
    int samples = std::min<int>(n_coords, static_cast<int>(n));
    for (int s = 0; s < samples; ++s) {
      size_t i = samples == static_cast<int>(n) ? static_cast<size_t>(s)
                                                : rng.index(n);
      double saved = leaf.raw()[i];
      leaf.raw()[i] = saved + step;
      double up = make_loss().item();
      leaf.raw()[i] = saved - step;
      double down = make_loss().item();
      leaf.raw()[i] = saved;
      double numeric = (up - down) / (2.0 * step);
      worst = std::max(worst, grad_rel_err(grads[l][i], numeric));
    }
  }
  return worst;
}

inline std::vector<rtv::Tensor> store_tensors(const rtv::ParamStore& params) {
  std::vector<rtv::Tensor> out;
  for (const auto& [name, t] : params.items()) out.push_back(t);
  return out;
}

}  // namespace rtvtest
