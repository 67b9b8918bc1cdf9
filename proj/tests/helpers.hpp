#pragma once

// Shared test utilities: finite-difference gradient checking and small
// random-tensor builders. Checks run in the 64-bit build only.

#include "vp/rng.hpp"
#include "vp/tensor.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace vptest {

inline vp::Tensor random_tensor(std::vector<int64_t> shape, vp::Rng& rng,
                                bool requires_grad = true, double lo = -1.0,
                                double hi = 1.0) {
  vp::Tensor t = vp::Tensor::zeros(shape, requires_grad);
  for (auto& v : *t.data) v = vp::real(lo + (hi - lo) * rng.uniform());
  return t;
}

// Central finite differences against the analytic gradient of a scalar loss.
// Uses the fourth-order stencil (x±h, x±2h) so the truncation error stays
// below the 1e-4 tolerance even through deep composite paths at h=1e-3.
// `make_loss` must rebuild the graph from the leaves' current data (backward
// consumes the tape). Samples up to `coords` coordinates per leaf.
inline void fd_check(const std::function<vp::Tensor()>& make_loss,
                     std::vector<vp::Tensor*> leaves, vp::Rng& rng,
                     int coords = 32, double h = 1e-3, double tol = 1e-4) {
  for (vp::Tensor* leaf : leaves) leaf->zero_grad();
  vp::Tensor loss = make_loss();
  vp::backward(loss);

  for (vp::Tensor* leaf : leaves) {
    REQUIRE(leaf->grad != nullptr);
    const std::size_t n = leaf->numel();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    rng.shuffle(idx);
    const std::size_t take = std::min<std::size_t>(std::size_t(coords), n);
    for (std::size_t k = 0; k < take; ++k) {
      const std::size_t i = idx[k];
      const vp::real saved = (*leaf->data)[i];
      auto eval = [&](double delta) {
        (*leaf->data)[i] = saved + vp::real(delta);
        const double v = make_loss().item();
        (*leaf->data)[i] = saved;
        return v;
      };
      const double numeric =
          (8.0 * (eval(h) - eval(-h)) - (eval(2 * h) - eval(-2 * h))) / (12.0 * h);
      const double analytic = (*leaf->grad)[i];
      const double denom = std::max(std::abs(numeric), 1e-8);
      const double rel = std::abs(analytic - numeric) / denom;
      CAPTURE(i);
      CAPTURE(analytic);
      CAPTURE(numeric);
      CHECK(rel < tol);
    }
  }
}

inline double max_abs_diff(const vp::Tensor& a, const vp::Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(double((*a.data)[i]) - double((*b.data)[i])));
  return m;
}

}  // namespace vptest
