#pragma once

#include "slc/nn.hpp"
#include "slc/tensor.hpp"

#include <cmath>
#include <random>

namespace slc::test {

template <typename S = double>
Tensor<S> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                        bool requires_grad = false) {
  std::uniform_real_distribution<double> u(lo, hi);
  Array<S> v(numel(shape));
  for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<S>(u(rng));
  return Tensor<S>(std::move(shape), std::move(v), requires_grad);
}

/// Largest absolute entrywise difference; infinite on a size mismatch.
template <typename S>
double max_abs_diff(const Array<S>& a, const Array<S>& b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0;
  for (Index i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

/// Lets eval-mode batchnorm run on its initial statistics (mean 0, var 1).
template <typename S>
void mark_stats_ready(Module<S>& m) {
  for (auto& t : m.state()) {
    const auto& n = t.name;
    if (n.size() >= 15 && n.compare(n.size() - 15, 15, "batches_tracked") == 0) t.tensor.value().setConstant(S(1));
  }
}

/// NCHW flat index.
inline Index at4(const Shape& s, Index n, Index c, Index h, Index w) {
  return ((n * s[1] + c) * s[2] + h) * s[3] + w;
}

}  // namespace slc::test
