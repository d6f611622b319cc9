#include "slc/gradcheck.hpp"

#include "slc/arfe.hpp"
#include "slc/fcsm.hpp"
#include "slc/losses.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace slc {

double gradient_error(const std::function<Tensor<double>()>& f, const std::vector<Tensor<double>>& inputs,
                      double step) {
  for (const auto& t : inputs) t.node()->grad.resize(0);
  Tensor<double> y = f();
  y.backward();

  double diff = 0, norm_a = 0, norm_n = 0;
  NoGradGuard no_grad;
  for (Tensor<double> t : inputs) {
    const Array<double> analytic = t.has_grad() ? t.grad() : Array<double>(Array<double>::Zero(t.size()));
    Array<double>& v = t.value();
    for (Index i = 0; i < v.size(); ++i) {
      const double saved = v[i];
      v[i] = saved + step;
      const double up = f().item();
      v[i] = saved - step;
      const double down = f().item();
      v[i] = saved;
      const double numeric = (up - down) / (2 * step);
      diff += (analytic[i] - numeric) * (analytic[i] - numeric);
      norm_a += analytic[i] * analytic[i];
      norm_n += numeric * numeric;
    }
  }
  const double scale = std::sqrt(std::max(norm_a, norm_n));
  return scale < 1e-12 ? std::sqrt(diff) : std::sqrt(diff) / scale;
}

namespace {

using Rng = std::mt19937_64;
using T = Tensor<double>;

T uniform(Shape shape, Rng& rng, bool grad = true, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Array<double> v(numel(shape));
  for (auto& x : v) x = u(rng);
  return T(std::move(shape), std::move(v), grad);
}

int pick(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

// Scalarizes an op output with fixed random weights.
T project(const T& y, const T& weights) { return sum(y * weights); }

std::vector<LabelMap> random_labels(Index n, Index h, Index w, int classes, double p_ignore, Rng& rng) {
  std::bernoulli_distribution ignore(p_ignore);
  std::vector<LabelMap> out;
  for (Index b = 0; b < n; ++b) {
    LabelMap m(h, w);
    for (auto& id : m.ids) id = ignore(rng) ? kIgnoreId : static_cast<std::uint8_t>(pick(rng, 0, classes - 1));
    out.push_back(m);
  }
  return out;
}

template <typename M>
std::vector<T> with_params(std::vector<T> inputs, M& module) {
  for (auto& p : module.parameters()) inputs.push_back(p.tensor);
  return inputs;
}

using Case = std::function<double(Rng&)>;

double case_conv2d(Rng& rng) {
  while (true) {
    const int k = pick(rng, 0, 1) ? 3 : 1, stride = pick(rng, 1, 2), pad = pick(rng, 0, 1), dil = pick(rng, 1, 2);
    const Index h = pick(rng, 4, 6), w = pick(rng, 4, 6);
    if (h + 2 * pad - dil * (k - 1) < 1 || w + 2 * pad - dil * (k - 1) < 1) continue;
    T x = uniform({2, 2, h, w}, rng), kern = uniform({3, 2, k, k}, rng), bias = uniform({3}, rng);
    const T out = conv2d(x, kern, bias, stride, pad, dil);
    const T r = uniform(out.shape(), rng, false);
    return gradient_error([&] { return project(conv2d(x, kern, bias, stride, pad, dil), r); }, {x, kern, bias});
  }
}

double case_conv_transpose2d(Rng& rng) {
  const int k = pick(rng, 2, 3), stride = pick(rng, 1, 2);
  T x = uniform({1, 2, 3, 3}, rng), kern = uniform({2, 3, k, k}, rng), bias = uniform({3}, rng);
  const T r = uniform(conv_transpose2d(x, kern, bias, stride).shape(), rng, false);
  return gradient_error([&] { return project(conv_transpose2d(x, kern, bias, stride), r); }, {x, kern, bias});
}

double case_matmul(Rng& rng) {
  const Index m = pick(rng, 2, 5), k = pick(rng, 2, 5), n = pick(rng, 2, 5);
  T a = uniform({m, k}, rng), b = uniform({k, n}, rng);
  const T r = uniform({m, n}, rng, false);
  return gradient_error([&] { return project(matmul(a, b), r); }, {a, b});
}

double case_softmax(Rng& rng) {
  const int axis = pick(rng, 0, 2);
  T x = uniform({2, 3, 4}, rng);
  const T r = uniform(x.shape(), rng, false);
  return gradient_error([&] { return project(softmax(x, axis), r); }, {x});
}

double case_sigmoid(Rng& rng) {
  T x = uniform({2, 3, 4}, rng);
  const T r = uniform(x.shape(), rng, false);
  return gradient_error([&] { return project(sigmoid(x), r); }, {x});
}

double case_relu(Rng& rng) {
  // Magnitudes kept away from the kink at 0.
  T x = uniform({2, 3, 4}, rng, true, 0.1, 1.0);
  std::bernoulli_distribution flip(0.5);
  for (auto& v : x.value()) v = flip(rng) ? -v : v;
  const T r = uniform(x.shape(), rng, false);
  return gradient_error([&] { return project(relu(x), r); }, {x});
}

double case_batchnorm(Rng& rng) {
  T x = uniform({2, 3, 3, 3}, rng), gamma = uniform({3}, rng), beta = uniform({3}, rng);
  const T r = uniform(x.shape(), rng, false);
  BatchNormStats<double> stats(3);
  return gradient_error([&] { return project(batch_norm2d(x, gamma, beta, stats, true), r); }, {x, gamma, beta});
}

double case_pooling(Rng& rng) {
  const int factor = pick(rng, 2, 3);
  T x = uniform({2, 2, 5, 7}, rng);
  const T r1 = uniform(avg_pool2d(x, factor).shape(), rng, false);
  const T r2 = uniform({2, 2, 1, 1}, rng, false);
  return gradient_error([&] { return project(avg_pool2d(x, factor), r1) + project(global_avg_pool(x), r2); }, {x});
}

double case_broadcast(Rng& rng) {
  T a = uniform({2, 3, 3, 4}, rng), b = uniform({2, 3, 1, 1}, rng), c = uniform({1, 3, 3, 4}, rng);
  const T r = uniform(a.shape(), rng, false);
  return gradient_error([&] { return project(a * b + c - a, r); }, {a, b, c});
}

double case_resample(Rng& rng) {
  T a = uniform({1, 2, 3, 3}, rng), b = uniform({1, 3, 5, 5}, rng);
  const T r = uniform({1, 5, 5, 5}, rng, false);
  return gradient_error([&] { return project(concat<double>({center_crop(nearest_upsample(a, 2), 5, 5), b}), r); },
                        {a, b});
}

double case_row_attention(Rng& rng) {
  T q = uniform({2, 3, 3, 4}, rng), k = uniform({2, 3, 3, 4}, rng), v = uniform({2, 3, 3, 4}, rng);
  const T r1 = uniform(v.shape(), rng, false), r2 = uniform({2, 3, 4, 4}, rng, false);
  return gradient_error(
      [&] {
        auto [out, s] = row_attention(q, k, v);
        return project(out, r1) + project(s, r2);
      },
      {q, k, v});
}

double case_col_attention(Rng& rng) {
  T q = uniform({2, 3, 3, 4}, rng), k = uniform({2, 3, 3, 4}, rng), v = uniform({2, 3, 3, 4}, rng);
  const T r1 = uniform(v.shape(), rng, false), r2 = uniform({2, 4, 3, 3}, rng, false);
  return gradient_error(
      [&] {
        auto [out, s] = col_attention(q, k, v);
        return project(out, r1) + project(s, r2);
      },
      {q, k, v});
}

double case_cross_entropy(Rng& rng) {
  T x = uniform({2, 3, 3, 4}, rng, true, -2, 2);
  const auto labels = random_labels(2, 3, 4, 3, 0.2, rng);
  return gradient_error([&] { return cross_entropy(x, std::span<const LabelMap>(labels)).value; }, {x});
}

double case_l1(Rng& rng) {
  T a = uniform({2, 3, 4}, rng), b = uniform({2, 3, 4}, rng);
  // Keep every |a - b| away from the kink.
  for (Index i = 0; i < a.size(); ++i) {
    if (std::abs(a.value()[i] - b.value()[i]) < 0.05) a.value()[i] = b.value()[i] + 0.1;
  }
  return gradient_error([&] { return l1_mean(a, b).value; }, {a, b});
}

// True when two per-class errors lie within `gap` of each other, where a
// finite-difference probe could reorder the sort. Such draws are skipped.
bool lovasz_ties(const T& probs, const std::vector<LabelMap>& labels, double gap) {
  const Index n = probs.dim(0), k = probs.dim(1), hw = probs.dim(2) * probs.dim(3);
  for (Index b = 0; b < n; ++b) {
    for (Index c = 0; c < k; ++c) {
      std::vector<double> err;
      for (Index p = 0; p < hw; ++p) {
        const auto id = labels[static_cast<std::size_t>(b)].ids[static_cast<std::size_t>(p)];
        if (id == kIgnoreId) continue;
        err.push_back(std::abs((id == c ? 1.0 : 0.0) - probs.data()[(b * k + c) * hw + p]));
      }
      std::sort(err.begin(), err.end());
      for (std::size_t i = 1; i < err.size(); ++i) {
        if (err[i] - err[i - 1] < gap) return true;
      }
    }
  }
  return false;
}

double case_lovasz(Rng& rng) {
  while (true) {
    T x = uniform({2, 3, 2, 3}, rng, true, -2, 2);
    const auto labels = random_labels(2, 2, 3, 3, 0.15, rng);
    if (lovasz_ties(softmax(x.detach(), 1), labels, 1e-3)) continue;
    return gradient_error([&] { return lovasz_softmax(softmax(x, 1), std::span<const LabelMap>(labels)).value; }, {x});
  }
}

double case_fcsm(Rng& rng) {
  const Index c = 3, h = 4, w = 5;
  FcsmBlock<double> block(c, rng);
  for (auto& p : block.parameters()) {
    for (auto& v : p.tensor.value()) v += std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
  }
  T x = uniform({2, c, h, w}, rng);
  const auto labels = random_labels(2, h, w, 2, 0.1, rng);
  std::vector<CorrelationTarget<double>> targets;
  for (const auto& l : labels) targets.push_back(build_targets_for_scale<double>(l, 1));
  const T r = uniform({2, c, h, w}, rng, false);
  return gradient_error(
      [&] {
        FcsmOutput<double> out = block.forward(x);
        return fcsm_loss(out.scores, std::span<const CorrelationTarget<double>>(targets)).value + project(out.features, r);
      },
      with_params({x}, block));
}

double case_arfe(Rng& rng) {
  ArfeBlock<double> block(3, 3, rng, 1, 2);
  for (auto& p : block.parameters()) {
    for (auto& v : p.tensor.value()) v += std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
  }
  T x = uniform({2, 3, 5, 5}, rng);
  const T r = uniform({2, 3, 5, 5}, rng, false);
  return gradient_error([&] { return project(block.forward(x).features, r); }, with_params({x}, block));
}

}  // namespace

std::vector<GradcheckResult> run_gradcheck_suite(std::uint64_t seed, int instances) {
  const std::vector<std::tuple<std::string, double, Case>> cases{
      {"conv2d", 1e-4, case_conv2d},
      {"conv_transpose2d", 1e-4, case_conv_transpose2d},
      {"matmul", 1e-4, case_matmul},
      {"softmax", 1e-4, case_softmax},
      {"sigmoid", 1e-4, case_sigmoid},
      {"relu", 1e-4, case_relu},
      {"batchnorm2d", 1e-4, case_batchnorm},
      {"avg_pool2d+global_avg_pool", 1e-4, case_pooling},
      {"broadcast add/sub/mul", 1e-4, case_broadcast},
      {"upsample+crop+concat", 1e-4, case_resample},
      {"row_attention", 1e-4, case_row_attention},
      {"col_attention", 1e-4, case_col_attention},
      {"cross_entropy", 1e-4, case_cross_entropy},
      {"l1_mean", 1e-4, case_l1},
      {"lovasz_softmax", 1e-3, case_lovasz},
      {"fcsm block + fcsm_loss", 1e-4, case_fcsm},
      {"arfe block", 1e-4, case_arfe},
  };
  std::vector<GradcheckResult> out;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& [name, tol, run] = cases[i];
    Rng rng(seed * 1000003ULL + i);
    GradcheckResult r{name, instances, 0.0, tol};
    for (int k = 0; k < instances; ++k) r.max_error = std::max(r.max_error, run(rng));
    out.push_back(r);
  }
  return out;
}

}  // namespace slc
