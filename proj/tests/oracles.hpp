#pragma once

// Independent reference implementations: plain loops, no shared code with the
// library beyond the tensor container.

#include "slc/consistency.hpp"
#include "slc/metrics.hpp"
#include "slc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace slc::oracle {

/// Direct sliding-window convolution; returns values and fills `out_shape`.
template <typename S>
std::vector<double> conv2d(const Tensor<S>& x, const Tensor<S>& k, const Tensor<S>& bias, int stride, int pad,
                           int dil, Shape& out_shape) {
  const Index n = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index co = k.dim(0), ks = k.dim(2);
  const Index oh = (h + 2 * pad - dil * (ks - 1) - 1) / stride + 1;
  const Index ow = (w + 2 * pad - dil * (ks - 1) - 1) / stride + 1;
  out_shape = {n, co, oh, ow};
  std::vector<double> out(static_cast<std::size_t>(n * co * oh * ow), 0.0);
  for (Index b = 0; b < n; ++b)
    for (Index o = 0; o < co; ++o)
      for (Index y = 0; y < oh; ++y)
        for (Index xx = 0; xx < ow; ++xx) {
          double acc = bias.defined() ? double(bias.value()[o]) : 0.0;
          for (Index i = 0; i < ci; ++i)
            for (Index ky = 0; ky < ks; ++ky)
              for (Index kx = 0; kx < ks; ++kx) {
                const Index sy = y * stride - pad + ky * dil, sx = xx * stride - pad + kx * dil;
                if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                acc += double(x.value()[((b * ci + i) * h + sy) * w + sx]) *
                       double(k.value()[((o * ci + i) * ks + ky) * ks + kx]);
              }
          out[static_cast<std::size_t>(((b * co + o) * oh + y) * ow + xx)] = acc;
        }
  return out;
}

/// Scatter form of the transposed convolution with an I x O x K x K kernel.
template <typename S>
std::vector<double> conv_transpose2d(const Tensor<S>& x, const Tensor<S>& k, const Tensor<S>& bias, int stride,
                                     int pad, Shape& out_shape) {
  const Index n = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index co = k.dim(1), ks = k.dim(2);
  const Index oh = (h - 1) * stride - 2 * pad + ks, ow = (w - 1) * stride - 2 * pad + ks;
  out_shape = {n, co, oh, ow};
  std::vector<double> out(static_cast<std::size_t>(n * co * oh * ow), 0.0);
  for (Index b = 0; b < n; ++b)
    for (Index i = 0; i < ci; ++i)
      for (Index y = 0; y < h; ++y)
        for (Index xx = 0; xx < w; ++xx)
          for (Index o = 0; o < co; ++o)
            for (Index ky = 0; ky < ks; ++ky)
              for (Index kx = 0; kx < ks; ++kx) {
                const Index ty = y * stride - pad + ky, tx = xx * stride - pad + kx;
                if (ty < 0 || ty >= oh || tx < 0 || tx >= ow) continue;
                out[static_cast<std::size_t>(((b * co + o) * oh + ty) * ow + tx)] +=
                    double(x.value()[((b * ci + i) * h + y) * w + xx]) *
                    double(k.value()[((i * co + o) * ks + ky) * ks + kx]);
              }
  if (bias.defined()) {
    for (Index b = 0; b < n; ++b)
      for (Index o = 0; o < co; ++o)
        for (Index p = 0; p < oh * ow; ++p) out[static_cast<std::size_t>((b * co + o) * oh * ow + p)] += bias.value()[o];
  }
  return out;
}

/// Attention along each row (`along_rows`) or column, one line at a time:
/// A = softmax(scale * Q^T K) per line, out = V A^T. Also returns the
/// stacked A matrices in (n, line, i, j) order.
template <typename S>
std::vector<double> axial_attention(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v, bool along_rows,
                                    double scale, std::vector<double>& scores) {
  const Index n = q.dim(0), c = q.dim(1), h = q.dim(2), w = q.dim(3), cv = v.dim(1);
  const Index lines = along_rows ? h : w, len = along_rows ? w : h;
  auto idx = [&](Index ch, Index line, Index pos, Index channels, Index b) {
    const Index y = along_rows ? line : pos, x = along_rows ? pos : line;
    return ((b * channels + ch) * h + y) * w + x;
  };
  std::vector<double> out(static_cast<std::size_t>(n * cv * h * w), 0.0);
  scores.assign(static_cast<std::size_t>(n * lines * len * len), 0.0);
  for (Index b = 0; b < n; ++b)
    for (Index l = 0; l < lines; ++l) {
      std::vector<double> a(static_cast<std::size_t>(len * len));
      for (Index i = 0; i < len; ++i) {
        double mx = -INFINITY;
        for (Index j = 0; j < len; ++j) {
          double dot = 0;
          for (Index ch = 0; ch < c; ++ch) dot += double(q.value()[idx(ch, l, i, c, b)]) * double(k.value()[idx(ch, l, j, c, b)]);
          a[static_cast<std::size_t>(i * len + j)] = dot * scale;
          mx = std::max(mx, dot * scale);
        }
        double z = 0;
        for (Index j = 0; j < len; ++j) z += std::exp(a[static_cast<std::size_t>(i * len + j)] - mx);
        for (Index j = 0; j < len; ++j) {
          auto& e = a[static_cast<std::size_t>(i * len + j)];
          e = std::exp(e - mx) / z;
          scores[static_cast<std::size_t>(((b * lines + l) * len + i) * len + j)] = e;
        }
      }
      for (Index ch = 0; ch < cv; ++ch)
        for (Index i = 0; i < len; ++i) {
          double acc = 0;
          for (Index j = 0; j < len; ++j) acc += a[static_cast<std::size_t>(i * len + j)] * double(v.value()[idx(ch, l, j, cv, b)]);
          out[static_cast<std::size_t>(idx(ch, l, i, cv, b))] = acc;
        }
    }
  return out;
}

/// Target matrix for one line by pairwise comparison: entry (i, j) is valid
/// when neither pixel is ignored; valid rows are exp(same) / sum over valid
/// j of exp(same), or same / count(same) for the uniform variant.
inline void consistency(const std::vector<std::uint8_t>& line, std::uint8_t ignore, bool uniform,
                        std::vector<double>& values, std::vector<double>& valid) {
  const std::size_t l = line.size();
  values.assign(l * l, 0.0);
  valid.assign(l * l, 0.0);
  for (std::size_t i = 0; i < l; ++i) {
    if (line[i] == ignore) continue;
    double z = 0;
    for (std::size_t j = 0; j < l; ++j) {
      if (line[j] == ignore) continue;
      const double s = line[i] == line[j] ? 1.0 : 0.0;
      valid[i * l + j] = 1.0;
      values[i * l + j] = uniform ? s : std::exp(s);
      z += values[i * l + j];
    }
    for (std::size_t j = 0; j < l; ++j) values[i * l + j] = z > 0 ? values[i * l + j] / z : 0.0;
  }
}

/// Jaccard loss of a mispredicted set, |M| / |G u M|, as a set function.
inline double jaccard_loss(const std::vector<bool>& fg, const std::vector<bool>& mis) {
  std::size_t m = 0, u = 0;
  for (std::size_t i = 0; i < fg.size(); ++i) {
    m += mis[i];
    u += (mis[i] || fg[i]);
  }
  return u == 0 ? 0.0 : double(m) / double(u);
}

/// Lovasz extension of the Jaccard loss at `err`, as the maximum over all
/// orderings of the greedy marginal sums (the extension of a submodular
/// function is the support function of its base polytope).
inline double lovasz_extension_enumerated(const std::vector<double>& err, const std::vector<bool>& fg) {
  const std::size_t p = err.size();
  std::vector<std::size_t> perm(p);
  std::iota(perm.begin(), perm.end(), 0);
  double best = -INFINITY;
  do {
    std::vector<bool> mis(p, false);
    double prev = 0, acc = 0;
    for (std::size_t i = 0; i < p; ++i) {
      mis[perm[i]] = true;
      const double cur = jaccard_loss(fg, mis);
      acc += err[perm[i]] * (cur - prev);
      prev = cur;
    }
    best = std::max(best, acc);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// Lovasz-softmax of one image by enumeration: mean over present classes of
/// the extension at |fg - p|. `probs` is n_classes x pixels, row-major.
inline double lovasz_softmax_enumerated(const std::vector<double>& probs, const std::vector<std::uint8_t>& labels,
                                        int n_classes, std::uint8_t ignore) {
  std::vector<std::size_t> px;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] != ignore) px.push_back(i);
  double total = 0;
  int present = 0;
  for (int c = 0; c < n_classes; ++c) {
    std::vector<bool> fg;
    std::vector<double> err;
    for (auto i : px) {
      fg.push_back(labels[i] == c);
      err.push_back(std::abs((labels[i] == c ? 1.0 : 0.0) - probs[c * labels.size() + i]));
    }
    if (std::find(fg.begin(), fg.end(), true) == fg.end()) continue;
    total += lovasz_extension_enumerated(err, fg);
    ++present;
  }
  return present ? total / present : 0.0;
}

struct ClassRatios {
  double iou, precision, recall, f1;
};

/// Per-class ratios counted straight from label arrays; zero denominators
/// give 0.
inline std::vector<ClassRatios> class_ratios(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt,
                                             int n, std::uint8_t ignore) {
  std::vector<ClassRatios> out;
  for (int c = 0; c < n; ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (gt[i] == ignore) continue;
      tp += pred[i] == c && gt[i] == c;
      fp += pred[i] == c && gt[i] != c;
      fn += pred[i] != c && gt[i] == c;
    }
    auto ratio = [](double a, double b) { return b > 0 ? a / b : 0.0; };
    const double p = ratio(tp, tp + fp), r = ratio(tp, tp + fn);
    out.push_back({ratio(tp, tp + fp + fn), p, r, ratio(2 * p * r, p + r)});
  }
  return out;
}

}  // namespace slc::oracle
