#include "slc/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace slc {

namespace {

void check_labels(const Shape& s, std::span<const LabelMap> labels, const char* op) {
  if (s.size() != 4) throw ShapeError(std::string(op) + ": expected N x n x H x W, got " + to_string(s));
  if (static_cast<Index>(labels.size()) != s[0]) {
    throw ShapeError(std::string(op) + ": " + std::to_string(labels.size()) + " label maps for batch of " +
                     std::to_string(s[0]));
  }
  for (const auto& l : labels) {
    if (l.height != s[2] || l.width != s[3]) {
      throw ShapeError(std::string(op) + ": label map " + std::to_string(l.height) + "x" +
                       std::to_string(l.width) + " does not match " + to_string(s));
    }
    l.validate(static_cast<int>(s[1]));
  }
}

template <typename S>
LossResult<S> zero_loss() {
  return {Tensor<S>::scalar(S(0)), true};
}

}  // namespace

template <typename S>
LossResult<S> cross_entropy(const Tensor<S>& logits, std::span<const LabelMap> labels) {
  check_labels(logits.shape(), labels, "cross_entropy");
  const Index n = logits.dim(0), k = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  const S log_floor = std::log(S(kLogClamp));
  auto coef = std::make_shared<Array<S>>(Array<S>::Zero(logits.size()));
  Index count = 0;
  S total = 0;
  const S* x = logits.data();
  for (Index b = 0; b < n; ++b) {
    const LabelMap& lm = labels[static_cast<std::size_t>(b)];
    for (Index p = 0; p < hw; ++p) {
      const std::uint8_t id = lm.ids[static_cast<std::size_t>(p)];
      if (id == lm.ignore_id) continue;
      S mx = x[(b * k) * hw + p];
      for (Index c = 1; c < k; ++c) mx = std::max(mx, x[(b * k + c) * hw + p]);
      S z = 0;
      for (Index c = 0; c < k; ++c) z += std::exp(x[(b * k + c) * hw + p] - mx);
      const S logp = x[(b * k + id) * hw + p] - mx - std::log(z);
      ++count;
      if (logp < log_floor) {
        total -= log_floor;
        continue;  // clamped: flat in the logits
      }
      total -= logp;
      for (Index c = 0; c < k; ++c) {
        const S prob = std::exp(x[(b * k + c) * hw + p] - mx) / z;
        (*coef)[(b * k + c) * hw + p] = prob - (c == id ? S(1) : S(0));
      }
    }
  }
  if (count == 0) return zero_loss<S>();
  const S inv = S(1) / S(count);
  *coef *= inv;
  Tensor<S> value = Tensor<S>::make_result({1}, Array<S>::Constant(1, total * inv), {logits},
                                           [logits, coef](const Array<S>& g) { accumulate_grad(logits, g[0] * *coef); });
  return {value, false};
}

template <typename S>
Array<S> lovasz_grad(const Array<S>& gt_sorted) {
  const Index p = gt_sorted.size();
  Array<S> jac(p);
  const S gts = gt_sorted.sum();
  S cum_fg = 0, cum_bg = 0;
  for (Index i = 0; i < p; ++i) {
    cum_fg += gt_sorted[i];
    cum_bg += S(1) - gt_sorted[i];
    const S inter = gts - cum_fg;
    const S uni = gts + cum_bg;
    jac[i] = S(1) - inter / uni;
  }
  for (Index i = p - 1; i > 0; --i) jac[i] -= jac[i - 1];
  return jac;
}

template <typename S>
LossResult<S> lovasz_softmax(const Tensor<S>& probs, std::span<const LabelMap> labels) {
  check_labels(probs.shape(), labels, "lovasz_softmax");
  const Index n = probs.dim(0), k = probs.dim(1), hw = probs.dim(2) * probs.dim(3);
  const S* pr = probs.data();

  std::vector<S> image_loss;
  std::vector<Array<S>> image_coef;
  for (Index b = 0; b < n; ++b) {
    const LabelMap& lm = labels[static_cast<std::size_t>(b)];
    std::vector<Index> pixels;
    for (Index p = 0; p < hw; ++p) {
      if (lm.ids[static_cast<std::size_t>(p)] != lm.ignore_id) pixels.push_back(p);
    }
    const Index m = static_cast<Index>(pixels.size());
    Array<S> coef = Array<S>::Zero(k * hw);
    S loss = 0;
    int present = 0;
    for (Index c = 0; c < k; ++c) {
      Array<S> fg(m), err(m);
      for (Index i = 0; i < m; ++i) {
        const Index p = pixels[static_cast<std::size_t>(i)];
        fg[i] = lm.ids[static_cast<std::size_t>(p)] == c ? S(1) : S(0);
        err[i] = std::abs(fg[i] - pr[(b * k + c) * hw + p]);
      }
      if (m == 0 || fg.sum() <= S(0)) continue;
      ++present;
      std::vector<Index> order(static_cast<std::size_t>(m));
      std::iota(order.begin(), order.end(), Index(0));
      // Descending errors; equal errors keep their original pixel order.
      std::stable_sort(order.begin(), order.end(), [&](Index a, Index b2) { return err[a] > err[b2]; });
      Array<S> fg_sorted(m);
      for (Index i = 0; i < m; ++i) fg_sorted[i] = fg[order[static_cast<std::size_t>(i)]];
      const Array<S> grad = lovasz_grad(fg_sorted);
      for (Index i = 0; i < m; ++i) {
        const Index src = order[static_cast<std::size_t>(i)];
        const Index p = pixels[static_cast<std::size_t>(src)];
        loss += err[src] * grad[i];
        const S d = pr[(b * k + c) * hw + p] - fg[src];
        const S sgn = d > S(0) ? S(1) : (d < S(0) ? S(-1) : S(0));
        coef[c * hw + p] = grad[i] * sgn;
      }
    }
    if (present == 0) {
      image_loss.push_back(S(-1));
      image_coef.emplace_back();
      continue;
    }
    image_loss.push_back(loss / S(present));
    image_coef.push_back(coef / S(present));
  }

  const Index valid_images = std::count_if(image_loss.begin(), image_loss.end(), [](S v) { return v >= S(0); });
  if (valid_images == 0) return zero_loss<S>();
  auto coef = std::make_shared<Array<S>>(Array<S>::Zero(probs.size()));
  S total = 0;
  for (Index b = 0; b < n; ++b) {
    if (image_loss[static_cast<std::size_t>(b)] < S(0)) continue;
    total += image_loss[static_cast<std::size_t>(b)];
    coef->segment(b * k * hw, k * hw) = image_coef[static_cast<std::size_t>(b)] / S(valid_images);
  }
  Tensor<S> value = Tensor<S>::make_result({1}, Array<S>::Constant(1, total / S(valid_images)), {probs},
                                           [probs, coef](const Array<S>& g) { accumulate_grad(probs, g[0] * *coef); });
  return {value, false};
}

template <typename S>
LossResult<S> l1_mean(const Tensor<S>& a, const Tensor<S>& b, const Array<S>& mask) {
  if (a.shape() != b.shape()) {
    throw ShapeError("l1_mean: shapes differ " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  Array<S> w = mask.size() == 0 ? Array<S>(Array<S>::Ones(a.size())) : Array<S>((mask != S(0)).template cast<S>());
  if (w.size() != a.size()) throw ShapeError("l1_mean: mask size does not match tensor size");
  const S count = w.sum();
  if (count <= S(0)) return zero_loss<S>();
  w /= count;
  return {weighted_l1(a, b, w), false};
}

template <typename S>
Tensor<S> hybrid_total(const Tensor<S>& loss_fcsm, const Tensor<S>& loss_side, const Tensor<S>& loss_final,
                       const LossWeights& w) {
  for (const Tensor<S>* t : {&loss_fcsm, &loss_side, &loss_final}) {
    if (t->size() != 1) throw ContractError("hybrid_total: all loss terms must be scalars");
  }
  if (w.alpha < 0 || w.beta < 0 || w.gamma < 0) throw ContractError("hybrid_total: loss weights must be nonnegative");
  return scale(loss_fcsm, S(w.alpha)) + scale(loss_side, S(w.beta)) + scale(loss_final, S(w.gamma));
}

#define SLC_INSTANTIATE_LOSSES(S)                                                                \
  template LossResult<S> cross_entropy(const Tensor<S>&, std::span<const LabelMap>);             \
  template LossResult<S> lovasz_softmax(const Tensor<S>&, std::span<const LabelMap>);            \
  template LossResult<S> l1_mean(const Tensor<S>&, const Tensor<S>&, const Array<S>&);           \
  template Tensor<S> hybrid_total(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,          \
                                  const LossWeights&);                                           \
  template Array<S> lovasz_grad(const Array<S>&);

SLC_INSTANTIATE_LOSSES(float)
SLC_INSTANTIATE_LOSSES(double)

}  // namespace slc
