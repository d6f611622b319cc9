#pragma once

#include "slc/label_map.hpp"
#include "slc/ops.hpp"

#include <span>

namespace slc {

/// A scalar loss plus a flag raised when there was nothing to measure
/// (e.g. every pixel ignored). Degenerate losses are exactly 0.
template <typename S>
struct LossResult {
  Tensor<S> value;
  bool degenerate = false;
};

/// Weights of the hybrid objective: alpha on the correlation L1 term, beta on
/// the side-output cross-entropy, gamma on the final Lovasz-softmax term.
struct LossWeights {
  double alpha = 10.0;
  double beta = 0.05;
  double gamma = 1.0;
};

inline constexpr double kLogClamp = 1e-12;

/// Mean over non-ignore pixels of -log softmax(logits)[label]; logits are
/// N x n x H x W and `labels` holds N maps of H x W.
template <typename S>
LossResult<S> cross_entropy(const Tensor<S>& logits, std::span<const LabelMap> labels);

/// Per-image Lovasz-softmax over the classes present in each image, averaged
/// over images. `probs` are N x n x H x W class probabilities.
template <typename S>
LossResult<S> lovasz_softmax(const Tensor<S>& probs, std::span<const LabelMap> labels);

/// Mean |a - b| over entries whose mask is nonzero (empty mask = all entries).
template <typename S>
LossResult<S> l1_mean(const Tensor<S>& a, const Tensor<S>& b, const Array<S>& mask = Array<S>());

template <typename S>
Tensor<S> hybrid_total(const Tensor<S>& loss_fcsm, const Tensor<S>& loss_side, const Tensor<S>& loss_final,
                       const LossWeights& w);

/// Gradient of the Jaccard set function at a sorted ground-truth vector,
/// as in the Lovasz extension.
template <typename S>
Array<S> lovasz_grad(const Array<S>& gt_sorted);

}  // namespace slc
