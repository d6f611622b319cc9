#pragma once

#include "slc/tensor.hpp"

#include <vector>

namespace slc {

// Elementwise arithmetic. Both operands must have equal rank; each dimension
// either matches or is 1 on one side (e.g. N x C x 1 x 1 against N x C x H x W).
template <typename S> Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b);
template <typename S> Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b);
template <typename S> Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b);
template <typename S> Tensor<S> scale(const Tensor<S>& x, S factor);
template <typename S> Tensor<S> add_scalar(const Tensor<S>& x, S value);

template <typename S> Tensor<S> relu(const Tensor<S>& x);
template <typename S> Tensor<S> sigmoid(const Tensor<S>& x);

template <typename S> Tensor<S> sum(const Tensor<S>& x);
template <typename S> Tensor<S> mean(const Tensor<S>& x);

/// Rank-2 product.
template <typename S> Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b);

/// Numerically stable softmax along `axis` (negative axes count from the end).
template <typename S> Tensor<S> softmax(const Tensor<S>& x, int axis);

/// NCHW convolution with an O x I x K x K kernel. `bias` may be undefined.
template <typename S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& kernel, const Tensor<S>& bias,
                 int stride = 1, int padding = 0, int dilation = 1);

/// Adjoint of conv2d. The kernel is laid out I x O x K x K where I is the
/// input channel count of this op, so a conv2d kernel can be passed directly.
template <typename S>
Tensor<S> conv_transpose2d(const Tensor<S>& input, const Tensor<S>& kernel,
                           const Tensor<S>& bias, int stride = 1, int padding = 0);

/// factor x factor mean pooling; partial windows at the border average over
/// the pixels they contain, giving ceil(H/f) x ceil(W/f) outputs.
template <typename S> Tensor<S> avg_pool2d(const Tensor<S>& x, int factor);
template <typename S> Tensor<S> global_avg_pool(const Tensor<S>& x);
template <typename S> Tensor<S> nearest_upsample(const Tensor<S>& x, int factor);
template <typename S> Tensor<S> concat(const std::vector<Tensor<S>>& parts, int axis = 1);
template <typename S> Tensor<S> center_crop(const Tensor<S>& x, Index height, Index width);

template <typename S>
struct BatchNormStats {
  Tensor<S> running_mean;
  Tensor<S> running_var;
  Tensor<S> batches_tracked;  // scalar counter

  explicit BatchNormStats(Index channels = 1)
      : running_mean(Tensor<S>::zeros({channels})),
        running_var(Tensor<S>::ones({channels})),
        batches_tracked(Tensor<S>::zeros({1})) {}
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Per-channel batch normalization over N, H, W. Training mode normalizes with
/// batch statistics and updates `stats`; eval mode requires accumulated stats.
template <typename S>
Tensor<S> batch_norm2d(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                       BatchNormStats<S>& stats, bool training,
                       S momentum = S(kBatchNormMomentum), S eps = S(kBatchNormEps));

enum class Axis { Row, Col };

/// Pairwise dot products along image rows (Row: N x H x W x W) or columns
/// (Col: N x W x H x H) between two N x C x H x W maps.
template <typename S> Tensor<S> axial_logits(const Tensor<S>& q, const Tensor<S>& k, Axis axis);

/// Mixes `v` along rows or columns with the per-line matrices of `scores`:
/// out[:, i] = sum_j scores[i, j] * v[:, j].
template <typename S> Tensor<S> axial_apply(const Tensor<S>& scores, const Tensor<S>& v, Axis axis);

/// sum(weights * |a - b|) as a scalar.
template <typename S>
Tensor<S> weighted_l1(const Tensor<S>& a, const Tensor<S>& b, const Array<S>& weights);

template <typename S> Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) { return add(a, b); }
template <typename S> Tensor<S> operator-(const Tensor<S>& a, const Tensor<S>& b) { return sub(a, b); }
template <typename S> Tensor<S> operator*(const Tensor<S>& a, const Tensor<S>& b) { return mul(a, b); }
template <typename S> Tensor<S> operator*(S factor, const Tensor<S>& x) { return scale(x, factor); }

}  // namespace slc
