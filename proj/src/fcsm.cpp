#include "slc/fcsm.hpp"

#include <cmath>

namespace slc {

namespace {

template <typename S>
std::pair<Tensor<S>, Tensor<S>> axial_attention(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v,
                                                Axis axis) {
  if (q.shape() != v.shape()) {
    throw ShapeError("attention: query " + to_string(q.shape()) + " and value " + to_string(v.shape()) + " differ");
  }
  const S inv_sqrt_c = S(1) / std::sqrt(S(q.dim(1)));
  Tensor<S> scores = softmax(scale(axial_logits(q, k, axis), inv_sqrt_c), 3);
  return {axial_apply(scores, v, axis), scores};
}

// Adds weights for one stack of per-line targets: each valid line contributes
// its mean absolute error, and the lines are averaged.
template <typename S>
bool add_line_weights(const LineTargets<S>& t, Array<S>& values, Array<S>& weights, Index offset, S image_scale) {
  const Index block = t.len * t.len;
  Index valid_lines = 0;
  for (Index l = 0; l < t.lines; ++l) valid_lines += t.valid.segment(l * block, block).sum() > S(0);
  if (valid_lines == 0) return false;
  for (Index l = 0; l < t.lines; ++l) {
    const S count = t.valid.segment(l * block, block).sum();
    if (count <= S(0)) continue;
    const Index at = offset + l * block;
    values.segment(at, block) = t.values.segment(l * block, block);
    weights.segment(at, block) = t.valid.segment(l * block, block) * (image_scale / (count * S(valid_lines)));
  }
  return true;
}

}  // namespace

template <typename S>
std::pair<Tensor<S>, Tensor<S>> row_attention(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v) {
  return axial_attention(q, k, v, Axis::Row);
}

template <typename S>
std::pair<Tensor<S>, Tensor<S>> col_attention(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v) {
  return axial_attention(q, k, v, Axis::Col);
}

template <typename S>
Qkv<S> FcsmBlock<S>::project_qkv(const Tensor<S>& x) const {
  if (x.rank() != 4 || x.dim(1) != channels_) {
    throw ShapeError("fcsm: expected " + std::to_string(channels_) + " input channels, got " + to_string(x.shape()));
  }
  return first.forward(x);
}

template <typename S>
FcsmOutput<S> FcsmBlock<S>::forward(const Tensor<S>& x) {
  const Qkv<S> p1 = project_qkv(x);
  const Axis a1 = order == StageOrder::RowFirst ? Axis::Row : Axis::Col;
  const Axis a2 = order == StageOrder::RowFirst ? Axis::Col : Axis::Row;
  auto [mid, s1] = axial_attention(p1.query, p1.key, p1.value, a1);
  const Qkv<S> p2 = second.forward(mid);
  auto [recal, s2] = axial_attention(p2.query, p2.key, p2.value, a2);

  FcsmOutput<S> out;
  out.features = fuse.forward(x + recal);
  out.scores.rows = a1 == Axis::Row ? s1 : s2;
  out.scores.cols = a1 == Axis::Row ? s2 : s1;
  return out;
}

template <typename S>
LossResult<S> fcsm_loss(const CorrelationScores<S>& scores, std::span<const CorrelationTarget<S>> targets) {
  const Tensor<S>& rows = scores.rows;
  const Tensor<S>& cols = scores.cols;
  if (rows.rank() != 4 || cols.rank() != 4) throw ShapeError("fcsm_loss: scores must be rank 4");
  const Index n = rows.dim(0);
  if (static_cast<Index>(targets.size()) != n || cols.dim(0) != n) {
    throw ShapeError("fcsm_loss: " + std::to_string(targets.size()) + " targets for a batch of " + std::to_string(n));
  }
  const Index row_block = rows.size() / n;
  const Index col_block = cols.size() / n;

  std::vector<bool> has_pixels(static_cast<std::size_t>(n));
  Index valid_images = 0;
  for (Index b = 0; b < n; ++b) {
    const auto& t = targets[static_cast<std::size_t>(b)];
    if (rows.shape() != Shape{n, t.height, t.width, t.width} || cols.shape() != Shape{n, t.width, t.height, t.height}) {
      throw ShapeError("fcsm_loss: scores " + to_string(rows.shape()) + " / " + to_string(cols.shape()) +
                       " do not match a " + std::to_string(t.height) + "x" + std::to_string(t.width) + " target");
    }
    has_pixels[static_cast<std::size_t>(b)] = t.rows.valid.sum() > S(0);
    valid_images += has_pixels[static_cast<std::size_t>(b)];
  }
  if (valid_images == 0) return {Tensor<S>::scalar(S(0)), true};

  const S image_scale = S(1) / S(valid_images);
  Array<S> row_target = Array<S>::Zero(rows.size()), row_weight = Array<S>::Zero(rows.size());
  Array<S> col_target = Array<S>::Zero(cols.size()), col_weight = Array<S>::Zero(cols.size());
  for (Index b = 0; b < n; ++b) {
    if (!has_pixels[static_cast<std::size_t>(b)]) continue;
    const auto& t = targets[static_cast<std::size_t>(b)];
    add_line_weights(t.rows, row_target, row_weight, b * row_block, image_scale);
    add_line_weights(t.cols, col_target, col_weight, b * col_block, image_scale);
  }
  Tensor<S> g_rows(rows.shape(), std::move(row_target));
  Tensor<S> g_cols(cols.shape(), std::move(col_target));
  return {weighted_l1(rows, g_rows, row_weight) + weighted_l1(cols, g_cols, col_weight), false};
}

#define SLC_INSTANTIATE_FCSM(S)                                                                            \
  template std::pair<Tensor<S>, Tensor<S>> row_attention(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&); \
  template std::pair<Tensor<S>, Tensor<S>> col_attention(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&); \
  template class FcsmBlock<S>;                                                                             \
  template LossResult<S> fcsm_loss(const CorrelationScores<S>&, std::span<const CorrelationTarget<S>>);

SLC_INSTANTIATE_FCSM(float)
SLC_INSTANTIATE_FCSM(double)

}  // namespace slc
