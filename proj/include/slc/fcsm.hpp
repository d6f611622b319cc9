#pragma once

#include "slc/consistency.hpp"
#include "slc/losses.hpp"
#include "slc/nn.hpp"

#include <span>
#include <utility>

namespace slc {

/// Post-softmax attention scores: `rows` is N x H x W x W (one W x W matrix
/// per image row), `cols` is N x W x H x H.
template <typename S>
struct CorrelationScores {
  Tensor<S> rows;
  Tensor<S> cols;
};

template <typename S>
struct Qkv {
  Tensor<S> query;
  Tensor<S> key;
  Tensor<S> value;
};

/// Three independent 1x1 projections C -> C. Query and key carry no bias:
/// a key bias shifts every logit of a line equally and would never train.
template <typename S>
class QkvProjection : public Module<S> {
 public:
  QkvProjection() = default;
  QkvProjection(Index channels, std::mt19937_64& rng)
      : query(channels, channels, 1, rng, false), key(channels, channels, 1, rng, false), value(channels, channels, 1, rng, true) {}

  Qkv<S> forward(const Tensor<S>& x) const { return {query.forward(x), key.forward(x), value.forward(x)}; }

  void visit(ModuleVisitor<S>& v) override {
    v.child("query", query);
    v.child("key", key);
    v.child("value", value);
  }

  Conv2d<S> query;
  Conv2d<S> key;
  Conv2d<S> value;
};

/// Scaled dot-product attention restricted to each image row. Returns the
/// recalibrated map (S x V per row) and the N x H x W x W scores.
template <typename S>
std::pair<Tensor<S>, Tensor<S>> row_attention(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v);

/// Column counterpart of row_attention; scores are N x W x H x H.
template <typename S>
std::pair<Tensor<S>, Tensor<S>> col_attention(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v);

enum class StageOrder { RowFirst, ColFirst };

template <typename S>
struct FcsmOutput {
  Tensor<S> features;
  CorrelationScores<S> scores;
};

/// Correlation block: two sequential 1-D attention stages (each with its own
/// projections), a skip connection from the input and a fusing conv block.
/// With `supervised == false` the block is the unsupervised ablation; the
/// forward pass is identical and only the training objective changes.
template <typename S>
class FcsmBlock : public Module<S> {
 public:
  FcsmBlock() = default;
  FcsmBlock(Index channels, std::mt19937_64& rng, bool supervised = true, StageOrder order = StageOrder::RowFirst)
      : first(channels, rng), second(channels, rng), fuse(channels, channels, 3, rng), supervised(supervised),
        order(order), channels_(channels) {}

  /// Projections of the first stage.
  Qkv<S> project_qkv(const Tensor<S>& x) const;

  FcsmOutput<S> forward(const Tensor<S>& x);

  void visit(ModuleVisitor<S>& v) override {
    v.child("stage1", first);
    v.child("stage2", second);
    v.child("fuse", fuse);
  }

  QkvProjection<S> first;
  QkvProjection<S> second;
  ConvBlock<S> fuse;
  bool supervised = true;
  StageOrder order = StageOrder::RowFirst;

 private:
  Index channels_ = 0;
};

/// Correlation loss averaged over the batch: for each image, the mean over
/// rows of the per-row mean |S - G| plus the mean over columns of the
/// per-column mean. Ignored pixels are excluded from every mean.
template <typename S>
LossResult<S> fcsm_loss(const CorrelationScores<S>& scores, std::span<const CorrelationTarget<S>> targets);

}  // namespace slc
