#pragma once

#include "slc/nn.hpp"

#include <vector>

namespace slc {

template <typename S>
struct ArfeOutput {
  Tensor<S> features;
  Tensor<S> switch_weights;  // N x C x 1 x 1, in (0, 1)
};

/// Per-scale encoder mixing a small- and a large-dilation branch with a
/// channel-wise switch computed from globally pooled stem features.
template <typename S>
class ArfeBlock : public Module<S> {
 public:
  ArfeBlock() = default;
  ArfeBlock(Index in_channels, Index channels, std::mt19937_64& rng, int d_small = 1, int d_large = 3)
      : stem(in_channels, channels, 3, rng),
        branch_small(channels, channels, 3, rng, d_small),
        branch_large(channels, channels, 3, rng, d_large),
        switch_gen(channels, channels, 1, rng, true, 1, 0),
        out_conv(channels, channels, 3, rng) {
    for (int i = 0; i < 3; ++i) residual.emplace_back(channels, channels, rng);
  }

  /// Stem features f.
  Tensor<S> stem_forward(const Tensor<S>& x) {
    Tensor<S> f = stem.forward(x);
    for (auto& r : residual) f = r.forward(f);
    return f;
  }

  /// sigmoid(conv1x1(GAP(f))), one weight per channel.
  Tensor<S> switch_weights(const Tensor<S>& f) const { return sigmoid(switch_gen.forward(global_avg_pool(f))); }

  ArfeOutput<S> forward(const Tensor<S>& x) {
    const Tensor<S> f = stem_forward(x);
    const Tensor<S> s = switch_weights(f);
    const Tensor<S> small = branch_small.forward(f);
    const Tensor<S> large = branch_large.forward(f);
    // s * small + (1 - s) * large, written as large + s * (small - large)
    return {out_conv.forward(large + s * (small - large)), s};
  }

  void visit(ModuleVisitor<S>& v) override {
    v.child("stem", stem);
    for (std::size_t i = 0; i < residual.size(); ++i) v.child("res" + std::to_string(i + 1), residual[i]);
    v.child("branch_small", branch_small);
    v.child("branch_large", branch_large);
    v.child("switch", switch_gen);
    v.child("out", out_conv);
  }

  ConvBlock<S> stem;
  std::vector<ResidualBlock<S>> residual;
  ConvBlock<S> branch_small;
  ConvBlock<S> branch_large;
  Conv2d<S> switch_gen;
  ConvBlock<S> out_conv;
};

/// Runs blocks[i] on the image average-pooled by scales[i].
template <typename S>
std::vector<ArfeOutput<S>> build_arfe_pyramid(const Tensor<S>& image, const std::vector<int>& scales,
                                              std::vector<ArfeBlock<S>>& blocks) {
  if (scales.size() != blocks.size()) throw ContractError("arfe pyramid: one block per scale required");
  std::vector<ArfeOutput<S>> out;
  out.reserve(scales.size());
  for (std::size_t i = 0; i < scales.size(); ++i) {
    out.push_back(blocks[i].forward(scales[i] == 1 ? image : avg_pool2d(image, scales[i])));
  }
  return out;
}

}  // namespace slc
