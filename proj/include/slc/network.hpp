#pragma once

#include "slc/arfe.hpp"
#include "slc/fcsm.hpp"
#include "slc/optim.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

namespace slc {

enum class BackboneKind { Tiny, ResNet50 };

/// Scales (encoder strides) that carry laterals into the decoder.
inline constexpr std::array<int, 4> kLateralScales{2, 4, 8, 16};

struct ModelConfig {
  int n_classes = 3;
  int in_channels = 3;
  std::array<Index, 5> stage_widths{16, 32, 64, 128, 256};  // strides 2, 4, 8, 16, 32
  std::vector<int> fcsm_scales{2, 4, 8, 16};
  std::vector<int> arfe_scales{2, 4, 8, 16};
  int d_small = 1;
  int d_large = 3;
  bool supervised_fcsm = true;
  BackboneKind backbone = BackboneKind::Tiny;
  StageOrder stage_order = StageOrder::RowFirst;
  TargetNorm target_norm = TargetNorm::Softmax;
  LossWeights loss;
  std::uint64_t seed = 0;

  /// Throws ContractError on an inconsistent configuration.
  void validate() const;

  bool has_fcsm(int scale) const;
  bool has_arfe(int scale) const;
  /// ResNet-50 stage widths.
  static std::array<Index, 5> resnet50_widths() { return {64, 256, 512, 1024, 2048}; }
};

/// Position of a stride in {2, 4, 8, 16, 32}.
int scale_index(int scale);

/// One encoder stage: an optional strided stem conv block followed by
/// residual (tiny) or bottleneck (resnet50) blocks.
template <typename S>
class BackboneStage : public Module<S> {
 public:
  Tensor<S> forward(const Tensor<S>& x) {
    Tensor<S> y = has_stem ? stem.forward(x) : x;
    for (auto& b : basic) y = b.forward(y);
    for (auto& b : bottleneck) y = b.forward(y);
    return y;
  }

  void visit(ModuleVisitor<S>& v) override {
    if (has_stem) v.child("stem", stem);
    for (std::size_t i = 0; i < basic.size(); ++i) v.child("block" + std::to_string(i + 1), basic[i]);
    for (std::size_t i = 0; i < bottleneck.size(); ++i) v.child("block" + std::to_string(i + 1), bottleneck[i]);
  }

  bool has_stem = false;
  ConvBlock<S> stem;
  std::vector<ResidualBlock<S>> basic;
  std::vector<BottleneckBlock<S>> bottleneck;
};

/// Five stages producing features at strides 2, 4, 8, 16 and 32.
template <typename S>
class Backbone : public Module<S> {
 public:
  Backbone() = default;
  Backbone(const ModelConfig& cfg, std::mt19937_64& rng);

  std::vector<Tensor<S>> forward(const Tensor<S>& x) {
    std::vector<Tensor<S>> out;
    Tensor<S> y = x;
    for (auto& s : stages) {
      y = s.forward(y);
      out.push_back(y);
    }
    return out;
  }

  void visit(ModuleVisitor<S>& v) override {
    for (std::size_t i = 0; i < stages.size(); ++i) v.child("stage" + std::to_string(i + 1), stages[i]);
  }

  std::vector<BackboneStage<S>> stages;
};

/// Decoder fusion: 2x transposed-conv upsample of the top-down features,
/// concatenation with the lateral, and a refining conv block.
template <typename S>
class Ffm : public Module<S> {
 public:
  Ffm() = default;
  Ffm(Index top_channels, Index lateral_channels, Index out_channels, std::mt19937_64& rng)
      : up(top_channels, out_channels, 2, 2, rng), refine(out_channels + lateral_channels, out_channels, 3, rng) {}

  /// When the upsampled map and the lateral differ in size (odd inputs), the
  /// larger one is center-cropped to the smaller.
  Tensor<S> forward(const Tensor<S>& top, const Tensor<S>& lateral) {
    Tensor<S> u = up.forward(top);
    Tensor<S> l = lateral;
    const Index h = std::min(u.dim(2), l.dim(2)), w = std::min(u.dim(3), l.dim(3));
    if (u.dim(2) != h || u.dim(3) != w) u = center_crop(u, h, w);
    if (l.dim(2) != h || l.dim(3) != w) l = center_crop(l, h, w);
    return refine.forward(concat<S>({u, l}));
  }

  void visit(ModuleVisitor<S>& v) override {
    v.child("up", up);
    v.child("refine", refine);
  }

  ConvTranspose2d<S> up;
  ConvBlock<S> refine;
};

/// Conv block then a 1x1 classifier.
template <typename S>
class SideOutput : public Module<S> {
 public:
  SideOutput() = default;
  SideOutput(Index channels, int n_classes, std::mt19937_64& rng)
      : block(channels, channels, 3, rng), classify(channels, n_classes, 1, rng, true, 1, 0) {}

  Tensor<S> forward(const Tensor<S>& x) { return classify.forward(block.forward(x)); }

  void visit(ModuleVisitor<S>& v) override {
    v.child("block", block);
    v.child("classify", classify);
  }

  ConvBlock<S> block;
  Conv2d<S> classify;
};

/// Stride-2 features to full-resolution logits.
template <typename S>
class FinalHead : public Module<S> {
 public:
  FinalHead() = default;
  FinalHead(Index channels, int n_classes, std::mt19937_64& rng)
      : up(channels, channels, 2, 2, rng), block(channels, channels, 3, rng),
        classify(channels, n_classes, 1, rng, true, 1, 0) {}

  Tensor<S> forward(const Tensor<S>& x, Index height, Index width) {
    Tensor<S> u = up.forward(x);
    if (u.dim(2) != height || u.dim(3) != width) u = center_crop(u, height, width);
    return classify.forward(block.forward(u));
  }

  void visit(ModuleVisitor<S>& v) override {
    v.child("up", up);
    v.child("block", block);
    v.child("classify", classify);
  }

  ConvTranspose2d<S> up;
  ConvBlock<S> block;
  Conv2d<S> classify;
};

template <typename S>
struct ScaledScores {
  int scale = 0;
  CorrelationScores<S> scores;
};

template <typename S>
struct ForwardOutputs {
  Tensor<S> final_logits;               // N x n x H x W
  std::vector<Tensor<S>> side_logits;   // strides 2, 4, 8, 16
  std::vector<ScaledScores<S>> fcsm_scores;
  std::vector<Tensor<S>> arfe_switches;  // one per ARFE scale, N x C x 1 x 1
};

template <typename S>
class SlcNet : public Module<S> {
 public:
  SlcNet() = default;
  explicit SlcNet(const ModelConfig& cfg);

  /// `image` is N x 3 x H x W with H, W >= 32 and even.
  ForwardOutputs<S> forward(const Tensor<S>& image);

  void visit(ModuleVisitor<S>& v) override;

  const ModelConfig& config() const { return cfg_; }

  Backbone<S> backbone;
  ConvBlock<S> neck1;
  ConvBlock<S> neck2;
  std::map<int, FcsmBlock<S>> fcsm;  // keyed by stride
  std::map<int, ArfeBlock<S>> arfe;
  std::map<int, Ffm<S>> ffm;
  std::map<int, SideOutput<S>> side;
  FinalHead<S> head;

 private:
  ModelConfig cfg_;
};

/// Thrown when a loss turns non-finite; the message lists every loss term.
class NumericalAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LossBreakdown {
  double total = 0;
  double fcsm = 0;   // summed over FCSM scales, before weighting
  double side = 0;   // summed over the four side outputs, before weighting
  double final = 0;  // Lovasz-softmax on the final map, before weighting
};

/// Objective on one forward pass. When FCSM supervision is off the FCSM
/// term is still measured (on detached scores) but carries no weight.
template <typename S>
std::pair<Tensor<S>, LossBreakdown> compute_losses(const ModelConfig& cfg, const ForwardOutputs<S>& out,
                                                   std::span<const LabelMap> labels);

/// Learning rate after `epoch` full epochs: `base` divided by 10 at every
/// listed boundary already passed.
double scheduled_lr(double base, const std::vector<int>& drop_epochs, int epoch);

/// Forward, losses, backward and one Adam step. Throws NumericalAbort on a
/// non-finite loss before any parameter is touched.
template <typename S>
LossBreakdown train_step(SlcNet<S>& model, Adam<S>& optimizer, const Tensor<S>& images,
                         std::span<const LabelMap> labels);

/// Argmax over channels of N x n x H x W logits.
template <typename S>
std::vector<LabelMap> argmax_labels(const Tensor<S>& logits);

}  // namespace slc
