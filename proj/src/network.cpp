#include "slc/network.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace slc {

namespace {

bool contains(const std::vector<int>& v, int x) { return std::find(v.begin(), v.end(), x) != v.end(); }

void check_scale_list(const std::vector<int>& scales, const char* what) {
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (!contains({2, 4, 8, 16}, scales[i])) {
      throw ContractError(std::string(what) + " scale " + std::to_string(scales[i]) + " not in {2, 4, 8, 16}");
    }
    if (std::count(scales.begin(), scales.end(), scales[i]) > 1) {
      throw ContractError(std::string(what) + " scale " + std::to_string(scales[i]) + " listed twice");
    }
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (n_classes < 1 || n_classes > 255) throw ContractError("n_classes must be in [1, 255]");
  if (in_channels < 1) throw ContractError("in_channels must be positive");
  for (Index w : stage_widths) {
    if (w < 1) throw ContractError("stage widths must be positive");
  }
  if (contains(fcsm_scales, 32)) {
    throw ContractError("fcsm_scales may not include 32: the stride-32 features already see the whole tile");
  }
  check_scale_list(fcsm_scales, "fcsm");
  check_scale_list(arfe_scales, "arfe");
  if (d_small < 1 || d_large < 1) throw ContractError("dilation rates must be >= 1");
  if (loss.alpha < 0 || loss.beta < 0 || loss.gamma < 0) throw ContractError("loss weights must be nonnegative");
  if (backbone == BackboneKind::ResNet50) {
    for (int i = 1; i < 5; ++i) {
      if (stage_widths[i] % 4 != 0) throw ContractError("bottleneck stage widths must be divisible by 4");
    }
  }
}

bool ModelConfig::has_fcsm(int scale) const { return contains(fcsm_scales, scale); }
bool ModelConfig::has_arfe(int scale) const { return contains(arfe_scales, scale); }

int scale_index(int scale) {
  switch (scale) {
    case 2: return 0;
    case 4: return 1;
    case 8: return 2;
    case 16: return 3;
    case 32: return 4;
    default: throw ContractError("scale " + std::to_string(scale) + " is not a backbone stride");
  }
}

template <typename S>
Backbone<S>::Backbone(const ModelConfig& cfg, std::mt19937_64& rng) {
  const auto& w = cfg.stage_widths;
  stages.resize(5);
  if (cfg.backbone == BackboneKind::Tiny) {
    stages[0].has_stem = true;
    stages[0].stem = ConvBlock<S>(cfg.in_channels, w[0], 3, rng, 1, 2);
    stages[0].basic.emplace_back(w[0], w[0], rng);
    for (int i = 1; i < 5; ++i) stages[i].basic.emplace_back(w[i - 1], w[i], rng, 2);
    return;
  }
  // ResNet-50 arrangement; the first bottleneck of stage 2 takes over the
  // stride of the usual max-pool.
  stages[0].has_stem = true;
  stages[0].stem = ConvBlock<S>(cfg.in_channels, w[0], 7, rng, 1, 2);
  const std::array<int, 4> depth{3, 4, 6, 3};
  for (int i = 1; i < 5; ++i) {
    for (int b = 0; b < depth[i - 1]; ++b) {
      const Index in = b == 0 ? w[i - 1] : w[i];
      stages[i].bottleneck.emplace_back(in, w[i] / 4, w[i], rng, b == 0 ? 2 : 1);
    }
  }
}

template <typename S>
SlcNet<S>::SlcNet(const ModelConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const auto& w = cfg.stage_widths;
  backbone = Backbone<S>(cfg, rng);
  neck1 = ConvBlock<S>(w[4], w[4], 3, rng);
  neck2 = ConvBlock<S>(w[4], w[4], 3, rng);
  for (int s : kLateralScales) {
    const Index c = w[scale_index(s)];
    if (cfg.has_fcsm(s)) fcsm.emplace(s, FcsmBlock<S>(c, rng, cfg.supervised_fcsm, cfg.stage_order));
    if (cfg.has_arfe(s)) arfe.emplace(s, ArfeBlock<S>(cfg.in_channels, c, rng, cfg.d_small, cfg.d_large));
  }
  Index top = w[4];
  for (auto it = kLateralScales.rbegin(); it != kLateralScales.rend(); ++it) {
    const int s = *it;
    const Index c = w[scale_index(s)];
    const Index lateral = cfg.has_arfe(s) ? 2 * c : c;
    ffm.emplace(s, Ffm<S>(top, lateral, c, rng));
    side.emplace(s, SideOutput<S>(c, cfg.n_classes, rng));
    top = c;
  }
  head = FinalHead<S>(w[0], cfg.n_classes, rng);
}

template <typename S>
void SlcNet<S>::visit(ModuleVisitor<S>& v) {
  v.child("backbone", backbone);
  v.child("neck1", neck1);
  v.child("neck2", neck2);
  for (auto& [s, m] : fcsm) v.child("fcsm" + std::to_string(s), m);
  for (auto& [s, m] : arfe) v.child("arfe" + std::to_string(s), m);
  for (auto& [s, m] : ffm) v.child("ffm" + std::to_string(s), m);
  for (auto& [s, m] : side) v.child("side" + std::to_string(s), m);
  v.child("head", head);
}

template <typename S>
ForwardOutputs<S> SlcNet<S>::forward(const Tensor<S>& image) {
  if (image.rank() != 4 || image.dim(1) != cfg_.in_channels) {
    throw ShapeError("slcnet: expected N x " + std::to_string(cfg_.in_channels) + " x H x W input, got " +
                     to_string(image.shape()));
  }
  const Index h = image.dim(2), w = image.dim(3);
  if (h < 32 || w < 32 || h % 2 != 0 || w % 2 != 0) {
    throw ContractError("slcnet: input must be at least 32x32 with even sides, got " + std::to_string(h) + "x" +
                        std::to_string(w));
  }

  ForwardOutputs<S> out;
  std::vector<Tensor<S>> stages = backbone.forward(image);
  std::map<int, Tensor<S>> laterals;
  for (int s : kLateralScales) {
    Tensor<S> e = stages[static_cast<std::size_t>(scale_index(s))];
    if (auto it = fcsm.find(s); it != fcsm.end()) {
      FcsmOutput<S> f = it->second.forward(e);
      out.fcsm_scores.push_back({s, f.scores});
      e = f.features;
    }
    if (auto it = arfe.find(s); it != arfe.end()) {
      ArfeOutput<S> a = it->second.forward(avg_pool2d(image, s));
      out.arfe_switches.push_back(a.switch_weights);
      e = concat<S>({e, a.features});
    }
    laterals.emplace(s, e);
  }

  Tensor<S> top = neck2.forward(neck1.forward(stages[4]));
  out.side_logits.resize(kLateralScales.size());
  for (auto it = kLateralScales.rbegin(); it != kLateralScales.rend(); ++it) {
    const int s = *it;
    top = ffm.at(s).forward(top, laterals.at(s));
    out.side_logits[static_cast<std::size_t>(scale_index(s))] = side.at(s).forward(top);
  }
  out.final_logits = head.forward(top, h, w);
  return out;
}

template <typename S>
std::pair<Tensor<S>, LossBreakdown> compute_losses(const ModelConfig& cfg, const ForwardOutputs<S>& out,
                                                   std::span<const LabelMap> labels) {
  LossBreakdown b;

  Tensor<S> side_total = Tensor<S>::scalar(S(0));
  for (std::size_t i = 0; i < out.side_logits.size(); ++i) {
    std::vector<LabelMap> small;
    for (const auto& l : labels) small.push_back(downsample_labels(l, kLateralScales[i]));
    side_total = side_total + cross_entropy(out.side_logits[i], std::span<const LabelMap>(small)).value;
  }

  const Tensor<S> final_term = lovasz_softmax(softmax(out.final_logits, 1), labels).value;

  Tensor<S> fcsm_total = Tensor<S>::scalar(S(0));
  for (const auto& sc : out.fcsm_scores) {
    std::vector<CorrelationTarget<S>> targets;
    for (const auto& l : labels) targets.push_back(build_targets_for_scale<S>(l, sc.scale, cfg.target_norm));
    if (cfg.supervised_fcsm) {
      fcsm_total = fcsm_total + fcsm_loss(sc.scores, std::span<const CorrelationTarget<S>>(targets)).value;
    } else {
      const CorrelationScores<S> detached{sc.scores.rows.detach(), sc.scores.cols.detach()};
      fcsm_total = fcsm_total + fcsm_loss(detached, std::span<const CorrelationTarget<S>>(targets)).value.detach();
    }
  }

  LossWeights w = cfg.loss;
  if (!cfg.supervised_fcsm) w.alpha = 0;
  Tensor<S> total = hybrid_total(fcsm_total, side_total, final_term, w);
  b.total = double(total.item());
  b.fcsm = double(fcsm_total.item());
  b.side = double(side_total.item());
  b.final = double(final_term.item());
  return {total, b};
}

double scheduled_lr(double base, const std::vector<int>& drop_epochs, int epoch) {
  double lr = base;
  for (int e : drop_epochs) {
    if (epoch >= e) lr /= 10.0;
  }
  return lr;
}

template <typename S>
LossBreakdown train_step(SlcNet<S>& model, Adam<S>& optimizer, const Tensor<S>& images,
                         std::span<const LabelMap> labels) {
  model.train();
  optimizer.zero_grad();
  ForwardOutputs<S> out = model.forward(images);
  auto [total, b] = compute_losses(model.config(), out, labels);
  if (!std::isfinite(b.total) || !std::isfinite(b.fcsm) || !std::isfinite(b.side) || !std::isfinite(b.final)) {
    std::ostringstream msg;
    msg << "non-finite loss: total=" << b.total << " fcsm=" << b.fcsm << " side=" << b.side << " final=" << b.final;
    throw NumericalAbort(msg.str());
  }
  total.backward();
  optimizer.step();
  return b;
}

template <typename S>
std::vector<LabelMap> argmax_labels(const Tensor<S>& logits) {
  if (logits.rank() != 4) throw ShapeError("argmax_labels: expected N x n x H x W, got " + to_string(logits.shape()));
  const Index n = logits.dim(0), k = logits.dim(1), h = logits.dim(2), w = logits.dim(3), hw = h * w;
  std::vector<LabelMap> out;
  const S* x = logits.data();
  for (Index b = 0; b < n; ++b) {
    LabelMap m(h, w);
    for (Index p = 0; p < hw; ++p) {
      Index best = 0;
      for (Index c = 1; c < k; ++c) {
        if (x[(b * k + c) * hw + p] > x[(b * k + best) * hw + p]) best = c;
      }
      m.ids[static_cast<std::size_t>(p)] = static_cast<std::uint8_t>(best);
    }
    out.push_back(std::move(m));
  }
  return out;
}

#define SLC_INSTANTIATE_NETWORK(S)                                                                               \
  template class Backbone<S>;                                                                                    \
  template class SlcNet<S>;                                                                                      \
  template std::pair<Tensor<S>, LossBreakdown> compute_losses(const ModelConfig&, const ForwardOutputs<S>&,      \
                                                              std::span<const LabelMap>);                        \
  template LossBreakdown train_step(SlcNet<S>&, Adam<S>&, const Tensor<S>&, std::span<const LabelMap>);          \
  template std::vector<LabelMap> argmax_labels(const Tensor<S>&);

SLC_INSTANTIATE_NETWORK(float)
SLC_INSTANTIATE_NETWORK(double)

}  // namespace slc
