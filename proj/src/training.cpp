#include "slc/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace slc {

std::string log_header() { return "epoch\tloss_total\tloss_fcsm\tloss_side\tloss_final\tval_mIoU"; }

std::string log_row(const EpochLog& e) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d\t%.9g\t%.9g\t%.9g\t%.9g\t", e.epoch, e.loss_total, e.loss_fcsm, e.loss_side,
                e.loss_final);
  std::string row = buf;
  if (std::isnan(e.val_miou)) {
    row += "-";
  } else {
    std::snprintf(buf, sizeof buf, "%.4f", e.val_miou);
    row += buf;
  }
  return row;
}

template <typename S>
LabelMap predict_image(SlcNet<S>& model, const Image8& image, Index tile, double overlap, MergeMode merge) {
  model.eval();
  const Tensor<S> x = to_tensor<S>({image});
  const Tensor<S> logits = predict_tiled<S>(x, tile, overlap, merge, [&model](const Tensor<S>& t) {
    return model.forward(t).final_logits;
  });
  return argmax_labels(logits)[0];
}

template <typename S>
ConfusionMatrix evaluate(SlcNet<S>& model, const Dataset& data, Index tile, double overlap, MergeMode merge) {
  ConfusionMatrix cm(model.config().n_classes);
  for (const Sample& s : data) accumulate(predict_image(model, s.image, tile, overlap, merge), s.labels, cm);
  return cm;
}

namespace {

template <typename S>
std::vector<Tensor<S>> params_of(SlcNet<S>& m) {
  std::vector<Tensor<S>> p;
  for (auto& nt : m.parameters()) p.push_back(nt.tensor);
  return p;
}

}  // namespace

template <typename S>
Trainer<S>::Trainer(const RunConfig& cfg) : cfg_(cfg), model_([&] {
    ModelConfig m = cfg.model;
    m.seed = cfg.seed;
    return m;
  }()), rng_(cfg.seed ^ 0x5eedf00dULL) {
  if (!cfg.resume.empty()) load_state(model_, read_checkpoint(cfg.resume));
  AdamOptions opt;
  opt.lr = cfg.lr;
  optimizer_ = Adam<S>(params_of(model_), opt);
}

template <typename S>
EpochLog Trainer<S>::run_epoch(const Dataset& train) {
  if (train.empty()) throw ContractError("training set is empty");
  optimizer_.set_lr(scheduled_lr(cfg_.lr, cfg_.lr_drop_epochs, epoch_));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t(0));
  std::shuffle(order.begin(), order.end(), rng_);

  EpochLog log;
  log.epoch = epoch_ + 1;
  std::size_t seen = 0;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg_.batch_size)) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg_.batch_size));
    std::vector<Image8> images;
    std::vector<LabelMap> labels;
    for (std::size_t i = start; i < end; ++i) {
      Image8 img = train[order[i]].image;
      LabelMap lab = train[order[i]].labels;
      if (cfg_.augment) augment(img, lab, rng_, cfg_.augment_options);
      images.push_back(std::move(img));
      labels.push_back(std::move(lab));
    }
    const LossBreakdown b = train_step(model_, optimizer_, to_tensor<S>(images), std::span<const LabelMap>(labels));
    const double k = double(end - start);
    log.loss_total += b.total * k;
    log.loss_fcsm += b.fcsm * k;
    log.loss_side += b.side * k;
    log.loss_final += b.final * k;
    seen += end - start;
  }
  log.loss_total /= double(seen);
  log.loss_fcsm /= double(seen);
  log.loss_side /= double(seen);
  log.loss_final /= double(seen);
  ++epoch_;
  return log;
}

template <typename S>
std::vector<EpochLog> Trainer<S>::fit(const Dataset& train, const Dataset& val, const std::filesystem::path& checkpoint,
                                      const std::function<void(const EpochLog&)>& on_epoch) {
  std::vector<EpochLog> logs;
  double best = -1;
  for (int e = 0; e < cfg_.epochs; ++e) {
    EpochLog log = run_epoch(train);
    if (!val.empty()) {
      log.val_miou = scores(evaluate(model_, val, cfg_.tile_size, cfg_.overlap, cfg_.merge)).miou;
    }
    const double key = std::isnan(log.val_miou) ? double(log.epoch) : log.val_miou;
    if (!checkpoint.empty() && key > best) {
      best = key;
      save_model(checkpoint, model_, cfg_.tile_size);
    }
    if (on_epoch) on_epoch(log);
    logs.push_back(log);
  }
  return logs;
}

template LabelMap predict_image(SlcNet<float>&, const Image8&, Index, double, MergeMode);
template LabelMap predict_image(SlcNet<double>&, const Image8&, Index, double, MergeMode);
template ConfusionMatrix evaluate(SlcNet<float>&, const Dataset&, Index, double, MergeMode);
template ConfusionMatrix evaluate(SlcNet<double>&, const Dataset&, Index, double, MergeMode);
template class Trainer<float>;
template class Trainer<double>;

}  // namespace slc
