#pragma once

#include "slc/checkpoint.hpp"
#include "slc/config.hpp"
#include "slc/metrics.hpp"

#include <functional>
#include <limits>
#include <ostream>

namespace slc {

struct EpochLog {
  int epoch = 0;
  double loss_total = 0;
  double loss_fcsm = 0;
  double loss_side = 0;
  double loss_final = 0;
  double val_miou = std::numeric_limits<double>::quiet_NaN();  // NaN without a validation set
};

/// Tab-separated header and rows of the training log.
std::string log_header();
std::string log_row(const EpochLog& e);

/// Tiled prediction of one image: eval-mode forward, merged logits, argmax.
template <typename S>
LabelMap predict_image(SlcNet<S>& model, const Image8& image, Index tile, double overlap, MergeMode merge);

/// Confusion matrix of the model's predictions over a dataset.
template <typename S>
ConfusionMatrix evaluate(SlcNet<S>& model, const Dataset& data, Index tile, double overlap, MergeMode merge);

template <typename S>
class Trainer {
 public:
  explicit Trainer(const RunConfig& cfg);

  /// One pass over `train` in shuffled mini-batches; the learning rate
  /// follows the drop schedule. Loss fields are per-sample means.
  EpochLog run_epoch(const Dataset& train);

  /// Trains for cfg.epochs, validating after each epoch when `val` is not
  /// empty. With `checkpoint` set, the epoch-best model (by validation mIoU,
  /// or the latest without validation) is written there.
  std::vector<EpochLog> fit(const Dataset& train, const Dataset& val, const std::filesystem::path& checkpoint = {},
                            const std::function<void(const EpochLog&)>& on_epoch = {});

  SlcNet<S>& model() { return model_; }
  int epochs_done() const { return epoch_; }

 private:
  RunConfig cfg_;
  SlcNet<S> model_;
  Adam<S> optimizer_;
  std::mt19937_64 rng_;
  int epoch_ = 0;
};

}  // namespace slc
