#pragma once

#include "slc/label_map.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace slc {

/// Pixel counts indexed [ground truth][prediction].
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int n_classes)
      : n_(n_classes), counts_(static_cast<std::size_t>(n_classes) * static_cast<std::size_t>(n_classes), 0) {}

  int classes() const { return n_; }
  std::uint64_t at(int gt, int pred) const { return counts_[index(gt, pred)]; }
  std::uint64_t& at(int gt, int pred) { return counts_[index(gt, pred)]; }
  std::uint64_t total() const;
  std::uint64_t row_sum(int c) const;
  std::uint64_t col_sum(int c) const;

  /// Elementwise sum; shards accumulated separately merge exactly.
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t index(int gt, int pred) const;

  int n_ = 0;
  std::vector<std::uint64_t> counts_;
};

/// Adds one count per pixel whose ground truth is not the ignore id. A
/// prediction outside [0, n) is a contract violation.
void accumulate(const LabelMap& pred, const LabelMap& gt, ConfusionMatrix& cm);

struct ClassScores {
  double iou = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  bool undefined = false;  // some ratio had a zero denominator and was set to 0
};

struct Scores {
  std::vector<ClassScores> per_class;
  std::vector<int> evaluated;  // class ids entering the means
  double miou = 0;
  double avef1 = 0;
  bool any_undefined = false;
};

/// Per-class IoU, precision, recall and F1 with their means over every class
/// not listed in `excluded`.
Scores scores(const ConfusionMatrix& cm, const std::vector<int>& excluded = {});

/// Tab-separated report with 4 decimals: one row per class (IoU, F1,
/// precision, recall, whether it enters the means) followed by mIoU and
/// ave.F1 rows.
std::string metrics_report(const Scores& s);

}  // namespace slc
