#include "slc/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <string>

namespace slc {

std::size_t ConfusionMatrix::index(int gt, int pred) const {
  if (gt < 0 || gt >= n_ || pred < 0 || pred >= n_) {
    throw ContractError("confusion matrix index (" + std::to_string(gt) + ", " + std::to_string(pred) +
                        ") outside " + std::to_string(n_) + " classes");
  }
  return static_cast<std::size_t>(gt) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(pred);
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

std::uint64_t ConfusionMatrix::row_sum(int c) const {
  std::uint64_t t = 0;
  for (int p = 0; p < n_; ++p) t += at(c, p);
  return t;
}

std::uint64_t ConfusionMatrix::col_sum(int c) const {
  std::uint64_t t = 0;
  for (int g = 0; g < n_; ++g) t += at(g, c);
  return t;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.n_ != n_) throw ShapeError("cannot merge confusion matrices of different class counts");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

void accumulate(const LabelMap& pred, const LabelMap& gt, ConfusionMatrix& cm) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw ShapeError("accumulate: prediction " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                     " vs ground truth " + std::to_string(gt.height) + "x" + std::to_string(gt.width));
  }
  for (std::size_t i = 0; i < gt.ids.size(); ++i) {
    if (gt.ids[i] == gt.ignore_id) continue;
    cm.at(gt.ids[i], pred.ids[i]) += 1;
  }
}

Scores scores(const ConfusionMatrix& cm, const std::vector<int>& excluded) {
  Scores out;
  auto ratio = [](double num, double den, bool& undefined) {
    if (den == 0) {
      undefined = true;
      return 0.0;
    }
    return num / den;
  };
  for (int c = 0; c < cm.classes(); ++c) {
    const double tp = double(cm.at(c, c));
    const double fp = double(cm.col_sum(c)) - tp;
    const double fn = double(cm.row_sum(c)) - tp;
    ClassScores s;
    s.iou = ratio(tp, tp + fp + fn, s.undefined);
    s.precision = ratio(tp, tp + fp, s.undefined);
    s.recall = ratio(tp, tp + fn, s.undefined);
    s.f1 = ratio(2 * tp, 2 * tp + fp + fn, s.undefined);  // equals 2PR / (P + R)
    out.per_class.push_back(s);
    if (std::find(excluded.begin(), excluded.end(), c) != excluded.end()) continue;
    out.evaluated.push_back(c);
    out.any_undefined = out.any_undefined || s.undefined;
  }
  for (int c : out.evaluated) {
    out.miou += out.per_class[static_cast<std::size_t>(c)].iou;
    out.avef1 += out.per_class[static_cast<std::size_t>(c)].f1;
  }
  if (!out.evaluated.empty()) {
    out.miou /= double(out.evaluated.size());
    out.avef1 /= double(out.evaluated.size());
  }
  return out;
}

std::string metrics_report(const Scores& s) {
  std::string out = "class\tIoU\tF1\tprecision\trecall\tin_mean\n";
  char buf[160];
  for (std::size_t c = 0; c < s.per_class.size(); ++c) {
    const ClassScores& k = s.per_class[c];
    const bool in_mean = std::find(s.evaluated.begin(), s.evaluated.end(), int(c)) != s.evaluated.end();
    std::snprintf(buf, sizeof buf, "%zu\t%.4f\t%.4f\t%.4f\t%.4f\t%s%s\n", c, k.iou, k.f1, k.precision, k.recall,
                  in_mean ? "yes" : "no", k.undefined ? "\tundefined" : "");
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "mIoU\t%.4f\nave.F1\t%.4f\n", s.miou, s.avef1);
  return out + buf;
}

}  // namespace slc
