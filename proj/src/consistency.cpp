#include "slc/consistency.hpp"

#include <cmath>
#include <string>

namespace slc {

void LabelMap::validate(int n_classes) const {
  if (static_cast<Index>(ids.size()) != height * width) {
    throw ContractError("label map storage does not match its dimensions");
  }
  for (std::uint8_t id : ids) {
    if (id != ignore_id && id >= n_classes) {
      throw ContractError("label id " + std::to_string(id) + " outside [0, " + std::to_string(n_classes) + ")");
    }
  }
}

LabelMap downsample_labels(const LabelMap& labels, int factor) {
  if (factor < 1) throw ContractError("downsample factor must be >= 1");
  const Index h = (labels.height + factor - 1) / factor;
  const Index w = (labels.width + factor - 1) / factor;
  LabelMap out(h, w, 0, labels.ignore_id);
  for (Index r = 0; r < h; ++r) {
    for (Index c = 0; c < w; ++c) out.at(r, c) = labels.at(r * factor, c * factor);
  }
  return out;
}

RawConsistency build_raw_consistency(std::span<const std::uint8_t> line, std::uint8_t ignore_id) {
  if (line.empty()) throw ContractError("build_raw_consistency: empty line");
  RawConsistency raw;
  raw.len = static_cast<Index>(line.size());
  raw.same.assign(line.size() * line.size(), 0);
  raw.valid.assign(line.size() * line.size(), 0);
  for (std::size_t i = 0; i < line.size(); ++i) {
    for (std::size_t j = 0; j < line.size(); ++j) {
      const bool ok = line[i] != ignore_id && line[j] != ignore_id;
      raw.valid[i * line.size() + j] = ok;
      raw.same[i * line.size() + j] = ok && line[i] == line[j];
    }
  }
  return raw;
}

template <typename S>
NormalizedConsistency<S> normalize_target(const RawConsistency& raw, TargetNorm norm) {
  const Index n = raw.len;
  NormalizedConsistency<S> out;
  out.len = n;
  out.values = Array<S>::Zero(n * n);
  out.valid = Array<S>::Zero(n * n);
  for (Index i = 0; i < n; ++i) {
    S denom = 0;
    for (Index j = 0; j < n; ++j) {
      if (!raw.valid_at(i, j)) continue;
      denom += norm == TargetNorm::Softmax ? std::exp(S(raw.same_at(i, j))) : S(raw.same_at(i, j));
    }
    if (denom <= S(0)) continue;  // fully masked row
    for (Index j = 0; j < n; ++j) {
      if (!raw.valid_at(i, j)) continue;
      const S num = norm == TargetNorm::Softmax ? std::exp(S(raw.same_at(i, j))) : S(raw.same_at(i, j));
      out.values[i * n + j] = num / denom;
      out.valid[i * n + j] = S(1);
    }
  }
  return out;
}

namespace {

template <typename S>
LineTargets<S> stack_lines(const LabelMap& m, bool rows, TargetNorm norm) {
  LineTargets<S> t;
  t.lines = rows ? m.height : m.width;
  t.len = rows ? m.width : m.height;
  const Index block = t.len * t.len;
  t.values.resize(t.lines * block);
  t.valid.resize(t.lines * block);
  std::vector<std::uint8_t> line(static_cast<std::size_t>(t.len));
  for (Index l = 0; l < t.lines; ++l) {
    for (Index k = 0; k < t.len; ++k) line[static_cast<std::size_t>(k)] = rows ? m.at(l, k) : m.at(k, l);
    const auto n = normalize_target<S>(build_raw_consistency(line, m.ignore_id), norm);
    t.values.segment(l * block, block) = n.values;
    t.valid.segment(l * block, block) = n.valid;
  }
  return t;
}

}  // namespace

template <typename S>
CorrelationTarget<S> build_targets_for_scale(const LabelMap& labels, int scale, TargetNorm norm) {
  const LabelMap m = scale == 1 ? labels : downsample_labels(labels, scale);
  CorrelationTarget<S> t;
  t.height = m.height;
  t.width = m.width;
  t.rows = stack_lines<S>(m, true, norm);
  t.cols = stack_lines<S>(m, false, norm);
  return t;
}

template NormalizedConsistency<float> normalize_target<float>(const RawConsistency&, TargetNorm);
template NormalizedConsistency<double> normalize_target<double>(const RawConsistency&, TargetNorm);
template CorrelationTarget<float> build_targets_for_scale<float>(const LabelMap&, int, TargetNorm);
template CorrelationTarget<double> build_targets_for_scale<double>(const LabelMap&, int, TargetNorm);

}  // namespace slc
