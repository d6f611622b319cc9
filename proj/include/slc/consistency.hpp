#pragma once

#include "slc/label_map.hpp"

#include <span>

namespace slc {

/// Pairwise category agreement along one row or column of labels.
struct RawConsistency {
  Index len = 0;
  std::vector<std::uint8_t> same;   // len x len, 1 iff both ids match and neither is ignored
  std::vector<std::uint8_t> valid;  // len x len, 0 where either pixel is ignored

  std::uint8_t same_at(Index i, Index j) const { return same[static_cast<std::size_t>(i * len + j)]; }
  std::uint8_t valid_at(Index i, Index j) const { return valid[static_cast<std::size_t>(i * len + j)]; }
};

RawConsistency build_raw_consistency(std::span<const std::uint8_t> line, std::uint8_t ignore_id = kIgnoreId);

enum class TargetNorm { Softmax, Uniform };

/// Row-normalized consistency matrix. Masked entries hold 0 and a row with no
/// valid entries is entirely masked.
template <typename S>
struct NormalizedConsistency {
  Index len = 0;
  Array<S> values;
  Array<S> valid;  // 0/1
};

template <typename S>
NormalizedConsistency<S> normalize_target(const RawConsistency& raw, TargetNorm norm = TargetNorm::Softmax);

/// Stacked per-line targets: `lines` matrices of `len` x `len`.
template <typename S>
struct LineTargets {
  Index lines = 0;
  Index len = 0;
  Array<S> values;
  Array<S> valid;
};

/// Supervision for one image at one scale: a W x W target per row and an
/// H x H target per column of the downsampled label map.
template <typename S>
struct CorrelationTarget {
  Index height = 0;
  Index width = 0;
  LineTargets<S> rows;
  LineTargets<S> cols;
};

template <typename S>
CorrelationTarget<S> build_targets_for_scale(const LabelMap& labels, int scale,
                                             TargetNorm norm = TargetNorm::Softmax);

}  // namespace slc
