#pragma once

#include "slc/tensor.hpp"

#include <cstdint>
#include <vector>

namespace slc {

inline constexpr std::uint8_t kIgnoreId = 255;

/// 2-D raster of class ids. Pixels equal to `ignore_id` take part in no loss,
/// target or metric.
struct LabelMap {
  Index height = 0;
  Index width = 0;
  std::vector<std::uint8_t> ids;
  std::uint8_t ignore_id = kIgnoreId;

  LabelMap() = default;
  LabelMap(Index h, Index w, std::uint8_t fill = 0, std::uint8_t ignore = kIgnoreId)
      : height(h), width(w), ids(static_cast<std::size_t>(h * w), fill), ignore_id(ignore) {}

  std::uint8_t& at(Index r, Index c) { return ids[static_cast<std::size_t>(r * width + c)]; }
  std::uint8_t at(Index r, Index c) const { return ids[static_cast<std::size_t>(r * width + c)]; }
  bool ignored(Index r, Index c) const { return at(r, c) == ignore_id; }

  /// Throws ContractError if a non-ignore id is >= n_classes.
  void validate(int n_classes) const;

  bool operator==(const LabelMap&) const = default;
};

/// Nearest-neighbor downsampling that keeps the top-left pixel of each
/// factor x factor cell; output is ceil(H/f) x ceil(W/f).
LabelMap downsample_labels(const LabelMap& labels, int factor);

}  // namespace slc
