#pragma once

#include "slc/tensor.hpp"

#include <functional>
#include <vector>

namespace slc {

struct TileOrigin {
  Index row = 0;
  Index col = 0;
  bool operator==(const TileOrigin&) const = default;
};

struct TileGrid {
  Index height = 0;
  Index width = 0;
  Index tile = 0;
  Index stride = 0;
  std::vector<Index> row_origins;
  std::vector<Index> col_origins;

  /// Row-major over (row origin, col origin).
  std::vector<TileOrigin> origins() const;
  double overlap() const { return 1.0 - double(stride) / double(tile); }
};

/// Origins 0, stride, 2*stride, ... with the last one clamped to
/// size - tile, where stride = round(tile * (1 - overlap)).
TileGrid make_tile_grid(Index height, Index width, Index tile, double overlap = 0.25);

enum class MergeMode { Mean, LastWrite };

/// Combines per-tile logits (each 1 x n x tile x tile, in grid order) into a
/// 1 x n x H x W map. Mean averages every covering tile; LastWrite keeps the
/// value of the last tile in grid order.
template <typename S>
Tensor<S> merge_predictions(const std::vector<Tensor<S>>& tiles, const TileGrid& grid, MergeMode mode = MergeMode::Mean);

template <typename S>
using TileModel = std::function<Tensor<S>(const Tensor<S>&)>;

/// Runs `model` over the overlap grid of a 1 x C x H x W image and merges the
/// logits. An image smaller than a tile is zero-padded to one tile and the
/// logits cropped back.
template <typename S>
Tensor<S> predict_tiled(const Tensor<S>& image, Index tile, double overlap, MergeMode mode, const TileModel<S>& model);

/// Copies the window [row, row + h) x [col, col + w) of an N x C x H x W tensor.
template <typename S>
Tensor<S> crop(const Tensor<S>& x, Index row, Index col, Index h, Index w);

}  // namespace slc
