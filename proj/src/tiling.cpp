#include "slc/tiling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace slc {

namespace {

std::vector<Index> axis_origins(Index size, Index tile, Index stride) {
  std::vector<Index> out;
  for (Index o = 0;; o += stride) {
    if (o + tile >= size) {
      out.push_back(size - tile);
      break;
    }
    out.push_back(o);
  }
  return out;
}

}  // namespace

std::vector<TileOrigin> TileGrid::origins() const {
  std::vector<TileOrigin> out;
  for (Index r : row_origins) {
    for (Index c : col_origins) out.push_back({r, c});
  }
  return out;
}

TileGrid make_tile_grid(Index height, Index width, Index tile, double overlap) {
  if (tile < 1) throw ContractError("tile size must be positive");
  if (tile > height || tile > width) {
    throw ContractError("tile " + std::to_string(tile) + " larger than source " + std::to_string(height) + "x" +
                        std::to_string(width));
  }
  if (!(overlap >= 0.0 && overlap < 1.0)) throw ContractError("overlap must lie in [0, 1)");
  TileGrid g;
  g.height = height;
  g.width = width;
  g.tile = tile;
  g.stride = std::max<Index>(1, static_cast<Index>(std::lround(double(tile) * (1.0 - overlap))));
  g.row_origins = axis_origins(height, tile, g.stride);
  g.col_origins = axis_origins(width, tile, g.stride);
  return g;
}

template <typename S>
Tensor<S> crop(const Tensor<S>& x, Index row, Index col, Index h, Index w) {
  if (x.rank() != 4 || row < 0 || col < 0 || row + h > x.dim(2) || col + w > x.dim(3)) {
    throw ShapeError("crop window out of bounds for " + to_string(x.shape()));
  }
  const Index nc = x.dim(0) * x.dim(1), sh = x.dim(2), sw = x.dim(3);
  Array<S> v(nc * h * w);
  const S* src = x.data();
  for (Index p = 0; p < nc; ++p) {
    for (Index r = 0; r < h; ++r) {
      for (Index c = 0; c < w; ++c) v[(p * h + r) * w + c] = src[(p * sh + row + r) * sw + col + c];
    }
  }
  return Tensor<S>({x.dim(0), x.dim(1), h, w}, std::move(v));
}

template <typename S>
Tensor<S> merge_predictions(const std::vector<Tensor<S>>& tiles, const TileGrid& grid, MergeMode mode) {
  const std::vector<TileOrigin> origins = grid.origins();
  if (tiles.size() != origins.size()) {
    throw ContractError("merge: " + std::to_string(tiles.size()) + " tiles for a grid of " +
                        std::to_string(origins.size()));
  }
  if (tiles.empty()) throw ContractError("merge: empty grid");
  const Index n = tiles[0].dim(1), h = grid.height, w = grid.width, t = grid.tile;
  // Sums are kept in long double so the mean of k identical values is exact.
  std::vector<long double> acc(static_cast<std::size_t>(n * h * w), 0.0L);
  std::vector<int> hits(static_cast<std::size_t>(h * w), 0);
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const Tensor<S>& tl = tiles[i];
    if (tl.shape() != Shape{1, n, t, t}) {
      throw ShapeError("merge: tile " + std::to_string(i) + " has shape " + to_string(tl.shape()));
    }
    const S* src = tl.data();
    for (Index r = 0; r < t; ++r) {
      for (Index c = 0; c < t; ++c) {
        const Index pix = (origins[i].row + r) * w + origins[i].col + c;
        for (Index k = 0; k < n; ++k) {
          auto& a = acc[static_cast<std::size_t>(k * h * w + pix)];
          const long double v = src[(k * t + r) * t + c];
          a = mode == MergeMode::Mean ? a + v : v;
        }
        ++hits[static_cast<std::size_t>(pix)];
      }
    }
  }
  Array<S> out(n * h * w);
  for (Index pix = 0; pix < h * w; ++pix) {
    const int k = hits[static_cast<std::size_t>(pix)];
    if (k == 0) throw ContractError("merge: pixel " + std::to_string(pix) + " is not covered by any tile");
    const long double div = mode == MergeMode::Mean ? k : 1;
    for (Index c = 0; c < n; ++c) out[c * h * w + pix] = static_cast<S>(acc[static_cast<std::size_t>(c * h * w + pix)] / div);
  }
  return Tensor<S>({1, n, h, w}, std::move(out));
}

template <typename S>
Tensor<S> predict_tiled(const Tensor<S>& image, Index tile, double overlap, MergeMode mode, const TileModel<S>& model) {
  if (image.rank() != 4 || image.dim(0) != 1) {
    throw ShapeError("predict_tiled: expected 1 x C x H x W, got " + to_string(image.shape()));
  }
  NoGradGuard no_grad;
  const Index h = image.dim(2), w = image.dim(3);
  if (h < tile || w < tile) {
    // Zero-pad the short side(s) up to one tile, predict, crop back.
    const Index c = image.dim(1), ph = std::max(h, tile), pw = std::max(w, tile);
    Array<S> padded = Array<S>::Zero(c * ph * pw);
    const S* src = image.data();
    for (Index ch = 0; ch < c; ++ch) {
      for (Index r = 0; r < h; ++r) {
        for (Index col = 0; col < w; ++col) padded[(ch * ph + r) * pw + col] = src[(ch * h + r) * w + col];
      }
    }
    const Tensor<S> logits = predict_tiled(Tensor<S>({1, c, ph, pw}, std::move(padded)), tile, overlap, mode, model);
    return crop(logits, 0, 0, h, w);
  }
  const TileGrid grid = make_tile_grid(h, w, tile, overlap);
  std::vector<Tensor<S>> outputs;
  for (const TileOrigin& o : grid.origins()) outputs.push_back(model(crop(image, o.row, o.col, tile, tile)));
  return merge_predictions(outputs, grid, mode);
}

#define SLC_INSTANTIATE_TILING(S)                                                                   \
  template Tensor<S> crop(const Tensor<S>&, Index, Index, Index, Index);                            \
  template Tensor<S> merge_predictions(const std::vector<Tensor<S>>&, const TileGrid&, MergeMode); \
  template Tensor<S> predict_tiled(const Tensor<S>&, Index, double, MergeMode, const TileModel<S>&);

SLC_INSTANTIATE_TILING(float)
SLC_INSTANTIATE_TILING(double)

}  // namespace slc
