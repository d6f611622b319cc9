#pragma once

#include "slc/label_map.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace slc {

class RasterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Interleaved 8-bit raster, row-major, `channels` samples per pixel.
struct Image8 {
  Index height = 0;
  Index width = 0;
  int channels = 3;
  std::vector<std::uint8_t> data;

  Image8() = default;
  Image8(Index h, Index w, int c, std::uint8_t fill = 0)
      : height(h), width(w), channels(c), data(static_cast<std::size_t>(h * w * c), fill) {}

  std::uint8_t& at(Index r, Index c, int ch) { return data[static_cast<std::size_t>((r * width + c) * channels + ch)]; }
  std::uint8_t at(Index r, Index c, int ch) const {
    return data[static_cast<std::size_t>((r * width + c) * channels + ch)];
  }
  bool operator==(const Image8&) const = default;
};

/// Reads an 8-bit PNG (gray or RGB), or a binary PGM/PPM, chosen by content.
Image8 read_raster(const std::filesystem::path& path);

/// Writes PNG unless the extension is .pgm or .ppm.
void write_raster(const std::filesystem::path& path, const Image8& img);

/// 8-bit RGB image. Gray files are rejected rather than silently expanded.
Image8 load_image(const std::filesystem::path& path);

/// Single-channel 8-bit file read as raw class ids.
LabelMap load_labels(const std::filesystem::path& path, std::uint8_t ignore_id = kIgnoreId);
void save_labels(const std::filesystem::path& path, const LabelMap& labels);

Image8 to_image(const LabelMap& labels);
LabelMap to_labels(const Image8& gray, std::uint8_t ignore_id = kIgnoreId);

/// Packs RGB images of equal size into an N x 3 x H x W tensor in [0, 1].
template <typename S>
Tensor<S> to_tensor(const std::vector<Image8>& images);

/// Palette used for color overlays: one `id r g b` line per class.
struct Palette {
  std::vector<std::array<std::uint8_t, 3>> colors;  // indexed by id

  static Palette load(const std::filesystem::path& path);
  /// Fixed fallback colors.
  static Palette standard(int n_classes);
  Image8 colorize(const LabelMap& labels) const;
};

}  // namespace slc
