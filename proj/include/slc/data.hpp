#pragma once

#include "slc/raster.hpp"

#include <array>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace slc {

struct Sample {
  std::string stem;
  Image8 image;
  LabelMap labels;
};

using Dataset = std::vector<Sample>;

/// Reads `manifest.txt` (one stem per line) and the matching
/// `images/<stem>.png` and `labels/<stem>.png`.
Dataset load_dataset(const std::filesystem::path& dir, std::uint8_t ignore_id = kIgnoreId);
void save_dataset(const std::filesystem::path& dir, const Dataset& data);

struct AugmentOptions {
  double p_equalize = 0.5;
  double p_blur = 0.5;
  double blur_sigma = 1.0;
  double p_hflip = 0.5;
  double p_vflip = 0.5;
};

/// Per-channel 256-bin histogram equalization.
Image8 equalize_histogram(const Image8& img);
/// 3x3 Gaussian blur with replicated borders.
Image8 gaussian_blur3(const Image8& img, double sigma);
Image8 flip_horizontal(const Image8& img);
Image8 flip_vertical(const Image8& img);
LabelMap flip_horizontal(const LabelMap& labels);
LabelMap flip_vertical(const LabelMap& labels);

/// Each operation is drawn independently; flips move the labels with the
/// pixels and the photometric operations leave labels alone.
void augment(Image8& image, LabelMap& labels, std::mt19937_64& rng, const AugmentOptions& opt = {});

enum class SynthKind { Shapes, LongRange };

struct SynthSpec {
  SynthKind kind = SynthKind::Shapes;
  Index height = 64;
  Index width = 64;
  int n_classes = 3;
  int n_images = 8;
  double noise_sigma = 20.0;              // 8-bit units
  std::vector<double> class_fractions;    // empty = equal
  std::vector<std::array<std::uint8_t, 3>> class_colors;  // empty = built-in
  int block_grid = 4;                     // background cells per side
  int shapes_per_image = 4;
  std::uint64_t seed = 0;
};

/// One image. Shapes images are a grid of class blocks overlaid with
/// rectangles, ellipses and full-width stripes; every layer takes a class
/// drawn from `class_fractions`, so expected class areas match them.
/// LongRange images are horizontal bands of two classes that share one gray
/// texture; only a short marker segment at the left end of each band carries
/// the class color.
Sample generate_sample(const SynthSpec& spec, std::mt19937_64& rng, int index);
Dataset generate_synthetic(const SynthSpec& spec);

/// Non-overlapping tile x tile crops of every sample, split into a training
/// part and a random `holdout` fraction for validation.
std::pair<Dataset, Dataset> cut_tiles(const Dataset& data, Index tile, double holdout, std::uint64_t seed);

}  // namespace slc
