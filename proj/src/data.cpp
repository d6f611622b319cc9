#include "slc/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace slc {

namespace fs = std::filesystem;

Dataset load_dataset(const fs::path& dir, std::uint8_t ignore_id) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw RasterError("dataset " + dir.string() + " has no manifest.txt");
  Dataset out;
  std::string stem;
  while (std::getline(manifest, stem)) {
    while (!stem.empty() && std::isspace(static_cast<unsigned char>(stem.back()))) stem.pop_back();
    if (stem.empty()) continue;
    Sample s;
    s.stem = stem;
    s.image = load_image(dir / "images" / (stem + ".png"));
    s.labels = load_labels(dir / "labels" / (stem + ".png"), ignore_id);
    if (s.image.height != s.labels.height || s.image.width != s.labels.width) {
      throw RasterError(stem + ": image and label sizes differ");
    }
    out.push_back(std::move(s));
  }
  return out;
}

void save_dataset(const fs::path& dir, const Dataset& data) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "labels");
  std::ofstream manifest(dir / "manifest.txt");
  for (const Sample& s : data) {
    write_raster(dir / "images" / (s.stem + ".png"), s.image);
    save_labels(dir / "labels" / (s.stem + ".png"), s.labels);
    manifest << s.stem << "\n";
  }
  if (!manifest) throw RasterError("failed writing " + (dir / "manifest.txt").string());
}

Image8 equalize_histogram(const Image8& img) {
  Image8 out = img;
  const std::size_t pixels = static_cast<std::size_t>(img.height * img.width);
  for (int ch = 0; ch < img.channels; ++ch) {
    std::array<std::size_t, 256> hist{};
    for (std::size_t p = 0; p < pixels; ++p) ++hist[img.data[p * img.channels + ch]];
    std::array<std::size_t, 256> cdf{};
    std::partial_sum(hist.begin(), hist.end(), cdf.begin());
    const std::size_t cdf_min = *std::find_if(cdf.begin(), cdf.end(), [](std::size_t c) { return c > 0; });
    if (cdf_min == pixels) continue;  // constant channel
    std::array<std::uint8_t, 256> lut{};
    for (int v = 0; v < 256; ++v) {
      lut[v] = static_cast<std::uint8_t>(
          std::lround(double(cdf[v] - std::min(cdf[v], cdf_min)) / double(pixels - cdf_min) * 255.0));
    }
    for (std::size_t p = 0; p < pixels; ++p) out.data[p * img.channels + ch] = lut[img.data[p * img.channels + ch]];
  }
  return out;
}

Image8 gaussian_blur3(const Image8& img, double sigma) {
  const double side = std::exp(-1.0 / (2.0 * sigma * sigma));
  const std::array<double, 3> k{side / (1 + 2 * side), 1 / (1 + 2 * side), side / (1 + 2 * side)};
  Image8 out = img;
  for (Index r = 0; r < img.height; ++r) {
    for (Index c = 0; c < img.width; ++c) {
      for (int ch = 0; ch < img.channels; ++ch) {
        double acc = 0;
        for (int dr = -1; dr <= 1; ++dr) {
          const Index rr = std::clamp<Index>(r + dr, 0, img.height - 1);
          for (int dc = -1; dc <= 1; ++dc) {
            const Index cc = std::clamp<Index>(c + dc, 0, img.width - 1);
            acc += k[dr + 1] * k[dc + 1] * img.at(rr, cc, ch);
          }
        }
        out.at(r, c, ch) = static_cast<std::uint8_t>(std::clamp(std::lround(acc), 0L, 255L));
      }
    }
  }
  return out;
}

Image8 flip_horizontal(const Image8& img) {
  Image8 out = img;
  for (Index r = 0; r < img.height; ++r) {
    for (Index c = 0; c < img.width; ++c) {
      for (int ch = 0; ch < img.channels; ++ch) out.at(r, c, ch) = img.at(r, img.width - 1 - c, ch);
    }
  }
  return out;
}

Image8 flip_vertical(const Image8& img) {
  Image8 out = img;
  for (Index r = 0; r < img.height; ++r) {
    for (Index c = 0; c < img.width; ++c) {
      for (int ch = 0; ch < img.channels; ++ch) out.at(r, c, ch) = img.at(img.height - 1 - r, c, ch);
    }
  }
  return out;
}

LabelMap flip_horizontal(const LabelMap& labels) { return to_labels(flip_horizontal(to_image(labels)), labels.ignore_id); }
LabelMap flip_vertical(const LabelMap& labels) { return to_labels(flip_vertical(to_image(labels)), labels.ignore_id); }

void augment(Image8& image, LabelMap& labels, std::mt19937_64& rng, const AugmentOptions& opt) {
  std::bernoulli_distribution eq(opt.p_equalize), blur(opt.p_blur), hflip(opt.p_hflip), vflip(opt.p_vflip);
  const bool do_eq = eq(rng), do_blur = blur(rng), do_h = hflip(rng), do_v = vflip(rng);
  if (do_eq) image = equalize_histogram(image);
  if (do_blur) image = gaussian_blur3(image, opt.blur_sigma);
  if (do_h) {
    image = flip_horizontal(image);
    labels = flip_horizontal(labels);
  }
  if (do_v) {
    image = flip_vertical(image);
    labels = flip_vertical(labels);
  }
}

namespace {

std::vector<std::array<std::uint8_t, 3>> default_colors(int n) {
  static const std::array<std::array<std::uint8_t, 3>, 6> base{
      {{200, 60, 60}, {60, 180, 70}, {60, 80, 200}, {210, 200, 70}, {160, 70, 190}, {70, 190, 200}}};
  std::vector<std::array<std::uint8_t, 3>> out;
  for (int i = 0; i < n; ++i) {
    if (i < static_cast<int>(base.size())) {
      out.push_back(base[static_cast<std::size_t>(i)]);
    } else {
      // Spread further classes around the hue circle.
      const double h = std::fmod(0.618033988749895 * i, 1.0) * 6.0;
      const double x = 1 - std::abs(std::fmod(h, 2.0) - 1);
      std::array<double, 3> rgb{};
      const int sector = static_cast<int>(h);
      const std::array<std::array<double, 3>, 6> table{
          {{1, x, 0}, {x, 1, 0}, {0, 1, x}, {0, x, 1}, {x, 0, 1}, {1, 0, x}}};
      rgb = table[static_cast<std::size_t>(sector % 6)];
      out.push_back({std::uint8_t(40 + 180 * rgb[0]), std::uint8_t(40 + 180 * rgb[1]), std::uint8_t(40 + 180 * rgb[2])});
    }
  }
  return out;
}

std::uint8_t noisy(double mean, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, sigma);
  return static_cast<std::uint8_t>(std::clamp(std::lround(mean + (sigma > 0 ? n(rng) : 0.0)), 0L, 255L));
}

void paint(Sample& s, const std::vector<std::array<std::uint8_t, 3>>& colors, double sigma, std::mt19937_64& rng) {
  for (Index r = 0; r < s.labels.height; ++r) {
    for (Index c = 0; c < s.labels.width; ++c) {
      const auto& col = colors[s.labels.at(r, c)];
      for (int ch = 0; ch < 3; ++ch) s.image.at(r, c, ch) = noisy(col[static_cast<std::size_t>(ch)], sigma, rng);
    }
  }
}

void fill_shapes(LabelMap& m, const SynthSpec& spec, std::discrete_distribution<int>& cls, std::mt19937_64& rng) {
  const Index h = m.height, w = m.width, g = std::max(1, spec.block_grid);
  for (Index br = 0; br < g; ++br) {
    for (Index bc = 0; bc < g; ++bc) {
      const auto id = static_cast<std::uint8_t>(cls(rng));
      for (Index r = br * h / g; r < (br + 1) * h / g; ++r) {
        for (Index c = bc * w / g; c < (bc + 1) * w / g; ++c) m.at(r, c) = id;
      }
    }
  }
  std::uniform_int_distribution<int> kind(0, 2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < spec.shapes_per_image; ++i) {
    const int k = kind(rng);
    const auto id = static_cast<std::uint8_t>(cls(rng));
    const double cy = unit(rng) * double(h), cx = unit(rng) * double(w);
    const double ry = (0.0625 + 0.1875 * unit(rng)) * double(h), rx = (0.0625 + 0.1875 * unit(rng)) * double(w);
    for (Index r = 0; r < h; ++r) {
      for (Index c = 0; c < w; ++c) {
        const double dy = (double(r) + 0.5 - cy) / ry, dx = (double(c) + 0.5 - cx) / rx;
        bool inside = false;
        if (k == 0) inside = std::abs(dy) <= 1 && std::abs(dx) <= 1;   // rectangle
        if (k == 1) inside = dy * dy + dx * dx <= 1;                   // ellipse
        if (k == 2) inside = std::abs(dy) <= 0.5;                      // full-width stripe
        if (inside) m.at(r, c) = id;
      }
    }
  }
}

}  // namespace

Sample generate_sample(const SynthSpec& spec, std::mt19937_64& rng, int index) {
  if (spec.n_classes < 1 || spec.n_classes > 254) throw ContractError("synth: n_classes must be in [1, 254]");
  if (spec.height < 1 || spec.width < 1) throw ContractError("synth: image size must be positive");
  std::vector<double> fractions = spec.class_fractions;
  if (fractions.empty()) fractions.assign(static_cast<std::size_t>(spec.n_classes), 1.0);
  if (static_cast<int>(fractions.size()) != spec.n_classes) throw ContractError("synth: one fraction per class required");
  auto colors = spec.class_colors.empty() ? default_colors(spec.n_classes) : spec.class_colors;
  if (static_cast<int>(colors.size()) < spec.n_classes) throw ContractError("synth: one color per class required");
  std::discrete_distribution<int> cls(fractions.begin(), fractions.end());

  Sample s;
  char stem[32];
  std::snprintf(stem, sizeof stem, "synth_%04d", index);
  s.stem = stem;
  s.image = Image8(spec.height, spec.width, 3);
  s.labels = LabelMap(spec.height, spec.width);

  if (spec.kind == SynthKind::Shapes) {
    fill_shapes(s.labels, spec, cls, rng);
    paint(s, colors, spec.noise_sigma, rng);
    return s;
  }

  // Bands of 4 .. h/4 rows; one shared gray texture, class color only in the
  // marker segment at the left end of each band.
  const Index marker = std::max<Index>(1, spec.width / 8);
  std::uniform_int_distribution<Index> band_height(4, std::max<Index>(4, spec.height / 4));
  for (Index r0 = 0; r0 < spec.height;) {
    const Index r1 = std::min(spec.height, r0 + band_height(rng));
    const auto id = static_cast<std::uint8_t>(cls(rng));
    for (Index r = r0; r < r1; ++r) {
      for (Index c = 0; c < spec.width; ++c) {
        s.labels.at(r, c) = id;
        for (int ch = 0; ch < 3; ++ch) {
          const double mean = c < marker ? colors[id][static_cast<std::size_t>(ch)] : 128.0;
          s.image.at(r, c, ch) = noisy(mean, spec.noise_sigma, rng);
        }
      }
    }
    r0 = r1;
  }
  return s;
}

Dataset generate_synthetic(const SynthSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  Dataset out;
  for (int i = 0; i < spec.n_images; ++i) out.push_back(generate_sample(spec, rng, i));
  return out;
}

std::pair<Dataset, Dataset> cut_tiles(const Dataset& data, Index tile, double holdout, std::uint64_t seed) {
  if (tile < 1) throw ContractError("tile size must be positive");
  if (holdout < 0 || holdout >= 1) throw ContractError("holdout fraction must lie in [0, 1)");
  Dataset tiles;
  for (const Sample& s : data) {
    for (Index r = 0; r + tile <= s.image.height; r += tile) {
      for (Index c = 0; c + tile <= s.image.width; c += tile) {
        Sample t;
        t.stem = s.stem + "_r" + std::to_string(r) + "_c" + std::to_string(c);
        t.image = Image8(tile, tile, s.image.channels);
        t.labels = LabelMap(tile, tile, 0, s.labels.ignore_id);
        for (Index y = 0; y < tile; ++y) {
          for (Index x = 0; x < tile; ++x) {
            for (int ch = 0; ch < s.image.channels; ++ch) t.image.at(y, x, ch) = s.image.at(r + y, c + x, ch);
            t.labels.at(y, x) = s.labels.at(r + y, c + x);
          }
        }
        tiles.push_back(std::move(t));
      }
    }
  }
  std::vector<std::size_t> order(tiles.size());
  std::iota(order.begin(), order.end(), std::size_t(0));
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::lround(holdout * double(tiles.size())));
  std::vector<bool> is_val(tiles.size(), false);
  for (std::size_t i = 0; i < n_val; ++i) is_val[order[i]] = true;
  std::pair<Dataset, Dataset> out;
  for (std::size_t i = 0; i < tiles.size(); ++i) (is_val[i] ? out.second : out.first).push_back(std::move(tiles[i]));
  return out;
}

}  // namespace slc
