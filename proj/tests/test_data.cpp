#include "helpers.hpp"

#include "slc/data.hpp"
#include "slc/ops.hpp"
#include "slc/raster.hpp"
#include "slc/tiling.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

using namespace slc;
using slc::test::max_abs_diff;
using slc::test::random_tensor;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("slc_test_data_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string file_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

Image8 random_image(Index h, Index w, int c, std::mt19937_64& rng) {
  Image8 img(h, w, c);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng() & 0xff);
  return img;
}

/// Per-axis tile count at coordinate x: unclamped origins k * stride with
/// k * stride + tile < length, plus the clamped last origin length - tile.
Index axis_multiplicity(Index x, Index length, Index tile, Index stride) {
  Index count = x >= length - tile ? 1 : 0;
  if (length > tile) {
    const Index k_max = std::min((length - tile - 1) / stride, x / stride);
    const Index k_min = x - tile + 1 <= 0 ? 0 : (x - tile + 1 + stride - 1) / stride;
    if (k_max >= k_min) count += k_max - k_min + 1;
  }
  return count;
}

}  // namespace

TEST_SUITE("raster") {
  TEST_CASE("hand-written PGM is read exactly") {
    TempDir tmp;
    const auto p = tmp.path / "tiny.pgm";
    {
      std::ofstream f(p, std::ios::binary);
      f << "P5\n# comment\n2 2\n255\n";
      f.put(char(0)).put(char(7)).put(char(255)).put(char(128));
    }
    const auto img = read_raster(p);
    CHECK(img.height == 2);
    CHECK(img.width == 2);
    CHECK(img.channels == 1);
    CHECK(img.data == std::vector<std::uint8_t>{0, 7, 255, 128});
    const auto lm = load_labels(p);
    CHECK(lm.ignored(1, 0));
    CHECK(lm.at(1, 1) == 128);
  }

  TEST_CASE("PNG and PPM round trips are exact") {
    TempDir tmp;
    std::mt19937_64 rng(51);
    for (int c : {1, 3}) {
      const auto img = random_image(5, 7, c, rng);
      write_raster(tmp.path / "a.png", img);
      CHECK(read_raster(tmp.path / "a.png") == img);
      write_raster(tmp.path / (c == 1 ? "a.pgm" : "a.ppm"), img);
      CHECK(read_raster(tmp.path / (c == 1 ? "a.pgm" : "a.ppm")) == img);
    }
    const Image8 two(2, 2, 3, 9);
    write_raster(tmp.path / "b.png", two);
    const std::string first = file_bytes(tmp.path / "b.png");
    write_raster(tmp.path / "b.png", read_raster(tmp.path / "b.png"));
    CHECK(file_bytes(tmp.path / "b.png") == first);
  }

  TEST_CASE("all-255 label raster is all ignore") {
    TempDir tmp;
    save_labels(tmp.path / "l.png", LabelMap(3, 4, 255));
    const auto lm = load_labels(tmp.path / "l.png");
    for (Index r = 0; r < 3; ++r)
      for (Index c = 0; c < 4; ++c) CHECK(lm.ignored(r, c));
  }

  TEST_CASE("unsupported content is rejected with a message") {
    TempDir tmp;
    {
      std::ofstream f(tmp.path / "deep.pgm", std::ios::binary);
      f << "P5 1 1 65535\n";
      f.put(char(1)).put(char(2));
    }
    CHECK_THROWS_AS(read_raster(tmp.path / "deep.pgm"), RasterError);
    {
      std::ofstream f(tmp.path / "junk.png", std::ios::binary);
      f << "not an image";
    }
    CHECK_THROWS_AS(read_raster(tmp.path / "junk.png"), RasterError);
    CHECK_THROWS_AS(read_raster(tmp.path / "missing.png"), RasterError);
    write_raster(tmp.path / "gray.png", Image8(2, 2, 1));
    CHECK_THROWS_AS(load_image(tmp.path / "gray.png"), RasterError);
    write_raster(tmp.path / "rgb.png", Image8(2, 2, 3));
    CHECK_THROWS_AS(load_labels(tmp.path / "rgb.png"), RasterError);
  }

  TEST_CASE("images become tensors in [0, 1]") {
    Image8 img(1, 2, 3);
    img.data = {0, 51, 255, 255, 0, 102};
    const auto t = to_tensor<double>({img});
    CHECK(t.shape() == Shape{1, 3, 1, 2});
    CHECK(t.value()[0] == 0.0);
    CHECK(t.value()[1] == 1.0);
    CHECK(t.value()[2] == doctest::Approx(0.2));
    CHECK(t.value()[5] == doctest::Approx(0.4));
  }

  TEST_CASE("palette colorizes by id and loads from text") {
    TempDir tmp;
    {
      std::ofstream f(tmp.path / "pal.txt");
      f << "# id r g b\n0 1 2 3\n1 4 5 6\n";
    }
    const auto pal = Palette::load(tmp.path / "pal.txt");
    REQUIRE(pal.colors.size() == 2);
    LabelMap lm(1, 2);
    lm.ids = {1, 0};
    const auto img = pal.colorize(lm);
    CHECK(img.data == std::vector<std::uint8_t>{4, 5, 6, 1, 2, 3});
  }
}

TEST_SUITE("downsampling") {
  TEST_CASE("labels keep the top-left pixel of each cell") {
    const LabelMap constant(8, 8, 2);
    const auto d = downsample_labels(constant, 4);
    CHECK(d.height == 2);
    CHECK(d.width == 2);
    CHECK(d.ids == std::vector<std::uint8_t>(4, 2));

    LabelMap blocks(8, 6);
    for (Index r = 0; r < 8; ++r)
      for (Index c = 0; c < 6; ++c) blocks.at(r, c) = static_cast<std::uint8_t>((r / 2) * 3 + c / 2);
    const auto b = downsample_labels(blocks, 2);
    for (Index r = 0; r < 4; ++r)
      for (Index c = 0; c < 3; ++c) CHECK(b.at(r, c) == (r * 3 + c));

    const auto odd = downsample_labels(LabelMap(5, 3, 1), 2);
    CHECK(odd.height == 3);
    CHECK(odd.width == 2);
  }

  TEST_CASE("images are mean-pooled") {
    std::mt19937_64 rng(52);
    const auto x = random_tensor<double>({1, 3, 8, 8}, rng);
    const auto y = avg_pool2d(x, 4);
    for (Index c = 0; c < 3; ++c)
      for (Index i = 0; i < 2; ++i)
        for (Index j = 0; j < 2; ++j) {
          double s = 0;
          for (Index a = 0; a < 4; ++a)
            for (Index b = 0; b < 4; ++b) s += x.value()[(c * 8 + i * 4 + a) * 8 + j * 4 + b];
          CHECK(y.value()[(c * 2 + i) * 2 + j] == doctest::Approx(s / 16));
        }
  }
}

TEST_SUITE("tiling") {
  TEST_CASE("grid for 512 x 512 with 256 tiles at a quarter overlap") {
    const auto g = make_tile_grid(512, 512, 256, 0.25);
    CHECK(g.stride == 192);
    CHECK(g.row_origins == std::vector<Index>{0, 192, 256});
    CHECK(g.col_origins == std::vector<Index>{0, 192, 256});
    CHECK(g.origins().size() == 9);
    CHECK(g.overlap() == doctest::Approx(0.25));
  }

  TEST_CASE("tile equal to the source is one tile, a larger tile is an error") {
    const auto g = make_tile_grid(64, 48, 48);
    CHECK(g.col_origins == std::vector<Index>{0});
    CHECK(make_tile_grid(48, 48, 48).origins() == std::vector<TileOrigin>{{0, 0}});
    CHECK_THROWS_AS(make_tile_grid(40, 64, 48), ContractError);
  }

  TEST_CASE("every pixel is covered with the analytic multiplicity") {
    std::mt19937_64 rng(53);
    for (int trial = 0; trial < 60; ++trial) {
      const Index tile = std::uniform_int_distribution<Index>(4, 40)(rng);
      const Index h = tile + std::uniform_int_distribution<Index>(0, 90)(rng);
      const Index w = tile + std::uniform_int_distribution<Index>(0, 90)(rng);
      const double overlap = std::uniform_real_distribution<double>(0.0, 0.6)(rng);
      const auto g = make_tile_grid(h, w, tile, overlap);
      std::vector<int> count(static_cast<std::size_t>(h * w), 0);
      for (const auto& o : g.origins()) {
        CHECK(o.row + tile <= h);
        CHECK(o.col + tile <= w);
        for (Index r = o.row; r < o.row + tile; ++r)
          for (Index c = o.col; c < o.col + tile; ++c) ++count[static_cast<std::size_t>(r * w + c)];
      }
      bool ok = true;
      for (Index r = 0; r < h; ++r)
        for (Index c = 0; c < w; ++c) {
          const Index expect = axis_multiplicity(r, h, tile, g.stride) * axis_multiplicity(c, w, tile, g.stride);
          ok = ok && expect >= 1 && count[static_cast<std::size_t>(r * w + c)] == expect;
        }
      CHECK(ok);
    }
  }

  TEST_CASE("merging: identity, mean of two, last write and the accumulation oracle") {
    std::mt19937_64 rng(54);
    const auto one = random_tensor<double>({1, 2, 8, 8}, rng);
    CHECK(max_abs_diff(merge_predictions<double>({one}, make_tile_grid(8, 8, 8)).value(), one.value()) == 0.0);

    const auto g = make_tile_grid(4, 6, 4, 0.5);
    REQUIRE(g.col_origins == std::vector<Index>{0, 2});
    const auto m = merge_predictions<double>({Tensor<double>::full({1, 1, 4, 4}, 1.0), Tensor<double>::full({1, 1, 4, 4}, 4.0)}, g);
    CHECK(m.value()[0] == 1.0);
    CHECK(m.value()[2] == 2.5);
    CHECK(m.value()[5] == 4.0);
    const auto lw = merge_predictions<double>(
        {Tensor<double>::full({1, 1, 4, 4}, 1.0), Tensor<double>::full({1, 1, 4, 4}, 4.0)}, g, MergeMode::LastWrite);
    CHECK(lw.value()[2] == 4.0);

    const auto big = make_tile_grid(23, 31, 10, 0.25);
    std::vector<Tensor<double>> tiles;
    std::vector<double> acc(2 * 23 * 31, 0.0), cnt(23 * 31, 0.0);
    for (const auto& o : big.origins()) {
      tiles.push_back(random_tensor<double>({1, 2, 10, 10}, rng));
      for (Index c = 0; c < 2; ++c)
        for (Index i = 0; i < 10; ++i)
          for (Index j = 0; j < 10; ++j) {
            acc[static_cast<std::size_t>((c * 23 + o.row + i) * 31 + o.col + j)] += tiles.back().value()[(c * 10 + i) * 10 + j];
            if (c == 0) cnt[static_cast<std::size_t>((o.row + i) * 31 + o.col + j)] += 1;
          }
    }
    const auto merged = merge_predictions(tiles, big);
    double err = 0;
    for (Index c = 0; c < 2; ++c)
      for (Index p = 0; p < 23 * 31; ++p)
        err = std::max(err, std::abs(merged.value()[c * 23 * 31 + p] - acc[static_cast<std::size_t>(c * 23 * 31 + p)] /
                                                                             cnt[static_cast<std::size_t>(p)]));
    CHECK(err < 1e-14);
  }

  TEST_CASE("uncovered pixels are a contract violation") {
    auto g = make_tile_grid(8, 8, 4, 0.0);
    g.row_origins = {0};
    std::vector<Tensor<double>> tiles(g.origins().size(), Tensor<double>::zeros({1, 1, 4, 4}));
    CHECK_THROWS_AS(merge_predictions(tiles, g), ContractError);
  }

  TEST_CASE("a pointwise model predicts identically tiled and whole") {
    std::mt19937_64 rng(55);
    const auto w = random_tensor<double>({3, 3, 1, 1}, rng), b = random_tensor<double>({3}, rng);
    const TileModel<double> model = [&](const Tensor<double>& x) { return conv2d(x, w, b); };
    for (auto [h, wd, tile] : {std::tuple<Index, Index, Index>{64, 64, 32}, {50, 70, 24}, {40, 40, 40}, {20, 30, 32}}) {
      const auto img = random_tensor<double>({1, 3, h, wd}, rng, 0, 1);
      const auto whole = model(img);
      for (auto mode : {MergeMode::Mean, MergeMode::LastWrite}) {
        const auto tiled = predict_tiled(img, tile, 0.25, mode, model);
        CHECK(tiled.shape() == whole.shape());
        CHECK((tiled.value() == whole.value()).all());
      }
    }
  }

  TEST_CASE("a constant model yields a constant map whatever the tiling") {
    const TileModel<double> model = [](const Tensor<double>& x) {
      return Tensor<double>::full({1, 2, x.dim(2), x.dim(3)}, 0.5);
    };
    for (Index tile : {16, 24, 40}) {
      const auto out = predict_tiled(Tensor<double>::zeros({1, 3, 40, 40}), tile, 0.25, MergeMode::Mean, model);
      CHECK((out.value() == 0.5).all());
    }
  }
}

TEST_SUITE("augmentation") {
  TEST_CASE("double flips are identities and move labels with pixels") {
    std::mt19937_64 rng(61);
    const auto img = random_image(5, 6, 3, rng);
    LabelMap lm(5, 6);
    for (auto& v : lm.ids) v = static_cast<std::uint8_t>(rng() % 4);
    CHECK(flip_horizontal(flip_horizontal(img)) == img);
    CHECK(flip_vertical(flip_vertical(img)) == img);
    CHECK(flip_horizontal(flip_horizontal(lm)) == lm);
    CHECK(flip_horizontal(img).at(2, 0, 1) == img.at(2, 5, 1));
    CHECK(flip_vertical(lm).at(0, 3) == lm.at(4, 3));
  }

  TEST_CASE("equalizing a uniform histogram is near identity") {
    Image8 img(16, 16, 3);
    for (Index i = 0; i < 256; ++i)
      for (int c = 0; c < 3; ++c) img.data[static_cast<std::size_t>(i * 3 + c)] = static_cast<std::uint8_t>((i * 7 + c) % 256);
    const auto eq = equalize_histogram(img);
    int worst = 0;
    for (std::size_t i = 0; i < img.data.size(); ++i) worst = std::max(worst, std::abs(int(eq.data[i]) - int(img.data[i])));
    CHECK(worst <= 1);
  }

  TEST_CASE("blurring a constant image changes nothing") {
    const Image8 img(7, 9, 3, 123);
    CHECK(gaussian_blur3(img, 1.0) == img);
    CHECK(gaussian_blur3(img, 2.5) == img);
  }

  TEST_CASE("augmentation keeps the label value set and leaves labels alone without flips") {
    std::mt19937_64 rng(62);
    for (int trial = 0; trial < 20; ++trial) {
      auto img = random_image(8, 8, 3, rng);
      LabelMap lm(8, 8);
      for (auto& v : lm.ids) v = rng() % 5 == 0 ? kIgnoreId : static_cast<std::uint8_t>(rng() % 3);
      const std::set<std::uint8_t> before(lm.ids.begin(), lm.ids.end());
      auto l2 = lm;
      augment(img, l2, rng);
      CHECK(std::set<std::uint8_t>(l2.ids.begin(), l2.ids.end()) == before);

      AugmentOptions photometric;
      photometric.p_hflip = photometric.p_vflip = 0.0;
      photometric.p_equalize = photometric.p_blur = 1.0;
      auto l3 = lm;
      augment(img, l3, rng, photometric);
      CHECK(l3 == lm);
    }
  }
}

TEST_SUITE("synthetic data") {
  TEST_CASE("same seed gives byte-identical files") {
    TempDir tmp;
    SynthSpec spec;
    spec.n_images = 3;
    spec.seed = 77;
    save_dataset(tmp.path / "a", generate_synthetic(spec));
    save_dataset(tmp.path / "b", generate_synthetic(spec));
    for (const auto& e : fs::recursive_directory_iterator(tmp.path / "a")) {
      if (!e.is_regular_file()) continue;
      const auto other = tmp.path / "b" / fs::relative(e.path(), tmp.path / "a");
      CHECK(file_bytes(e.path()) == file_bytes(other));
    }
    const auto first = generate_synthetic(spec)[0].image;
    spec.seed = 78;
    CHECK_FALSE(generate_synthetic(spec)[0].image == first);
  }

  TEST_CASE("labels stay below the class count") {
    for (auto kind : {SynthKind::Shapes, SynthKind::LongRange}) {
      SynthSpec spec;
      spec.kind = kind;
      spec.n_classes = kind == SynthKind::Shapes ? 5 : 2;
      spec.n_images = 10;
      for (const auto& s : generate_synthetic(spec)) {
        for (auto v : s.labels.ids) CHECK(v < spec.n_classes);
        CHECK(s.image.channels == 3);
      }
    }
  }

  TEST_CASE("class areas follow the requested fractions over 100 images") {
    SynthSpec spec;
    spec.n_images = 100;
    spec.class_fractions = {0.5, 0.3, 0.2};
    spec.seed = 5;
    std::array<double, 3> area{};
    double total = 0;
    for (const auto& s : generate_synthetic(spec)) {
      for (auto v : s.labels.ids) area[v] += 1;
      total += double(s.labels.ids.size());
    }
    for (std::size_t c = 0; c < 3; ++c) {
      const double got = area[c] / total;
      CHECK(std::abs(got - spec.class_fractions[c]) <= 0.1 * spec.class_fractions[c]);
    }
  }

  TEST_CASE("long-range bands share one texture away from the markers") {
    SynthSpec spec;
    spec.kind = SynthKind::LongRange;
    spec.n_classes = 2;
    spec.n_images = 20;
    std::array<double, 2> sum{}, cnt{};
    for (const auto& s : generate_synthetic(spec)) {
      for (Index r = 0; r < s.image.height; ++r)
        for (Index c = s.image.width / 8; c < s.image.width; ++c) {
          const auto cls = s.labels.at(r, c);
          for (int ch = 0; ch < 3; ++ch) sum[cls] += s.image.at(r, c, ch);
          cnt[cls] += 3;
        }
    }
    REQUIRE(cnt[0] > 0);
    REQUIRE(cnt[1] > 0);
    CHECK(std::abs(sum[0] / cnt[0] - sum[1] / cnt[1]) < 1.0);
  }

  TEST_CASE("offline tiles: counts follow floor arithmetic and the holdout is ten percent") {
    SynthSpec spec;
    spec.height = 70;
    spec.width = 100;
    spec.n_images = 4;
    const auto data = generate_synthetic(spec);
    const auto [train, val] = cut_tiles(data, 32, 0.1, 3);
    const std::size_t total = 4 * (70 / 32) * (100 / 32);
    CHECK(train.size() + val.size() == total);
    CHECK(val.size() == static_cast<std::size_t>(std::lround(0.1 * double(total))));
    std::set<std::string> stems;
    for (const auto& t : train) stems.insert(t.stem);
    for (const auto& t : val) stems.insert(t.stem);
    CHECK(stems.size() == total);
    CHECK(stems.count("synth_0000_r32_c64") == 1);
  }

  TEST_CASE("dataset directories round trip") {
    TempDir tmp;
    SynthSpec spec;
    spec.n_images = 2;
    const auto data = generate_synthetic(spec);
    save_dataset(tmp.path, data);
    const auto back = load_dataset(tmp.path);
    REQUIRE(back.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(back[i].stem == data[i].stem);
      CHECK(back[i].image == data[i].image);
      CHECK(back[i].labels == data[i].labels);
    }
    CHECK_THROWS(load_dataset(tmp.path / "nope"));
  }
}
