#include "slc/raster.hpp"

#include <png.h>

#include <cctype>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

namespace slc {

namespace fs = std::filesystem;

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw RasterError("cannot open " + path.string());
  return f;
}

Image8 read_png(const fs::path& path) {
  FilePtr file = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw RasterError("libpng: out of memory");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw RasterError("libpng: out of memory");
  }
  Image8 img;
  std::string problem;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw RasterError(path.string() + ": corrupt PNG");
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (depth != 8) {
    problem = std::to_string(depth) + "-bit samples (only 8-bit is supported)";
  } else if (color == PNG_COLOR_TYPE_GRAY) {
    img.channels = 1;
  } else if (color == PNG_COLOR_TYPE_RGB) {
    img.channels = 3;
  } else if (color == PNG_COLOR_TYPE_PALETTE) {
    problem = "palette color type (expected gray or RGB)";
  } else {
    problem = "an alpha channel (expected gray or RGB)";
  }
  if (!problem.empty()) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw RasterError(path.string() + ": unsupported PNG with " + problem);
  }
  img.height = png_get_image_height(png, info);
  img.width = png_get_image_width(png, info);
  img.data.resize(static_cast<std::size_t>(img.height * img.width * img.channels));
  rows.resize(static_cast<std::size_t>(img.height));
  for (Index r = 0; r < img.height; ++r) rows[static_cast<std::size_t>(r)] = &img.data[static_cast<std::size_t>(r * img.width * img.channels)];
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const fs::path& path, const Image8& img) {
  if (img.channels != 1 && img.channels != 3) throw RasterError("PNG writer supports 1 or 3 channels");
  FilePtr file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw RasterError("libpng: out of memory");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw RasterError("libpng: out of memory");
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw RasterError("failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (Index r = 0; r < img.height; ++r) {
    rows[static_cast<std::size_t>(r)] = const_cast<png_bytep>(&img.data[static_cast<std::size_t>(r * img.width * img.channels)]);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Skips whitespace and '#' comments between PNM header fields.
long read_pnm_field(std::istream& in) {
  while (true) {
    const int c = in.peek();
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  long v = -1;
  in >> v;
  return v;
}

Image8 read_pnm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RasterError("cannot open " + path.string());
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
    throw RasterError(path.string() + ": only binary PGM (P5) and PPM (P6) are supported");
  }
  const long w = read_pnm_field(in), h = read_pnm_field(in), maxval = read_pnm_field(in);
  if (w <= 0 || h <= 0) throw RasterError(path.string() + ": bad PNM header");
  if (maxval != 255) throw RasterError(path.string() + ": maxval " + std::to_string(maxval) + " (only 8-bit is supported)");
  in.get();  // single whitespace before the raster
  Image8 img(h, w, magic[1] == '5' ? 1 : 3);
  in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (!in) throw RasterError(path.string() + ": truncated raster");
  return img;
}

void write_pnm(const fs::path& path, const Image8& img) {
  if (img.channels != 1 && img.channels != 3) throw RasterError("PNM writer supports 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RasterError("cannot open " + path.string());
  out << (img.channels == 1 ? "P5" : "P6") << "\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (!out) throw RasterError("failed writing " + path.string());
}

}  // namespace

Image8 read_raster(const fs::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw RasterError("cannot open " + path.string());
  unsigned char sig[8] = {0};
  probe.read(reinterpret_cast<char*>(sig), 8);
  if (probe.gcount() == 8 && png_sig_cmp(sig, 0, 8) == 0) return read_png(path);
  if (probe.gcount() >= 2 && sig[0] == 'P') return read_pnm(path);
  throw RasterError(path.string() + ": not a PNG, PGM or PPM file");
}

void write_raster(const fs::path& path, const Image8& img) {
  const auto ext = path.extension().string();
  if (ext == ".pgm" || ext == ".ppm") {
    write_pnm(path, img);
  } else {
    write_png(path, img);
  }
}

Image8 load_image(const fs::path& path) {
  Image8 img = read_raster(path);
  if (img.channels != 3) throw RasterError(path.string() + ": expected an RGB image, got " + std::to_string(img.channels) + " channel(s)");
  return img;
}

LabelMap load_labels(const fs::path& path, std::uint8_t ignore_id) {
  Image8 img = read_raster(path);
  if (img.channels != 1) throw RasterError(path.string() + ": expected a single-channel label raster");
  return to_labels(img, ignore_id);
}

void save_labels(const fs::path& path, const LabelMap& labels) { write_raster(path, to_image(labels)); }

Image8 to_image(const LabelMap& labels) {
  Image8 img(labels.height, labels.width, 1);
  img.data = labels.ids;
  return img;
}

LabelMap to_labels(const Image8& gray, std::uint8_t ignore_id) {
  if (gray.channels != 1) throw RasterError("label raster must have one channel");
  LabelMap m(gray.height, gray.width, 0, ignore_id);
  m.ids = gray.data;
  return m;
}

template <typename S>
Tensor<S> to_tensor(const std::vector<Image8>& images) {
  if (images.empty()) throw ContractError("to_tensor: no images");
  const Index h = images[0].height, w = images[0].width, hw = h * w;
  Array<S> v(static_cast<Index>(images.size()) * 3 * hw);
  for (std::size_t b = 0; b < images.size(); ++b) {
    const Image8& img = images[b];
    if (img.height != h || img.width != w || img.channels != 3) {
      throw ShapeError("to_tensor: images must all be RGB " + std::to_string(h) + "x" + std::to_string(w));
    }
    for (int c = 0; c < 3; ++c) {
      for (Index p = 0; p < hw; ++p) {
        v[(static_cast<Index>(b) * 3 + c) * hw + p] = S(img.data[static_cast<std::size_t>(p * 3 + c)]) / S(255);
      }
    }
  }
  return Tensor<S>({static_cast<Index>(images.size()), 3, h, w}, std::move(v));
}

template Tensor<float> to_tensor<float>(const std::vector<Image8>&);
template Tensor<double> to_tensor<double>(const std::vector<Image8>&);

Palette Palette::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw RasterError("cannot open palette " + path.string());
  Palette p;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    int id, r, g, b;
    if (!(ss >> id)) continue;
    if (!(ss >> r >> g >> b) || id < 0 || id > 255 || r < 0 || r > 255 || g < 0 || g > 255 || b < 0 || b > 255) {
      throw RasterError(path.string() + ":" + std::to_string(lineno) + ": expected `id r g b` with values 0..255");
    }
    if (static_cast<std::size_t>(id) >= p.colors.size()) p.colors.resize(static_cast<std::size_t>(id) + 1, {0, 0, 0});
    p.colors[static_cast<std::size_t>(id)] = {std::uint8_t(r), std::uint8_t(g), std::uint8_t(b)};
  }
  return p;
}

Palette Palette::standard(int n_classes) {
  static const std::array<std::array<std::uint8_t, 3>, 8> base{{{255, 255, 255},
                                                                {0, 0, 255},
                                                                {0, 255, 255},
                                                                {0, 255, 0},
                                                                {255, 255, 0},
                                                                {255, 0, 0},
                                                                {128, 0, 128},
                                                                {255, 128, 0}}};
  Palette p;
  for (int i = 0; i < n_classes; ++i) p.colors.push_back(base[static_cast<std::size_t>(i) % base.size()]);
  return p;
}

Image8 Palette::colorize(const LabelMap& labels) const {
  Image8 img(labels.height, labels.width, 3);
  for (std::size_t i = 0; i < labels.ids.size(); ++i) {
    const std::uint8_t id = labels.ids[i];
    const std::array<std::uint8_t, 3> c = id < colors.size() ? colors[id] : std::array<std::uint8_t, 3>{0, 0, 0};
    for (int ch = 0; ch < 3; ++ch) img.data[i * 3 + static_cast<std::size_t>(ch)] = c[static_cast<std::size_t>(ch)];
  }
  return img;
}

}  // namespace slc
