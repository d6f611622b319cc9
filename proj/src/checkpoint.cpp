#include "slc/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace slc {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'S', 'L', 'C', 'W'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put(std::ostream& out, T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& in, const fs::path& path) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw CheckpointError(path.string() + ": truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

const std::array<int, 4>& lateral_list() {
  static const std::array<int, 4> s{2, 4, 8, 16};
  return s;
}

std::vector<float> scale_mask(const std::vector<int>& scales) {
  std::vector<float> m;
  for (int s : lateral_list()) m.push_back(std::find(scales.begin(), scales.end(), s) != scales.end() ? 1.0f : 0.0f);
  return m;
}

std::vector<int> mask_scales(const std::vector<float>& mask) {
  std::vector<int> out;
  for (std::size_t i = 0; i < mask.size() && i < 4; ++i) {
    if (mask[i] != 0.0f) out.push_back(lateral_list()[i]);
  }
  return out;
}

std::vector<StoredTensor> meta_tensors(const ModelConfig& c) {
  std::vector<StoredTensor> m;
  auto add = [&](const std::string& name, std::vector<float> v) {
    m.push_back({"meta." + name, {static_cast<Index>(v.size())}, std::move(v)});
  };
  add("n_classes", {float(c.n_classes)});
  add("in_channels", {float(c.in_channels)});
  std::vector<float> widths;
  for (Index w : c.stage_widths) widths.push_back(float(w));
  add("stage_widths", widths);
  add("fcsm_scales", scale_mask(c.fcsm_scales));
  add("arfe_scales", scale_mask(c.arfe_scales));
  add("dilations", {float(c.d_small), float(c.d_large)});
  add("flags", {c.supervised_fcsm ? 1.0f : 0.0f, c.backbone == BackboneKind::ResNet50 ? 1.0f : 0.0f,
                c.stage_order == StageOrder::ColFirst ? 1.0f : 0.0f, c.target_norm == TargetNorm::Uniform ? 1.0f : 0.0f});
  return m;
}

}  // namespace

void write_checkpoint(const fs::path& path, const std::vector<StoredTensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const StoredTensor& t : tensors) {
    if (t.name.size() > 0xFFFF) throw CheckpointError("tensor name too long: " + t.name.substr(0, 64));
    if (t.shape.size() > 0xFF) throw CheckpointError("tensor rank too large: " + t.name);
    if (static_cast<Index>(t.values.size()) != numel(t.shape)) throw CheckpointError("value count mismatch: " + t.name);
    put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.size()));
    for (Index d : t.shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (float v : t.values) put<float>(out, v);
  }
  if (!out) throw CheckpointError("failed writing " + path.string());
}

std::vector<StoredTensor> read_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw CheckpointError(path.string() + ": not an SLCW checkpoint");
  const auto version = get<std::uint32_t>(in, path);
  if (version != kVersion) throw CheckpointError(path.string() + ": unsupported version " + std::to_string(version));
  const auto count = get<std::uint32_t>(in, path);
  std::vector<StoredTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    StoredTensor t;
    t.name.resize(get<std::uint16_t>(in, path));
    in.read(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    const auto rank = get<std::uint8_t>(in, path);
    for (int d = 0; d < rank; ++d) t.shape.push_back(get<std::uint32_t>(in, path));
    t.values.resize(static_cast<std::size_t>(numel(t.shape)));
    for (float& v : t.values) v = get<float>(in, path);
    out.push_back(std::move(t));
  }
  return out;
}

template <typename S>
void save_model(const fs::path& path, SlcNet<S>& model, Index tile_size) {
  std::vector<StoredTensor> tensors = meta_tensors(model.config());
  if (tile_size > 0) tensors.push_back({"meta.tile_size", {1}, {float(tile_size)}});
  for (const auto& nt : model.state()) {
    StoredTensor t{nt.name, nt.tensor.shape(), {}};
    const S* v = nt.tensor.data();
    t.values.assign(v, v + nt.tensor.size());
    tensors.push_back(std::move(t));
  }
  write_checkpoint(path, tensors);
}

ModelConfig config_from_checkpoint(const std::vector<StoredTensor>& tensors) {
  std::map<std::string, const StoredTensor*> meta;
  for (const auto& t : tensors) {
    if (t.name.rfind("meta.", 0) == 0) meta[t.name.substr(5)] = &t;
  }
  auto need = [&](const std::string& name, std::size_t size) -> const std::vector<float>& {
    auto it = meta.find(name);
    if (it == meta.end()) throw CheckpointError("checkpoint lacks meta." + name);
    if (it->second->values.size() != size) throw CheckpointError("checkpoint meta." + name + " has the wrong size");
    return it->second->values;
  };
  ModelConfig c;
  c.n_classes = static_cast<int>(need("n_classes", 1)[0]);
  c.in_channels = static_cast<int>(need("in_channels", 1)[0]);
  const auto& w = need("stage_widths", 5);
  for (int i = 0; i < 5; ++i) c.stage_widths[static_cast<std::size_t>(i)] = static_cast<Index>(w[static_cast<std::size_t>(i)]);
  c.fcsm_scales = mask_scales(need("fcsm_scales", 4));
  c.arfe_scales = mask_scales(need("arfe_scales", 4));
  const auto& d = need("dilations", 2);
  c.d_small = static_cast<int>(d[0]);
  c.d_large = static_cast<int>(d[1]);
  const auto& f = need("flags", 4);
  c.supervised_fcsm = f[0] != 0.0f;
  c.backbone = f[1] != 0.0f ? BackboneKind::ResNet50 : BackboneKind::Tiny;
  c.stage_order = f[2] != 0.0f ? StageOrder::ColFirst : StageOrder::RowFirst;
  c.target_norm = f[3] != 0.0f ? TargetNorm::Uniform : TargetNorm::Softmax;
  c.validate();
  return c;
}

Index tile_size_from_checkpoint(const std::vector<StoredTensor>& tensors) {
  for (const auto& t : tensors) {
    if (t.name == "meta.tile_size" && t.values.size() == 1) return static_cast<Index>(t.values[0]);
  }
  return 0;
}

template <typename S>
std::size_t load_state(Module<S>& model, const std::vector<StoredTensor>& tensors, bool partial) {
  std::map<std::string, const StoredTensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t;
  std::size_t loaded = 0;
  for (auto& nt : model.state()) {
    auto it = by_name.find(nt.name);
    if (it == by_name.end()) {
      if (partial) continue;
      throw CheckpointError("checkpoint lacks tensor " + nt.name);
    }
    if (it->second->shape != nt.tensor.shape()) {
      throw CheckpointError("tensor " + nt.name + " stored as " + to_string(it->second->shape) + " but model expects " +
                            to_string(nt.tensor.shape()));
    }
    Array<S>& dst = nt.tensor.value();
    for (Index i = 0; i < dst.size(); ++i) dst[i] = static_cast<S>(it->second->values[static_cast<std::size_t>(i)]);
    ++loaded;
  }
  return loaded;
}

template <typename S>
SlcNet<S> load_model(const fs::path& path) {
  const auto tensors = read_checkpoint(path);
  SlcNet<S> model(config_from_checkpoint(tensors));
  load_state(model, tensors);
  return model;
}

template void save_model(const fs::path&, SlcNet<float>&, Index);
template void save_model(const fs::path&, SlcNet<double>&, Index);
template std::size_t load_state(Module<float>&, const std::vector<StoredTensor>&, bool);
template std::size_t load_state(Module<double>&, const std::vector<StoredTensor>&, bool);
template SlcNet<float> load_model<float>(const fs::path&);
template SlcNet<double> load_model<double>(const fs::path&);

}  // namespace slc
