#pragma once

#include "slc/network.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace slc {

/// One stored tensor. Values are kept as 32-bit reals, as on disk.
struct StoredTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Layout: "SLCW", u32 version (1), u32 tensor count, then per tensor a u16
/// name length, the UTF-8 name, u8 rank, rank x u32 dims and row-major f32
/// values. All integers and reals are little-endian.
void write_checkpoint(const std::filesystem::path& path, const std::vector<StoredTensor>& tensors);
std::vector<StoredTensor> read_checkpoint(const std::filesystem::path& path);

/// Parameters, batchnorm buffers and `meta.*` tensors describing the
/// architecture, so a model can be rebuilt from the file alone. A positive
/// `tile_size` is recorded as the default tile for prediction.
template <typename S>
void save_model(const std::filesystem::path& path, SlcNet<S>& model, Index tile_size = 0);

/// Architecture recorded in the `meta.*` tensors.
ModelConfig config_from_checkpoint(const std::vector<StoredTensor>& tensors);

/// Training tile size stored by save_model, or 0.
Index tile_size_from_checkpoint(const std::vector<StoredTensor>& tensors);

/// Copies stored values into same-named model tensors. With `partial` false
/// every model tensor must be present; shapes must always match. Returns the
/// number of tensors loaded.
template <typename S>
std::size_t load_state(Module<S>& model, const std::vector<StoredTensor>& tensors, bool partial = false);

template <typename S>
SlcNet<S> load_model(const std::filesystem::path& path);

}  // namespace slc
