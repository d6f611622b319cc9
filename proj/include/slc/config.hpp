#pragma once

#include "slc/data.hpp"
#include "slc/network.hpp"
#include "slc/tiling.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace slc {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  ModelConfig model;
  int epochs = 20;
  int batch_size = 8;
  double lr = 1e-4;
  std::vector<int> lr_drop_epochs;
  Index tile_size = 64;
  double overlap = 0.25;
  MergeMode merge = MergeMode::Mean;
  bool augment = true;
  AugmentOptions augment_options;
  std::uint8_t ignore_id = kIgnoreId;
  std::string train_dir;
  std::string val_dir;
  std::string out_dir = "run";
  std::string resume;  // checkpoint to continue from
  std::uint64_t seed = 0;
};

/// Parses `key = value` lines; `#` starts a comment. Unknown keys, repeated
/// keys and malformed values raise ConfigError naming the line.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Every accepted key with its current value, one `key = value` per line.
std::string format_config(const RunConfig& cfg);

std::vector<int> parse_int_list(const std::string& text);

}  // namespace slc
