#pragma once

#include "slc/data.hpp"
#include "slc/tiling.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace slc::cli {

/// Exit codes shared by every command.
inline constexpr int kOk = 0;
inline constexpr int kUsageError = 1;
inline constexpr int kNumericalAbort = 2;

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;  // overrides out_dir
  bool fp64 = false;
};

struct PredictArgs {
  std::string checkpoint;
  std::string image;  // a file, or a directory of images
  std::string out;    // label PNG, or a directory when `image` is one
  std::string overlay;
  std::string palette;
  Index tile = 0;  // 0 = tile size stored in the checkpoint, else 256
  double overlap = 0.25;
  MergeMode merge = MergeMode::Mean;
  bool fp64 = false;
};

struct EvalArgs {
  std::string pred_dir;
  std::string gt_dir;
  std::string out = ".";  // directory receiving metrics.txt
  std::vector<int> ignore;
  int n_classes = 0;  // 0 = one more than the largest id seen
};

struct SynthArgs {
  std::string out;
  std::uint64_t seed = 0;
  std::string kind = "shapes";
  int n_images = 8;
  Index size = 64;
  int n_classes = 3;
  double noise = 20.0;
};

struct TilesArgs {
  std::string data;
  std::string out;
  Index size = 256;
  double holdout = 0.1;
  std::uint64_t seed = 0;
};

struct GradcheckArgs {
  std::uint64_t seed = 0;
  int instances = 20;
};

int train(const TrainArgs& a, std::ostream& out, std::ostream& err);
int predict(const PredictArgs& a, std::ostream& out, std::ostream& err);
int eval(const EvalArgs& a, std::ostream& out, std::ostream& err);
int synth(const SynthArgs& a, std::ostream& out, std::ostream& err);
int tiles(const TilesArgs& a, std::ostream& out, std::ostream& err);
int gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream& err);

}  // namespace slc::cli
