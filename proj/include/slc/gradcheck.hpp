#pragma once

#include "slc/tensor.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace slc {

/// ||analytic - numeric|| / max(||analytic||, ||numeric||) over every entry
/// of every input, with central differences of the given step. `f` must
/// return a scalar and is re-evaluated with gradients off for the probes.
double gradient_error(const std::function<Tensor<double>()>& f, const std::vector<Tensor<double>>& inputs,
                      double step = 1e-5);

struct GradcheckResult {
  std::string name;
  int instances = 0;
  double max_error = 0;
  double tolerance = 0;
  bool passed() const { return max_error < tolerance; }
};

/// Random-instance checks of every differentiable operation, the attention
/// stages, the losses, the correlation block and the receptive-field block.
std::vector<GradcheckResult> run_gradcheck_suite(std::uint64_t seed, int instances = 20);

}  // namespace slc
