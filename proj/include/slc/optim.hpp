#pragma once

#include "slc/tensor.hpp"

#include <cmath>
#include <vector>

namespace slc {

template <typename S>
struct AdamState {
  std::vector<Array<S>> first_moment;
  std::vector<Array<S>> second_moment;
  long step = 0;
};

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update. Parameters without an accumulated
/// gradient are treated as having a zero gradient.
template <typename S>
void adam_step(std::vector<Tensor<S>>& params, AdamState<S>& state, const AdamOptions& opt) {
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.push_back(Array<S>::Zero(p.size()));
      state.second_moment.push_back(Array<S>::Zero(p.size()));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                     " tensors but " + std::to_string(params.size()) + " were given");
  }
  ++state.step;
  const S b1 = S(opt.beta1), b2 = S(opt.beta2);
  const S c1 = S(1) - S(std::pow(opt.beta1, double(state.step)));
  const S c2 = S(1) - S(std::pow(opt.beta2, double(state.step)));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<S>& p = params[i];
    Array<S>& m = state.first_moment[i];
    Array<S>& v = state.second_moment[i];
    if (m.size() != p.size()) throw ShapeError("adam_step: state size mismatch for tensor " + std::to_string(i));
    if (p.has_grad()) {
      const Array<S>& g = p.grad();
      m = b1 * m + (S(1) - b1) * g;
      v = b2 * v + (S(1) - b2) * g.square();
    } else {
      m *= b1;
      v *= b2;
    }
    p.value() -= S(opt.lr) * (m / c1) / ((v / c2).sqrt() + S(opt.eps));
  }
}

/// Adam over a fixed parameter list.
template <typename S>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Tensor<S>> params, AdamOptions options) : params_(std::move(params)), options_(options) {}

  void step() { adam_step(params_, state_, options_); }
  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }
  void set_lr(double lr) { options_.lr = lr; }
  double lr() const { return options_.lr; }
  const AdamState<S>& state() const { return state_; }

 private:
  std::vector<Tensor<S>> params_;
  AdamState<S> state_;
  AdamOptions options_;
};

}  // namespace slc
