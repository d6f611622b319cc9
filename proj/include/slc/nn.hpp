#pragma once

#include "slc/ops.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace slc {

template <typename S>
struct NamedTensor {
  std::string name;
  Tensor<S> tensor;
};

template <typename S>
class Module;

/// Walks a module tree. Names are dot-qualified paths such as
/// `decoder.ffm16.refine.conv.weight`.
template <typename S>
class ModuleVisitor {
 public:
  virtual ~ModuleVisitor() = default;
  virtual void parameter(const std::string& /*name*/, Tensor<S>& /*p*/) {}
  virtual void buffer(const std::string& /*name*/, Tensor<S>& /*b*/) {}
  virtual void training_flag(bool& /*flag*/) {}

  void child(const std::string& name, Module<S>& m) {
    prefix_.push_back(name);
    m.visit(*this);
    prefix_.pop_back();
  }

  std::string qualified(const std::string& name) const {
    std::string out;
    for (const auto& p : prefix_) out += p + ".";
    return out + name;
  }

 private:
  std::vector<std::string> prefix_;
};

template <typename S>
class Module {
 public:
  virtual ~Module() = default;
  virtual void visit(ModuleVisitor<S>& v) = 0;

  std::vector<NamedTensor<S>> parameters() {
    struct Collect : ModuleVisitor<S> {
      std::vector<NamedTensor<S>> out;
      void parameter(const std::string& n, Tensor<S>& p) override { out.push_back({this->qualified(n), p}); }
    } c;
    visit(c);
    return c.out;
  }

  /// Parameters followed by buffers (batchnorm running statistics).
  std::vector<NamedTensor<S>> state() {
    struct Collect : ModuleVisitor<S> {
      std::vector<NamedTensor<S>> out;
      void parameter(const std::string& n, Tensor<S>& p) override { out.push_back({this->qualified(n), p}); }
      void buffer(const std::string& n, Tensor<S>& b) override { out.push_back({this->qualified(n), b}); }
    } c;
    visit(c);
    return c.out;
  }

  void train(bool on = true) {
    struct Mode : ModuleVisitor<S> {
      bool on;
      explicit Mode(bool o) : on(o) {}
      void training_flag(bool& f) override { f = on; }
    } m(on);
    visit(m);
  }
  void eval() { train(false); }

  Index parameter_count() {
    Index n = 0;
    for (const auto& p : parameters()) n += p.tensor.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : parameters()) p.tensor.zero_grad();
  }
};

/// Kaiming-style fan-in normal initialization. Samples are drawn in single
/// precision so 64-bit models stay exactly representable in checkpoints.
template <typename S>
Tensor<S> kaiming_normal(Shape shape, Index fan_in, std::mt19937_64& rng) {
  std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
  Array<S> values(numel(shape));
  for (Index i = 0; i < values.size(); ++i) values[i] = static_cast<S>(dist(rng));
  return Tensor<S>(std::move(shape), std::move(values), true);
}

template <typename S>
class Conv2d : public Module<S> {
 public:
  Conv2d() = default;
  Conv2d(Index in, Index out, int kernel, std::mt19937_64& rng, bool bias = true, int stride = 1,
         int padding = -1, int dilation = 1)
      : weight(kaiming_normal<S>({out, in, kernel, kernel}, in * kernel * kernel, rng)),
        stride(stride),
        padding(padding < 0 ? dilation * (kernel - 1) / 2 : padding),
        dilation(dilation) {
    if (bias) this->bias = Tensor<S>::zeros({out}, true);
  }

  Tensor<S> forward(const Tensor<S>& x) const { return conv2d(x, weight, bias, stride, padding, dilation); }

  void visit(ModuleVisitor<S>& v) override {
    v.parameter("weight", weight);
    if (bias.defined()) v.parameter("bias", bias);
  }

  Tensor<S> weight;
  Tensor<S> bias;
  int stride = 1;
  int padding = 0;
  int dilation = 1;
};

template <typename S>
class ConvTranspose2d : public Module<S> {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(Index in, Index out, int kernel, int stride, std::mt19937_64& rng, bool bias = false)
      : weight(kaiming_normal<S>({in, out, kernel, kernel}, in * kernel * kernel, rng)), stride(stride) {
    if (bias) this->bias = Tensor<S>::zeros({out}, true);
  }

  Tensor<S> forward(const Tensor<S>& x) const { return conv_transpose2d(x, weight, bias, stride); }

  void visit(ModuleVisitor<S>& v) override {
    v.parameter("weight", weight);
    if (bias.defined()) v.parameter("bias", bias);
  }

  Tensor<S> weight;
  Tensor<S> bias;
  int stride = 2;
};

template <typename S>
class BatchNorm2d : public Module<S> {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(Index channels)
      : gamma(Tensor<S>::ones({channels}, true)), beta(Tensor<S>::zeros({channels}, true)), stats(channels) {}

  Tensor<S> forward(const Tensor<S>& x) { return batch_norm2d(x, gamma, beta, stats, training); }

  void visit(ModuleVisitor<S>& v) override {
    v.parameter("gamma", gamma);
    v.parameter("beta", beta);
    v.buffer("running_mean", stats.running_mean);
    v.buffer("running_var", stats.running_var);
    v.buffer("batches_tracked", stats.batches_tracked);
    v.training_flag(training);
  }

  Tensor<S> gamma;
  Tensor<S> beta;
  BatchNormStats<S> stats;
  bool training = true;
};

/// conv -> batchnorm -> relu, with "same" padding for odd kernels.
template <typename S>
class ConvBlock : public Module<S> {
 public:
  ConvBlock() = default;
  ConvBlock(Index in, Index out, int kernel, std::mt19937_64& rng, int dilation = 1, int stride = 1)
      : conv(in, out, kernel, rng, /*bias=*/false, stride, -1, dilation), bn(out) {}

  Tensor<S> forward(const Tensor<S>& x) { return relu(bn.forward(conv.forward(x))); }

  void visit(ModuleVisitor<S>& v) override {
    v.child("conv", conv);
    v.child("bn", bn);
  }

  Conv2d<S> conv;
  BatchNorm2d<S> bn;
};

/// Two 3x3 convolutions with an identity (or projected) shortcut.
template <typename S>
class ResidualBlock : public Module<S> {
 public:
  ResidualBlock() = default;
  ResidualBlock(Index in, Index out, std::mt19937_64& rng, int stride = 1)
      : conv1(in, out, 3, rng, false, stride), bn1(out), conv2(out, out, 3, rng, false), bn2(out),
        project(stride != 1 || in != out) {
    if (project) {
      shortcut = Conv2d<S>(in, out, 1, rng, false, stride, 0);
      shortcut_bn = BatchNorm2d<S>(out);
    }
  }

  Tensor<S> forward(const Tensor<S>& x) {
    Tensor<S> y = relu(bn1.forward(conv1.forward(x)));
    y = bn2.forward(conv2.forward(y));
    Tensor<S> skip = project ? shortcut_bn.forward(shortcut.forward(x)) : x;
    return relu(y + skip);
  }

  void visit(ModuleVisitor<S>& v) override {
    v.child("conv1", conv1);
    v.child("bn1", bn1);
    v.child("conv2", conv2);
    v.child("bn2", bn2);
    if (project) {
      v.child("shortcut", shortcut);
      v.child("shortcut_bn", shortcut_bn);
    }
  }

  Conv2d<S> conv1;
  BatchNorm2d<S> bn1;
  Conv2d<S> conv2;
  BatchNorm2d<S> bn2;
  bool project = false;
  Conv2d<S> shortcut;
  BatchNorm2d<S> shortcut_bn;
};

/// 1x1 -> 3x3 -> 1x1 bottleneck as used by ResNet-50.
template <typename S>
class BottleneckBlock : public Module<S> {
 public:
  BottleneckBlock() = default;
  BottleneckBlock(Index in, Index mid, Index out, std::mt19937_64& rng, int stride = 1)
      : reduce(in, mid, 1, rng),
        spatial(mid, mid, 3, rng, 1, stride),
        expand(mid, out, 1, rng, false, 1, 0),
        expand_bn(out),
        project(stride != 1 || in != out) {
    if (project) {
      shortcut = Conv2d<S>(in, out, 1, rng, false, stride, 0);
      shortcut_bn = BatchNorm2d<S>(out);
    }
  }

  Tensor<S> forward(const Tensor<S>& x) {
    Tensor<S> y = expand_bn.forward(expand.forward(spatial.forward(reduce.forward(x))));
    Tensor<S> skip = project ? shortcut_bn.forward(shortcut.forward(x)) : x;
    return relu(y + skip);
  }

  void visit(ModuleVisitor<S>& v) override {
    v.child("reduce", reduce);
    v.child("spatial", spatial);
    v.child("expand", expand);
    v.child("expand_bn", expand_bn);
    if (project) {
      v.child("shortcut", shortcut);
      v.child("shortcut_bn", shortcut_bn);
    }
  }

  ConvBlock<S> reduce;
  ConvBlock<S> spatial;
  Conv2d<S> expand;
  BatchNorm2d<S> expand_bn;
  bool project = false;
  Conv2d<S> shortcut;
  BatchNorm2d<S> shortcut_bn;
};

}  // namespace slc
