#include "slc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <type_traits>

namespace slc {

namespace {

template <typename S>
using MatMap = Eigen::Map<RowMatrix<S>>;
template <typename S>
using ConstMatMap = Eigen::Map<const RowMatrix<S>>;
using DynStride = Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using StridedMap = Eigen::Map<RowMatrix<S>, 0, DynStride>;
template <typename S>
using ConstStridedMap = Eigen::Map<const RowMatrix<S>, 0, DynStride>;

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + " expects a rank-" + std::to_string(rank) +
                     " tensor, got " + to_string(s));
  }
}

// ---------------------------------------------------------------------------
// broadcasting

struct Broadcast {
  Shape out;
  std::vector<Index> a_index;
  std::vector<Index> b_index;
  bool same = false;
};

Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  Broadcast p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  if (a.size() != b.size()) {
    throw ShapeError(std::string(op) + ": rank mismatch " + to_string(a) + " vs " + to_string(b));
  }
  const std::size_t r = a.size();
  p.out.resize(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (a[i] != b[i] && a[i] != 1 && b[i] != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(a) + " with " +
                       to_string(b));
    }
    p.out[i] = std::max(a[i], b[i]);
  }
  // Strides of each operand, zeroed on broadcast dimensions.
  std::vector<Index> sa(r), sb(r);
  Index ca = 1, cb = 1;
  for (std::size_t i = r; i-- > 0;) {
    sa[i] = a[i] == 1 ? 0 : ca;
    sb[i] = b[i] == 1 ? 0 : cb;
    ca *= a[i];
    cb *= b[i];
  }
  const Index n = numel(p.out);
  p.a_index.resize(static_cast<std::size_t>(n));
  p.b_index.resize(static_cast<std::size_t>(n));
  std::vector<Index> idx(r, 0);
  for (Index flat = 0; flat < n; ++flat) {
    Index ia = 0, ib = 0;
    for (std::size_t d = 0; d < r; ++d) {
      ia += idx[d] * sa[d];
      ib += idx[d] * sb[d];
    }
    p.a_index[static_cast<std::size_t>(flat)] = ia;
    p.b_index[static_cast<std::size_t>(flat)] = ib;
    for (std::size_t d = r; d-- > 0;) {
      if (++idx[d] < p.out[d]) break;
      idx[d] = 0;
    }
  }
  return p;
}

enum class BinOp { Add, Sub, Mul };

template <typename S>
Tensor<S> binary(const Tensor<S>& a, const Tensor<S>& b, BinOp op, const char* name) {
  auto plan = std::make_shared<Broadcast>(plan_broadcast(a.shape(), b.shape(), name));
  const Index n = numel(plan->out);
  Array<S> out(n);
  if (plan->same) {
    switch (op) {
      case BinOp::Add: out = a.value() + b.value(); break;
      case BinOp::Sub: out = a.value() - b.value(); break;
      case BinOp::Mul: out = a.value() * b.value(); break;
    }
  } else {
    const S* pa = a.data();
    const S* pb = b.data();
    for (Index i = 0; i < n; ++i) {
      const S va = pa[plan->a_index[i]];
      const S vb = pb[plan->b_index[i]];
      out[i] = op == BinOp::Add ? va + vb : op == BinOp::Sub ? va - vb : va * vb;
    }
  }
  return Tensor<S>::make_result(plan->out, std::move(out), {a, b}, [a, b, plan, op](const Array<S>& g) {
    if (plan->same) {
      if (op == BinOp::Mul) {
        accumulate_grad(a, g * b.value());
        accumulate_grad(b, g * a.value());
      } else {
        accumulate_grad(a, g);
        accumulate_grad(b, op == BinOp::Sub ? Array<S>(-g) : g);
      }
      return;
    }
    const Index n = g.size();
    if (a.requires_grad()) {
      Array<S>& ga = a.node()->grad_buffer();
      for (Index i = 0; i < n; ++i) {
        ga[plan->a_index[i]] += op == BinOp::Mul ? g[i] * b.data()[plan->b_index[i]] : g[i];
      }
    }
    if (b.requires_grad()) {
      Array<S>& gb = b.node()->grad_buffer();
      for (Index i = 0; i < n; ++i) {
        const S d = op == BinOp::Mul ? g[i] * a.data()[plan->a_index[i]]
                    : op == BinOp::Sub ? -g[i]
                                       : g[i];
        gb[plan->b_index[i]] += d;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// convolution lowering

struct ConvGeometry {
  Index channels, height, width, kh, kw, out_h, out_w;
  Index stride, pad, dil;

  Index rows() const { return channels * kh * kw; }
  Index cols() const { return out_h * out_w; }
  bool pointwise() const {
    return kh == 1 && kw == 1 && stride == 1 && pad == 0 && out_h == height && out_w == width;
  }
};

Index conv_out_size(Index in, Index k, Index stride, Index pad, Index dil) {
  const Index span = in + 2 * pad - dil * (k - 1) - 1;
  if (span < 0) return 0;
  return span / stride + 1;
}

template <typename S>
void im2col(const S* img, const ConvGeometry& g, S* cols) {
  for (Index c = 0; c < g.channels; ++c) {
    for (Index ki = 0; ki < g.kh; ++ki) {
      for (Index kj = 0; kj < g.kw; ++kj) {
        S* row = cols + ((c * g.kh + ki) * g.kw + kj) * g.cols();
        for (Index oh = 0; oh < g.out_h; ++oh) {
          const Index ih = oh * g.stride - g.pad + ki * g.dil;
          S* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= g.height) {
            std::fill(dst, dst + g.out_w, S(0));
            continue;
          }
          const S* src = img + (c * g.height + ih) * g.width;
          for (Index ow = 0; ow < g.out_w; ++ow) {
            const Index iw = ow * g.stride - g.pad + kj * g.dil;
            dst[ow] = (iw >= 0 && iw < g.width) ? src[iw] : S(0);
          }
        }
      }
    }
  }
}

template <typename S>
void col2im(const S* cols, const ConvGeometry& g, S* img) {
  for (Index c = 0; c < g.channels; ++c) {
    for (Index ki = 0; ki < g.kh; ++ki) {
      for (Index kj = 0; kj < g.kw; ++kj) {
        const S* row = cols + ((c * g.kh + ki) * g.kw + kj) * g.cols();
        for (Index oh = 0; oh < g.out_h; ++oh) {
          const Index ih = oh * g.stride - g.pad + ki * g.dil;
          if (ih < 0 || ih >= g.height) continue;
          const S* src = row + oh * g.out_w;
          S* dst = img + (c * g.height + ih) * g.width;
          for (Index ow = 0; ow < g.out_w; ++ow) {
            const Index iw = ow * g.stride - g.pad + kj * g.dil;
            if (iw >= 0 && iw < g.width) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  return binary(a, b, BinOp::Add, "add");
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return binary(a, b, BinOp::Sub, "sub");
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  return binary(a, b, BinOp::Mul, "mul");
}

template <typename S>
Tensor<S> scale(const Tensor<S>& x, S factor) {
  return Tensor<S>::make_result(x.shape(), x.value() * factor, {x},
                                [x, factor](const Array<S>& g) { accumulate_grad(x, g * factor); });
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& x, S value) {
  return Tensor<S>::make_result(x.shape(), x.value() + value, {x},
                                [x](const Array<S>& g) { accumulate_grad(x, g); });
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  return Tensor<S>::make_result(x.shape(), x.value().max(S(0)), {x}, [x](const Array<S>& g) {
    accumulate_grad(x, (x.value() > S(0)).select(g, S(0)));
  });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  Array<S> y = S(1) / (S(1) + (-x.value()).exp());
  auto saved = std::make_shared<Array<S>>(y);
  return Tensor<S>::make_result(x.shape(), std::move(y), {x}, [x, saved](const Array<S>& g) {
    accumulate_grad(x, g * (*saved) * (S(1) - *saved));
  });
}

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
  return Tensor<S>::make_result({1}, Array<S>::Constant(1, x.value().sum()), {x},
                                [x](const Array<S>& g) { accumulate_grad(x, Array<S>::Constant(x.size(), g[0])); });
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x) {
  const S inv = S(1) / S(x.size());
  return Tensor<S>::make_result({1}, Array<S>::Constant(1, x.value().sum() * inv), {x},
                                [x, inv](const Array<S>& g) {
                                  accumulate_grad(x, Array<S>::Constant(x.size(), g[0] * inv));
                                });
}

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  require_rank(a.shape(), 2, "matmul");
  require_rank(b.shape(), 2, "matmul");
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ, " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  Array<S> out(m * n);
  MatMap<S>(out.data(), m, n).noalias() = ConstMatMap<S>(a.data(), m, k) * ConstMatMap<S>(b.data(), k, n);
  return Tensor<S>::make_result({m, n}, std::move(out), {a, b}, [a, b, m, k, n](const Array<S>& g) {
    ConstMatMap<S> gm(g.data(), m, n);
    if (a.requires_grad()) {
      MatMap<S>(a.node()->grad_buffer().data(), m, k).noalias() +=
          gm * ConstMatMap<S>(b.data(), k, n).transpose();
    }
    if (b.requires_grad()) {
      MatMap<S>(b.node()->grad_buffer().data(), k, n).noalias() +=
          ConstMatMap<S>(a.data(), m, k).transpose() * gm;
    }
  });
}

template <typename S>
Tensor<S> softmax(const Tensor<S>& x, int axis) {
  const int r = x.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("softmax: axis out of range for " + to_string(x.shape()));
  Index outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < r; ++i) inner *= x.dim(i);
  const Index len = x.dim(axis);

  Array<S> y(x.size());
  const S* in = x.data();
  for (Index o = 0; o < outer; ++o) {
    for (Index i = 0; i < inner; ++i) {
      const Index base = o * len * inner + i;
      S mx = in[base];
      for (Index l = 1; l < len; ++l) mx = std::max(mx, in[base + l * inner]);
      S total = 0;
      for (Index l = 0; l < len; ++l) {
        const S e = std::exp(in[base + l * inner] - mx);
        y[base + l * inner] = e;
        total += e;
      }
      for (Index l = 0; l < len; ++l) y[base + l * inner] /= total;
    }
  }
  auto saved = std::make_shared<Array<S>>(y);
  return Tensor<S>::make_result(x.shape(), std::move(y), {x}, [x, saved, outer, inner, len](const Array<S>& g) {
    if (!x.requires_grad()) return;
    Array<S>& gx = x.node()->grad_buffer();
    const Array<S>& y = *saved;
    for (Index o = 0; o < outer; ++o) {
      for (Index i = 0; i < inner; ++i) {
        const Index base = o * len * inner + i;
        S dot = 0;
        for (Index l = 0; l < len; ++l) dot += g[base + l * inner] * y[base + l * inner];
        for (Index l = 0; l < len; ++l) {
          const Index at = base + l * inner;
          gx[at] += y[at] * (g[at] - dot);
        }
      }
    }
  });
}

template <typename S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& kernel, const Tensor<S>& bias,
                 int stride, int padding, int dilation) {
  require_rank(input.shape(), 4, "conv2d input");
  require_rank(kernel.shape(), 4, "conv2d kernel");
  if (stride < 1 || dilation < 1 || padding < 0) {
    throw ContractError("conv2d: stride and dilation must be >= 1 and padding >= 0");
  }
  const Index n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const Index o = kernel.dim(0);
  if (kernel.dim(1) != c) {
    throw ShapeError("conv2d: input has " + std::to_string(c) + " channels but kernel " +
                     to_string(kernel.shape()) + " expects " + std::to_string(kernel.dim(1)));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != o)) {
    throw ShapeError("conv2d: bias shape " + to_string(bias.shape()) + " does not match " +
                     std::to_string(o) + " output channels");
  }
  ConvGeometry geo{c, h, w, kernel.dim(2), kernel.dim(3), 0, 0, stride, padding, dilation};
  geo.out_h = conv_out_size(h, geo.kh, stride, padding, dilation);
  geo.out_w = conv_out_size(w, geo.kw, stride, padding, dilation);
  if (geo.out_h < 1 || geo.out_w < 1) {
    throw ShapeError("conv2d: input " + to_string(input.shape()) + " too small for kernel " +
                     to_string(kernel.shape()) + " with dilation " + std::to_string(dilation));
  }

  const Index in_plane = c * h * w;
  const Index out_plane = o * geo.cols();
  Array<S> out(n * out_plane);
  ConstMatMap<S> wm(kernel.data(), o, geo.rows());
  RowMatrix<S> cols;
  if (!geo.pointwise()) cols.resize(geo.rows(), geo.cols());
  for (Index b = 0; b < n; ++b) {
    MatMap<S> om(out.data() + b * out_plane, o, geo.cols());
    if (geo.pointwise()) {
      om.noalias() = wm * ConstMatMap<S>(input.data() + b * in_plane, c, geo.cols());
    } else {
      im2col(input.data() + b * in_plane, geo, cols.data());
      om.noalias() = wm * cols;
    }
    if (bias.defined()) om.colwise() += ConstMatMap<S>(bias.data(), o, 1).col(0);
  }

  return Tensor<S>::make_result(
      {n, o, geo.out_h, geo.out_w}, std::move(out), {input, kernel, bias},
      [input, kernel, bias, geo, n, o, in_plane, out_plane](const Array<S>& g) {
        ConstMatMap<S> wm(kernel.data(), o, geo.rows());
        RowMatrix<S> cols, dcols;
        RowMatrix<S> dw;
        if (kernel.requires_grad()) dw = RowMatrix<S>::Zero(o, geo.rows());
        if (!geo.pointwise()) cols.resize(geo.rows(), geo.cols());
        for (Index b = 0; b < n; ++b) {
          ConstMatMap<S> gm(g.data() + b * out_plane, o, geo.cols());
          if (kernel.requires_grad()) {
            if (geo.pointwise()) {
              dw.noalias() += gm * ConstMatMap<S>(input.data() + b * in_plane, geo.rows(), geo.cols()).transpose();
            } else {
              im2col(input.data() + b * in_plane, geo, cols.data());
              dw.noalias() += gm * cols.transpose();
            }
          }
          if (input.requires_grad()) {
            S* gx = input.node()->grad_buffer().data() + b * in_plane;
            if (geo.pointwise()) {
              MatMap<S>(gx, geo.rows(), geo.cols()).noalias() += wm.transpose() * gm;
            } else {
              dcols.noalias() = wm.transpose() * gm;
              col2im(dcols.data(), geo, gx);
            }
          }
          if (bias.requires_grad()) {
            MatMap<S>(bias.node()->grad_buffer().data(), o, 1).col(0) += gm.rowwise().sum();
          }
        }
        if (kernel.requires_grad()) {
          MatMap<S>(kernel.node()->grad_buffer().data(), o, geo.rows()) += dw;
        }
      });
}

template <typename S>
Tensor<S> conv_transpose2d(const Tensor<S>& input, const Tensor<S>& kernel, const Tensor<S>& bias,
                           int stride, int padding) {
  require_rank(input.shape(), 4, "conv_transpose2d input");
  require_rank(kernel.shape(), 4, "conv_transpose2d kernel");
  if (stride < 1 || padding < 0) throw ContractError("conv_transpose2d: stride must be >= 1");
  const Index n = input.dim(0), ci = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (kernel.dim(0) != ci) {
    throw ShapeError("conv_transpose2d: input has " + std::to_string(ci) + " channels but kernel " +
                     to_string(kernel.shape()) + " expects " + std::to_string(kernel.dim(0)));
  }
  const Index co = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != co)) {
    throw ShapeError("conv_transpose2d: bias shape " + to_string(bias.shape()) + " mismatch");
  }
  const Index oh = (h - 1) * stride - 2 * padding + kh;
  const Index ow = (w - 1) * stride - 2 * padding + kw;
  if (oh < 1 || ow < 1) throw ShapeError("conv_transpose2d: empty output");
  // Geometry of the forward conv that maps the output back onto the input grid.
  ConvGeometry geo{co, oh, ow, kh, kw, h, w, stride, padding, 1};

  const Index in_plane = ci * h * w;
  const Index out_plane = co * oh * ow;
  Array<S> out = Array<S>::Zero(n * out_plane);
  ConstMatMap<S> wm(kernel.data(), ci, geo.rows());
  RowMatrix<S> cols(geo.rows(), geo.cols());
  for (Index b = 0; b < n; ++b) {
    cols.noalias() = wm.transpose() * ConstMatMap<S>(input.data() + b * in_plane, ci, h * w);
    col2im(cols.data(), geo, out.data() + b * out_plane);
    if (bias.defined()) {
      MatMap<S>(out.data() + b * out_plane, co, oh * ow).colwise() += ConstMatMap<S>(bias.data(), co, 1).col(0);
    }
  }

  return Tensor<S>::make_result(
      {n, co, oh, ow}, std::move(out), {input, kernel, bias},
      [input, kernel, bias, geo, n, ci, in_plane, out_plane](const Array<S>& g) {
        ConstMatMap<S> wm(kernel.data(), ci, geo.rows());
        RowMatrix<S> cols(geo.rows(), geo.cols());
        RowMatrix<S> dw;
        if (kernel.requires_grad()) dw = RowMatrix<S>::Zero(ci, geo.rows());
        for (Index b = 0; b < n; ++b) {
          im2col(g.data() + b * out_plane, geo, cols.data());
          if (input.requires_grad()) {
            MatMap<S>(input.node()->grad_buffer().data() + b * in_plane, ci, geo.cols()).noalias() +=
                wm * cols;
          }
          if (kernel.requires_grad()) {
            dw.noalias() += ConstMatMap<S>(input.data() + b * in_plane, ci, geo.cols()) * cols.transpose();
          }
          if (bias.requires_grad()) {
            MatMap<S>(bias.node()->grad_buffer().data(), geo.channels, 1).col(0) +=
                ConstMatMap<S>(g.data() + b * out_plane, geo.channels, geo.height * geo.width).rowwise().sum();
          }
        }
        if (kernel.requires_grad()) MatMap<S>(kernel.node()->grad_buffer().data(), ci, geo.rows()) += dw;
      });
}

template <typename S>
Tensor<S> avg_pool2d(const Tensor<S>& x, int factor) {
  require_rank(x.shape(), 4, "avg_pool2d");
  if (factor < 1) throw ContractError("avg_pool2d: factor must be >= 1");
  const Index planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index oh = (h + factor - 1) / factor, ow = (w + factor - 1) / factor;
  Array<S> out(planes * oh * ow);
  const S* in = x.data();
  for (Index p = 0; p < planes; ++p) {
    for (Index i = 0; i < oh; ++i) {
      for (Index j = 0; j < ow; ++j) {
        const Index r1 = std::min<Index>(h, (i + 1) * factor), c1 = std::min<Index>(w, (j + 1) * factor);
        S acc = 0;
        for (Index r = i * factor; r < r1; ++r) {
          for (Index c = j * factor; c < c1; ++c) acc += in[(p * h + r) * w + c];
        }
        out[(p * oh + i) * ow + j] = acc / S((r1 - i * factor) * (c1 - j * factor));
      }
    }
  }
  return Tensor<S>::make_result({x.dim(0), x.dim(1), oh, ow}, std::move(out), {x},
                                [x, factor, planes, h, w, oh, ow](const Array<S>& g) {
    if (!x.requires_grad()) return;
    Array<S>& gx = x.node()->grad_buffer();
    for (Index p = 0; p < planes; ++p) {
      for (Index i = 0; i < oh; ++i) {
        for (Index j = 0; j < ow; ++j) {
          const Index r1 = std::min<Index>(h, (i + 1) * factor), c1 = std::min<Index>(w, (j + 1) * factor);
          const S share = g[(p * oh + i) * ow + j] / S((r1 - i * factor) * (c1 - j * factor));
          for (Index r = i * factor; r < r1; ++r) {
            for (Index c = j * factor; c < c1; ++c) gx[(p * h + r) * w + c] += share;
          }
        }
      }
    }
  });
}

template <typename S>
Tensor<S> global_avg_pool(const Tensor<S>& x) {
  require_rank(x.shape(), 4, "global_avg_pool");
  const Index planes = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  ConstMatMap<S> in(x.data(), planes, hw);
  Array<S> out = in.rowwise().mean().array();
  return Tensor<S>::make_result({x.dim(0), x.dim(1), 1, 1}, std::move(out), {x},
                                [x, planes, hw](const Array<S>& g) {
    if (!x.requires_grad()) return;
    MatMap<S>(x.node()->grad_buffer().data(), planes, hw).colwise() += (g / S(hw)).matrix();
  });
}

template <typename S>
Tensor<S> nearest_upsample(const Tensor<S>& x, int factor) {
  require_rank(x.shape(), 4, "nearest_upsample");
  if (factor < 1) throw ContractError("nearest_upsample: factor must be >= 1");
  const Index planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index oh = h * factor, ow = w * factor;
  Array<S> out(planes * oh * ow);
  for (Index p = 0; p < planes; ++p) {
    for (Index i = 0; i < oh; ++i) {
      for (Index j = 0; j < ow; ++j) out[(p * oh + i) * ow + j] = x.data()[(p * h + i / factor) * w + j / factor];
    }
  }
  return Tensor<S>::make_result({x.dim(0), x.dim(1), oh, ow}, std::move(out), {x},
                                [x, factor, planes, h, w, oh, ow](const Array<S>& g) {
    if (!x.requires_grad()) return;
    Array<S>& gx = x.node()->grad_buffer();
    for (Index p = 0; p < planes; ++p) {
      for (Index i = 0; i < oh; ++i) {
        for (Index j = 0; j < ow; ++j) gx[(p * h + i / factor) * w + j / factor] += g[(p * oh + i) * ow + j];
      }
    }
  });
}

template <typename S>
Tensor<S> concat(const std::vector<Tensor<S>>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Shape& first = parts.front().shape();
  const int r = static_cast<int>(first.size());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("concat: axis out of range");
  Shape out_shape = first;
  out_shape[static_cast<std::size_t>(axis)] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (int d = 0; ok && d < r; ++d) ok = d == axis || s[static_cast<std::size_t>(d)] == first[static_cast<std::size_t>(d)];
    if (!ok) throw ShapeError("concat: incompatible shapes " + to_string(first) + " and " + to_string(s));
    out_shape[static_cast<std::size_t>(axis)] += s[static_cast<std::size_t>(axis)];
  }
  Index outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= first[static_cast<std::size_t>(d)];
  for (int d = axis + 1; d < r; ++d) inner *= first[static_cast<std::size_t>(d)];
  const Index total = out_shape[static_cast<std::size_t>(axis)] * inner;

  Array<S> out(numel(out_shape));
  Index offset = 0;
  std::vector<Index> offsets;
  for (const auto& p : parts) {
    const Index chunk = p.dim(axis) * inner;
    for (Index o = 0; o < outer; ++o) {
      std::copy_n(p.data() + o * chunk, chunk, out.data() + o * total + offset);
    }
    offsets.push_back(offset);
    offset += chunk;
  }
  return Tensor<S>::make_result(out_shape, std::move(out), parts,
                                [parts, offsets, outer, inner, total, axis](const Array<S>& g) {
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const Tensor<S>& p = parts[k];
      if (!p.requires_grad()) continue;
      const Index chunk = p.dim(axis) * inner;
      Array<S>& gp = p.node()->grad_buffer();
      for (Index o = 0; o < outer; ++o) {
        gp.segment(o * chunk, chunk) += g.segment(o * total + offsets[k], chunk);
      }
    }
  });
}

template <typename S>
Tensor<S> center_crop(const Tensor<S>& x, Index height, Index width) {
  require_rank(x.shape(), 4, "center_crop");
  const Index planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  if (height > h || width > w || height < 1 || width < 1) {
    throw ShapeError("center_crop: cannot crop " + to_string(x.shape()) + " to " +
                     std::to_string(height) + "x" + std::to_string(width));
  }
  if (height == h && width == w) return x;
  const Index top = (h - height) / 2, left = (w - width) / 2;
  Array<S> out(planes * height * width);
  for (Index p = 0; p < planes; ++p) {
    for (Index i = 0; i < height; ++i) {
      std::copy_n(x.data() + (p * h + top + i) * w + left, width, out.data() + (p * height + i) * width);
    }
  }
  return Tensor<S>::make_result({x.dim(0), x.dim(1), height, width}, std::move(out), {x},
                                [x, planes, h, w, height, width, top, left](const Array<S>& g) {
    if (!x.requires_grad()) return;
    Array<S>& gx = x.node()->grad_buffer();
    for (Index p = 0; p < planes; ++p) {
      for (Index i = 0; i < height; ++i) {
        gx.segment((p * h + top + i) * w + left, width) += g.segment((p * height + i) * width, width);
      }
    }
  });
}

template <typename S>
Tensor<S> batch_norm2d(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                       BatchNormStats<S>& stats, bool training, S momentum, S eps) {
  require_rank(x.shape(), 4, "batch_norm2d");
  const Index n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (gamma.size() != c || beta.size() != c || stats.running_mean.size() != c) {
    throw ShapeError("batch_norm2d: parameter size does not match " + std::to_string(c) + " channels");
  }
  const Index m = n * hw;
  Array<S> mu(c), inv_std(c);
  if (training) {
    for (Index ch = 0; ch < c; ++ch) {
      S acc = 0;
      for (Index b = 0; b < n; ++b) acc += x.value().segment((b * c + ch) * hw, hw).sum();
      mu[ch] = acc / S(m);
      S var = 0;
      for (Index b = 0; b < n; ++b) var += (x.value().segment((b * c + ch) * hw, hw) - mu[ch]).square().sum();
      var /= S(m);
      inv_std[ch] = S(1) / std::sqrt(var + eps);
      const S unbiased = m > 1 ? var * S(m) / S(m - 1) : var;
      stats.running_mean.value()[ch] = (S(1) - momentum) * stats.running_mean.value()[ch] + momentum * mu[ch];
      stats.running_var.value()[ch] = (S(1) - momentum) * stats.running_var.value()[ch] + momentum * unbiased;
    }
    stats.batches_tracked.value()[0] += S(1);
  } else {
    if (stats.batches_tracked.value()[0] <= S(0)) {
      throw StateError("batch_norm2d: eval mode requires accumulated running statistics");
    }
    mu = stats.running_mean.value();
    inv_std = S(1) / (stats.running_var.value() + eps).sqrt();
  }

  auto xhat = std::make_shared<Array<S>>(x.size());
  Array<S> out(x.size());
  for (Index b = 0; b < n; ++b) {
    for (Index ch = 0; ch < c; ++ch) {
      const Index off = (b * c + ch) * hw;
      xhat->segment(off, hw) = (x.value().segment(off, hw) - mu[ch]) * inv_std[ch];
      out.segment(off, hw) = xhat->segment(off, hw) * gamma.value()[ch] + beta.value()[ch];
    }
  }
  return Tensor<S>::make_result(x.shape(), std::move(out), {x, gamma, beta},
                                [x, gamma, beta, xhat, inv_std, training, n, c, hw, m](const Array<S>& g) {
    Array<S> sum_g = Array<S>::Zero(c), sum_gx = Array<S>::Zero(c);
    for (Index b = 0; b < n; ++b) {
      for (Index ch = 0; ch < c; ++ch) {
        const Index off = (b * c + ch) * hw;
        sum_g[ch] += g.segment(off, hw).sum();
        sum_gx[ch] += (g.segment(off, hw) * xhat->segment(off, hw)).sum();
      }
    }
    accumulate_grad(gamma, sum_gx);
    accumulate_grad(beta, sum_g);
    if (!x.requires_grad()) return;
    Array<S>& gx = x.node()->grad_buffer();
    for (Index b = 0; b < n; ++b) {
      for (Index ch = 0; ch < c; ++ch) {
        const Index off = (b * c + ch) * hw;
        const S k = gamma.value()[ch] * inv_std[ch];
        if (training) {
          gx.segment(off, hw) += k / S(m) *
              (S(m) * g.segment(off, hw) - sum_g[ch] - xhat->segment(off, hw) * sum_gx[ch]);
        } else {
          gx.segment(off, hw) += k * g.segment(off, hw);
        }
      }
    }
  });
}

namespace {

// Per-line view of an N x C x H x W map: a C x len matrix for one row or column.
template <typename S, typename Ptr>
auto line_view(Ptr base, Index c, Index h, Index w, Index b, Index line, Axis axis) {
  using MapT = std::conditional_t<std::is_const_v<std::remove_pointer_t<Ptr>>, ConstStridedMap<S>, StridedMap<S>>;
  if (axis == Axis::Row) {
    return MapT(base + b * c * h * w + line * w, c, w, DynStride(h * w, 1));
  }
  return MapT(base + b * c * h * w + line, c, h, DynStride(h * w, w));
}

}  // namespace

template <typename S>
Tensor<S> axial_logits(const Tensor<S>& q, const Tensor<S>& k, Axis axis) {
  require_rank(q.shape(), 4, "axial_logits");
  if (q.shape() != k.shape()) {
    throw ShapeError("axial_logits: query " + to_string(q.shape()) + " and key " + to_string(k.shape()) + " differ");
  }
  const Index n = q.dim(0), c = q.dim(1), h = q.dim(2), w = q.dim(3);
  const Index lines = axis == Axis::Row ? h : w;
  const Index len = axis == Axis::Row ? w : h;
  Array<S> out(n * lines * len * len);
  for (Index b = 0; b < n; ++b) {
    for (Index l = 0; l < lines; ++l) {
      auto qm = line_view<S>(q.data(), c, h, w, b, l, axis);
      auto km = line_view<S>(k.data(), c, h, w, b, l, axis);
      MatMap<S>(out.data() + (b * lines + l) * len * len, len, len).noalias() = qm.transpose() * km;
    }
  }
  return Tensor<S>::make_result({n, lines, len, len}, std::move(out), {q, k},
                                [q, k, axis, n, c, h, w, lines, len](const Array<S>& g) {
    for (Index b = 0; b < n; ++b) {
      for (Index l = 0; l < lines; ++l) {
        ConstMatMap<S> gm(g.data() + (b * lines + l) * len * len, len, len);
        if (q.requires_grad()) {
          auto gq = line_view<S>(q.node()->grad_buffer().data(), c, h, w, b, l, axis);
          gq.noalias() += line_view<S>(k.data(), c, h, w, b, l, axis) * gm.transpose();
        }
        if (k.requires_grad()) {
          auto gk = line_view<S>(k.node()->grad_buffer().data(), c, h, w, b, l, axis);
          gk.noalias() += line_view<S>(q.data(), c, h, w, b, l, axis) * gm;
        }
      }
    }
  });
}

template <typename S>
Tensor<S> axial_apply(const Tensor<S>& scores, const Tensor<S>& v, Axis axis) {
  require_rank(v.shape(), 4, "axial_apply");
  const Index n = v.dim(0), c = v.dim(1), h = v.dim(2), w = v.dim(3);
  const Index lines = axis == Axis::Row ? h : w;
  const Index len = axis == Axis::Row ? w : h;
  if (scores.shape() != Shape{n, lines, len, len}) {
    throw ShapeError("axial_apply: scores " + to_string(scores.shape()) + " do not match values " +
                     to_string(v.shape()));
  }
  Array<S> out(v.size());
  for (Index b = 0; b < n; ++b) {
    for (Index l = 0; l < lines; ++l) {
      ConstMatMap<S> sm(scores.data() + (b * lines + l) * len * len, len, len);
      line_view<S>(out.data(), c, h, w, b, l, axis).noalias() =
          line_view<S>(v.data(), c, h, w, b, l, axis) * sm.transpose();
    }
  }
  return Tensor<S>::make_result(v.shape(), std::move(out), {scores, v},
                                [scores, v, axis, n, c, h, w, lines, len](const Array<S>& g) {
    for (Index b = 0; b < n; ++b) {
      for (Index l = 0; l < lines; ++l) {
        auto gm = line_view<S>(g.data(), c, h, w, b, l, axis);
        ConstMatMap<S> sm(scores.data() + (b * lines + l) * len * len, len, len);
        if (v.requires_grad()) {
          line_view<S>(v.node()->grad_buffer().data(), c, h, w, b, l, axis).noalias() += gm * sm;
        }
        if (scores.requires_grad()) {
          MatMap<S>(scores.node()->grad_buffer().data() + (b * lines + l) * len * len, len, len).noalias() +=
              gm.transpose() * line_view<S>(v.data(), c, h, w, b, l, axis);
        }
      }
    }
  });
}

template <typename S>
Tensor<S> weighted_l1(const Tensor<S>& a, const Tensor<S>& b, const Array<S>& weights) {
  if (a.shape() != b.shape() || weights.size() != a.size()) {
    throw ShapeError("weighted_l1: shapes differ " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  const Array<S> diff = a.value() - b.value();
  const S total = (weights * diff.abs()).sum();
  auto w = std::make_shared<Array<S>>(weights);
  return Tensor<S>::make_result({1}, Array<S>::Constant(1, total), {a, b}, [a, b, w](const Array<S>& g) {
    const Array<S> d = a.value() - b.value();
    const Array<S> sgn = (d > S(0)).select(Array<S>::Ones(d.size()), (d < S(0)).select(-Array<S>::Ones(d.size()), S(0)));
    const Array<S> grad = g[0] * (*w) * sgn;
    accumulate_grad(a, grad);
    if (b.requires_grad()) accumulate_grad(b, Array<S>(-grad));
  });
}

#define SLC_INSTANTIATE_OPS(S)                                                                   \
  template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                                    \
  template Tensor<S> sub(const Tensor<S>&, const Tensor<S>&);                                    \
  template Tensor<S> mul(const Tensor<S>&, const Tensor<S>&);                                    \
  template Tensor<S> scale(const Tensor<S>&, S);                                                 \
  template Tensor<S> add_scalar(const Tensor<S>&, S);                                            \
  template Tensor<S> relu(const Tensor<S>&);                                                     \
  template Tensor<S> sigmoid(const Tensor<S>&);                                                  \
  template Tensor<S> sum(const Tensor<S>&);                                                      \
  template Tensor<S> mean(const Tensor<S>&);                                                     \
  template Tensor<S> matmul(const Tensor<S>&, const Tensor<S>&);                                 \
  template Tensor<S> softmax(const Tensor<S>&, int);                                             \
  template Tensor<S> conv2d(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, int, int, int); \
  template Tensor<S> conv_transpose2d(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, int, int); \
  template Tensor<S> avg_pool2d(const Tensor<S>&, int);                                          \
  template Tensor<S> global_avg_pool(const Tensor<S>&);                                          \
  template Tensor<S> nearest_upsample(const Tensor<S>&, int);                                    \
  template Tensor<S> concat(const std::vector<Tensor<S>>&, int);                                 \
  template Tensor<S> center_crop(const Tensor<S>&, Index, Index);                                \
  template Tensor<S> batch_norm2d(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,          \
                                  BatchNormStats<S>&, bool, S, S);                               \
  template Tensor<S> axial_logits(const Tensor<S>&, const Tensor<S>&, Axis);                     \
  template Tensor<S> axial_apply(const Tensor<S>&, const Tensor<S>&, Axis);                      \
  template Tensor<S> weighted_l1(const Tensor<S>&, const Tensor<S>&, const Array<S>&);

SLC_INSTANTIATE_OPS(float)
SLC_INSTANTIATE_OPS(double)

}  // namespace slc
