#include "unetplus/layers.hpp"

#include <Eigen/Core>

#include <cmath>
#include <memory>
#include <random>

namespace unetplus {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// Geometry of a k x k window sweep over a single image plane.
struct Window {
  std::size_t channels, height, width, kernel, stride, padding, out_h, out_w;

  std::size_t rows() const { return channels * kernel * kernel; }
  std::size_t cols() const { return out_h * out_w; }
};

// col[(c*k + ki)*k + kj, oh*out_w + ow] = img[c, oh*s + ki - p, ow*s + kj - p]
template <typename T>
void im2col(const T* img, const Window& g, T* col) {
  const long pad = static_cast<long>(g.padding);
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        T* row = col + ((c * g.kernel + ki) * g.kernel + kj) * g.cols();
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - pad;
          T* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= static_cast<long>(g.height)) {
            std::fill_n(dst, g.out_w, T{0});
            continue;
          }
          const T* src = img + (c * g.height + static_cast<std::size_t>(ih)) * g.width;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj) - pad;
            dst[ow] = (iw < 0 || iw >= static_cast<long>(g.width)) ? T{0} : src[iw];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters columns back into the plane (accumulating).
template <typename T>
void col2im(const T* col, const Window& g, T* img) {
  const long pad = static_cast<long>(g.padding);
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        const T* row = col + ((c * g.kernel + ki) * g.kernel + kj) * g.cols();
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - pad;
          if (ih < 0 || ih >= static_cast<long>(g.height)) continue;
          const T* src = row + oh * g.out_w;
          T* dst = img + (c * g.height + static_cast<std::size_t>(ih)) * g.width;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj) - pad;
            if (iw >= 0 && iw < static_cast<long>(g.width)) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

template <typename T>
void require_rank4(const Tensor<T>& t, const char* op) {
  if (t.rank() != 4) throw ShapeError(std::string(op) + ": expected NCHW input, got " + shape_str(t.shape()));
}

}  // namespace

template <typename T>
Var<T> conv2d(Var<T> input, Var<T> weight, Var<T> bias, std::size_t stride, std::size_t padding) {
  const Tensor<T>& x = input.value();
  const Tensor<T>& w = weight.value();
  require_rank4(x, "conv2d");
  if (w.rank() != 4 || w.dim(2) != w.dim(3)) {
    throw ShapeError("conv2d: weight must be [O, C, k, k], got " + shape_str(w.shape()));
  }
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t o = w.dim(0), k = w.dim(2);
  if (w.dim(1) != c) {
    throw ShapeError("conv2d: input has " + std::to_string(c) + " channels, weight expects " +
                     std::to_string(w.dim(1)));
  }
  if (bias.value().shape() != Shape{o}) throw ShapeError("conv2d: bias must be [" + std::to_string(o) + "]");
  if (h + 2 * padding < k || wd + 2 * padding < k || (h + 2 * padding - k) % stride != 0 ||
      (wd + 2 * padding - k) % stride != 0) {
    throw ShapeError("conv2d: non-integral output size for input " + shape_str(x.shape()));
  }
  const Window g{c, h, wd, k, stride, padding, (h + 2 * padding - k) / stride + 1,
                 (wd + 2 * padding - k) / stride + 1};
  const bool pointwise = (k == 1 && stride == 1 && padding == 0);

  Tensor<T> out({n, o, g.out_h, g.out_w});
  AlignedVector<T> col(pointwise ? 0 : g.rows() * g.cols());
  ConstMatMap<T> wm(w.data().data(), o, g.rows());
  const T* b = bias.value().data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const T* img = x.data().data() + i * c * h * wd;
    if (!pointwise) im2col(img, g, col.data());
    ConstMatMap<T> cm(pointwise ? img : col.data(), g.rows(), g.cols());
    MatMap<T> om(out.data().data() + i * o * g.cols(), o, g.cols());
    om.noalias() = wm * cm;
    for (std::size_t oc = 0; oc < o; ++oc) om.row(oc).array() += b[oc];
  }

  return input.tape->record(std::move(out), {input, weight, bias},
                            [input, weight, bias, g, n, o, pointwise](const Tensor<T>& grad, Tape<T>& tape) {
    const Tensor<T>& x = tape.value(input);
    const Tensor<T>& w = tape.value(weight);
    T* gx = tape.grad_buffer(input);
    T* gw = tape.grad_buffer(weight);
    T* gb = tape.grad_buffer(bias);
    const std::size_t plane = g.channels * g.height * g.width;
    AlignedVector<T> col(pointwise ? 0 : g.rows() * g.cols());
    AlignedVector<T> dcol(gx && !pointwise ? g.rows() * g.cols() : 0);
    ConstMatMap<T> wm(w.data().data(), o, g.rows());
    for (std::size_t i = 0; i < n; ++i) {
      ConstMatMap<T> gm(grad.data().data() + i * o * g.cols(), o, g.cols());
      if (gb) {
        for (std::size_t oc = 0; oc < o; ++oc) gb[oc] += gm.row(oc).sum();
      }
      if (gw) {
        const T* img = x.data().data() + i * plane;
        if (!pointwise) im2col(img, g, col.data());
        ConstMatMap<T> cm(pointwise ? img : col.data(), g.rows(), g.cols());
        MatMap<T> gwm(gw, o, g.rows());
        gwm.noalias() += gm * cm.transpose();
      }
      if (gx) {
        if (pointwise) {
          MatMap<T> gxm(gx + i * plane, g.rows(), g.cols());
          gxm.noalias() += wm.transpose() * gm;
        } else {
          MatMap<T> dm(dcol.data(), g.rows(), g.cols());
          dm.noalias() = wm.transpose() * gm;
          col2im(dcol.data(), g, gx + i * plane);
        }
      }
    }
  });
}

template <typename T>
Var<T> transposed_conv2d(Var<T> input, Var<T> weight, Var<T> bias, std::size_t stride) {
  const Tensor<T>& x = input.value();
  const Tensor<T>& w = weight.value();
  require_rank4(x, "transposed_conv2d");
  if (w.rank() != 4 || w.dim(2) != w.dim(3)) {
    throw ShapeError("transposed_conv2d: weight must be [C_in, C_out, k, k], got " + shape_str(w.shape()));
  }
  const std::size_t k = w.dim(2);
  if (stride != 2 || (k != 2 && k != 4)) {
    throw ConfigError("transposed_conv2d: supported configurations are kernel 2 or 4 with stride 2");
  }
  const std::size_t padding = (k - 2) / 2;
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(1);
  if (w.dim(0) != cin) throw ShapeError("transposed_conv2d: channel mismatch");
  if (bias.value().shape() != Shape{cout}) throw ShapeError("transposed_conv2d: bias must be [C_out]");
  const std::size_t oh = 2 * h, ow = 2 * wd;
  // Window over the output plane whose sweep lands on the input grid.
  const Window g{cout, oh, ow, k, stride, padding, h, wd};

  Tensor<T> out({n, cout, oh, ow});
  AlignedVector<T> col(g.rows() * g.cols());
  ConstMatMap<T> wm(w.data().data(), cin, g.rows());
  const T* b = bias.value().data().data();
  for (std::size_t i = 0; i < n; ++i) {
    ConstMatMap<T> xm(x.data().data() + i * cin * h * wd, cin, h * wd);
    MatMap<T> cm(col.data(), g.rows(), g.cols());
    cm.noalias() = wm.transpose() * xm;
    T* dst = out.data().data() + i * cout * oh * ow;
    col2im(col.data(), g, dst);
    for (std::size_t oc = 0; oc < cout; ++oc) {
      for (std::size_t p = 0; p < oh * ow; ++p) dst[oc * oh * ow + p] += b[oc];
    }
  }

  return input.tape->record(std::move(out), {input, weight, bias},
                            [input, weight, bias, g, n, cin, h, wd](const Tensor<T>& grad, Tape<T>& tape) {
    const Tensor<T>& x = tape.value(input);
    const Tensor<T>& w = tape.value(weight);
    T* gx = tape.grad_buffer(input);
    T* gw = tape.grad_buffer(weight);
    T* gb = tape.grad_buffer(bias);
    const std::size_t out_plane = g.channels * g.height * g.width;
    AlignedVector<T> dcol(g.rows() * g.cols());
    ConstMatMap<T> wm(w.data().data(), cin, g.rows());
    for (std::size_t i = 0; i < n; ++i) {
      const T* gout = grad.data().data() + i * out_plane;
      if (gb) {
        const std::size_t hw = g.height * g.width;
        for (std::size_t oc = 0; oc < g.channels; ++oc) {
          T s = 0;
          for (std::size_t p = 0; p < hw; ++p) s += gout[oc * hw + p];
          gb[oc] += s;
        }
      }
      if (!gx && !gw) continue;
      im2col(gout, g, dcol.data());
      ConstMatMap<T> dm(dcol.data(), g.rows(), g.cols());
      if (gx) {
        MatMap<T> gxm(gx + i * cin * h * wd, cin, h * wd);
        gxm.noalias() += wm * dm;
      }
      if (gw) {
        ConstMatMap<T> xm(x.data().data() + i * cin * h * wd, cin, h * wd);
        MatMap<T> gwm(gw, cin, g.rows());
        gwm.noalias() += xm * dm.transpose();
      }
    }
  });
}

template <typename T>
Var<T> batchnorm(Var<T> input, Var<T> gamma, Var<T> beta, BatchNormState<T>& state, Mode mode) {
  const Tensor<T>& x = input.value();
  require_rank4(x, "batchnorm");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (gamma.value().shape() != Shape{c} || beta.value().shape() != Shape{c} ||
      state.running_mean.shape() != Shape{c} || state.running_var.shape() != Shape{c}) {
    throw ShapeError("batchnorm: parameters do not match " + std::to_string(c) + " channels");
  }
  const std::size_t count = n * hw;
  const bool training = mode == Mode::Train;
  if (training && count < 2) {
    throw DegenerateBatchError("batchnorm: train mode needs at least 2 values per channel");
  }

  auto mean = std::make_shared<std::vector<T>>(c);
  auto inv_std = std::make_shared<std::vector<T>>(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (training) {
      // Two-pass statistics in double to keep float training stable.
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = x.data().data() + (i * c + ch) * hw;
        for (std::size_t k = 0; k < hw; ++k) s += p[k];
      }
      const double mu = s / static_cast<double>(count);
      double ss = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = x.data().data() + (i * c + ch) * hw;
        for (std::size_t k = 0; k < hw; ++k) ss += (p[k] - mu) * (p[k] - mu);
      }
      const double var = ss / static_cast<double>(count);
      (*mean)[ch] = static_cast<T>(mu);
      (*inv_std)[ch] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(state.eps)));
      const double unbiased = ss / static_cast<double>(count - 1);
      state.running_mean[ch] = (T{1} - state.momentum) * state.running_mean[ch] + state.momentum * static_cast<T>(mu);
      state.running_var[ch] = (T{1} - state.momentum) * state.running_var[ch] + state.momentum * static_cast<T>(unbiased);
    } else {
      (*mean)[ch] = state.running_mean[ch];
      (*inv_std)[ch] = T{1} / std::sqrt(state.running_var[ch] + state.eps);
    }
  }

  Tensor<T> out(x.shape());
  const T* gm = gamma.value().data().data();
  const T* bt = beta.value().data().data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* src = x.data().data() + (i * c + ch) * hw;
      T* dst = out.data().data() + (i * c + ch) * hw;
      const T mu = (*mean)[ch], is = (*inv_std)[ch], ga = gm[ch], be = bt[ch];
      for (std::size_t k = 0; k < hw; ++k) dst[k] = (src[k] - mu) * is * ga + be;
    }
  }

  return input.tape->record(std::move(out), {input, gamma, beta},
                            [input, gamma, beta, mean, inv_std, n, c, hw, training](const Tensor<T>& g, Tape<T>& tape) {
    const Tensor<T>& x = tape.value(input);
    const T* gm = tape.value(gamma).data().data();
    T* gx = tape.grad_buffer(input);
    T* gg = tape.grad_buffer(gamma);
    T* gb = tape.grad_buffer(beta);
    const T count = static_cast<T>(n * hw);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T mu = (*mean)[ch], is = (*inv_std)[ch];
      T sum_g = 0, sum_gx = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* src = x.data().data() + (i * c + ch) * hw;
        const T* gr = g.data().data() + (i * c + ch) * hw;
        for (std::size_t k = 0; k < hw; ++k) {
          sum_g += gr[k];
          sum_gx += gr[k] * (src[k] - mu) * is;
        }
      }
      if (gg) gg[ch] += sum_gx;
      if (gb) gb[ch] += sum_g;
      if (!gx) continue;
      const T scale = gm[ch] * is;
      for (std::size_t i = 0; i < n; ++i) {
        const T* src = x.data().data() + (i * c + ch) * hw;
        const T* gr = g.data().data() + (i * c + ch) * hw;
        T* dst = gx + (i * c + ch) * hw;
        if (training) {
          for (std::size_t k = 0; k < hw; ++k) {
            const T xhat = (src[k] - mu) * is;
            dst[k] += scale * (gr[k] - sum_g / count - xhat * sum_gx / count);
          }
        } else {
          for (std::size_t k = 0; k < hw; ++k) dst[k] += scale * gr[k];
        }
      }
    }
  });
}

template <typename T>
Var<T> maxpool2d(Var<T> input, std::vector<std::size_t>* argmax_out) {
  const Tensor<T>& x = input.value();
  require_rank4(x, "maxpool2d");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("maxpool2d: spatial dims must be even, got " + shape_str(x.shape()));
  }
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor<T> out({n, c, oh, ow});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = base + (2 * i) * w + 2 * j;
        for (std::size_t di = 0; di < 2; ++di) {
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t idx = base + (2 * i + di) * w + 2 * j + dj;
            if (x[idx] > x[best]) best = idx;
          }
        }
        const std::size_t o = (plane * oh + i) * ow + j;
        out[o] = x[best];
        (*argmax)[o] = best;
      }
    }
  }
  if (argmax_out) *argmax_out = *argmax;
  return input.tape->record(std::move(out), {input}, [input, argmax](const Tensor<T>& g, Tape<T>& tape) {
    T* gx = tape.grad_buffer(input);
    for (std::size_t o = 0; o < argmax->size(); ++o) gx[(*argmax)[o]] += g[o];
  });
}

template <typename T>
Var<T> avg_pool2d(Var<T> input, std::size_t factor) {
  const Tensor<T>& x = input.value();
  require_rank4(x, "avg_pool2d");
  if (factor < 1) throw ConfigError("avg_pool2d: factor must be >= 1");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % factor != 0 || w % factor != 0) throw ShapeError("avg_pool2d: dims not divisible by factor");
  const std::size_t oh = h / factor, ow = w / factor;
  const T inv = T{1} / static_cast<T>(factor * factor);
  Tensor<T> out({n, c, oh, ow});
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const T* src = x.data().data() + plane * h * w;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        // Mean about the block's first element: exact for constant blocks.
        const T anchor = src[(i * factor) * w + j * factor];
        T dev = 0;
        for (std::size_t di = 0; di < factor; ++di) {
          for (std::size_t dj = 0; dj < factor; ++dj) dev += src[(i * factor + di) * w + j * factor + dj] - anchor;
        }
        out[(plane * oh + i) * ow + j] = anchor + dev * inv;
      }
    }
  }
  return input.tape->record(std::move(out), {input}, [input, factor, inv, h, w, oh, ow, n, c](const Tensor<T>& g, Tape<T>& tape) {
    T* gx = tape.grad_buffer(input);
    for (std::size_t plane = 0; plane < n * c; ++plane) {
      for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
          gx[plane * h * w + i * w + j] += g[(plane * oh + i / factor) * ow + j / factor] * inv;
        }
      }
    }
  });
}

template <typename T>
Var<T> nn_upsample(Var<T> input, std::size_t theta) {
  if (theta < 1) throw ConfigError("nn_upsample: theta must be >= 1");
  const Tensor<T>& x = input.value();
  require_rank4(x, "nn_upsample");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h * theta, ow = w * theta;
  Tensor<T> out({n, c, oh, ow});
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const T* src = x.data().data() + plane * h * w;
    T* dst = out.data().data() + plane * oh * ow;
    for (std::size_t i = 0; i < oh; ++i) {
      const T* row = src + (i / theta) * w;
      for (std::size_t j = 0; j < ow; ++j) dst[i * ow + j] = row[j / theta];
    }
  }
  return input.tape->record(std::move(out), {input}, [input, theta, n, c, h, w](const Tensor<T>& g, Tape<T>& tape) {
    T* gx = tape.grad_buffer(input);
    const std::size_t oh = h * theta, ow = w * theta;
    for (std::size_t plane = 0; plane < n * c; ++plane) {
      const T* src = g.data().data() + plane * oh * ow;
      T* dst = gx + plane * h * w;
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) dst[(i / theta) * w + j / theta] += src[i * ow + j];
      }
    }
  });
}

template <typename T>
Var<T> global_avg_pool(Var<T> input) {
  const Tensor<T>& x = input.value();
  require_rank4(x, "global_avg_pool");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> out({n, c});
  for (std::size_t p = 0; p < n * c; ++p) {
    T s = 0;
    for (std::size_t k = 0; k < hw; ++k) s += x[p * hw + k];
    out[p] = s / static_cast<T>(hw);
  }
  return input.tape->record(std::move(out), {input}, [input, n, c, hw](const Tensor<T>& g, Tape<T>& tape) {
    T* gx = tape.grad_buffer(input);
    const T inv = T{1} / static_cast<T>(hw);
    for (std::size_t p = 0; p < n * c; ++p) {
      for (std::size_t k = 0; k < hw; ++k) gx[p * hw + k] += g[p] * inv;
    }
  });
}

template <typename T>
Var<T> linear(Var<T> input, Var<T> weight, Var<T> bias) {
  const Tensor<T>& x = input.value();
  const Tensor<T>& w = weight.value();
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(1) || bias.value().shape() != Shape{w.dim(0)}) {
    throw ShapeError("linear: incompatible shapes " + shape_str(x.shape()) + " x " + shape_str(w.shape()));
  }
  const std::size_t n = x.dim(0), f = x.dim(1), o = w.dim(0);
  Tensor<T> out({n, o});
  ConstMatMap<T> xm(x.data().data(), n, f);
  ConstMatMap<T> wm(w.data().data(), o, f);
  MatMap<T> om(out.data().data(), n, o);
  om.noalias() = xm * wm.transpose();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < o; ++j) om(i, j) += bias.value()[j];
  }
  return input.tape->record(std::move(out), {input, weight, bias}, [input, weight, bias, n, f, o](const Tensor<T>& g, Tape<T>& tape) {
    ConstMatMap<T> gm(g.data().data(), n, o);
    if (T* gx = tape.grad_buffer(input)) {
      MatMap<T> gxm(gx, n, f);
      gxm.noalias() += gm * ConstMatMap<T>(tape.value(weight).data().data(), o, f);
    }
    if (T* gw = tape.grad_buffer(weight)) {
      MatMap<T> gwm(gw, o, f);
      gwm.noalias() += gm.transpose() * ConstMatMap<T>(tape.value(input).data().data(), n, f);
    }
    if (T* gb = tape.grad_buffer(bias)) {
      for (std::size_t j = 0; j < o; ++j) gb[j] += gm.col(j).sum();
    }
  });
}

template <typename T>
Tensor<T> he_init(const Shape& shape, std::uint64_t seed) {
  if (shape.size() < 2) throw ShapeError("he_init: expected a weight shape, got " + shape_str(shape));
  std::size_t fan_in = 1;
  for (std::size_t d = 1; d < shape.size(); ++d) fan_in *= shape[d];
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor<T> out(shape);
  for (auto& v : out.data()) v = static_cast<T>(normal(rng));
  return out;
}

#define UNETPLUS_INSTANTIATE_LAYERS(T)                                                    \
  template Var<T> conv2d(Var<T>, Var<T>, Var<T>, std::size_t, std::size_t);              \
  template Var<T> transposed_conv2d(Var<T>, Var<T>, Var<T>, std::size_t);                \
  template Var<T> batchnorm(Var<T>, Var<T>, Var<T>, BatchNormState<T>&, Mode);           \
  template Var<T> maxpool2d(Var<T>, std::vector<std::size_t>*);                          \
  template Var<T> avg_pool2d(Var<T>, std::size_t);                                       \
  template Var<T> nn_upsample(Var<T>, std::size_t);                                      \
  template Var<T> global_avg_pool(Var<T>);                                               \
  template Var<T> linear(Var<T>, Var<T>, Var<T>);                                        \
  template Tensor<T> he_init(const Shape&, std::uint64_t);

UNETPLUS_INSTANTIATE_LAYERS(float)
UNETPLUS_INSTANTIATE_LAYERS(double)

}  // namespace unetplus
