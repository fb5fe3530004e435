#include "unetplus/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <limits>

namespace unetplus {
namespace {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

template <typename T>
void require_rank4(const Tensor<T>& a, const char* op) {
  if (a.rank() != 4) throw ShapeError(std::string(op) + ": expected NCHW tensor, got " + shape_str(a.shape()));
}

// Forward value f(x); backward multiplies by df(x).
template <typename T, typename F, typename D>
Var<T> unary(Var<T> a, F f, D df) {
  const Tensor<T>& x = a.value();
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return a.tape->record(std::move(y), {a}, [a, df](const Tensor<T>& g, Tape<T>& tape) {
    T* ga = tape.grad_buffer(a);
    const Tensor<T>& x = tape.value(a);
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g[i] * df(x[i]);
  });
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= 0) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <typename T>
T stable_softplus(T x) {
  return std::max(x, T{0}) + std::log1p(std::exp(-std::abs(x)));
}

struct ReduceMap {
  Shape out_shape;
  std::vector<std::size_t> index;  // input flat index -> output flat index
  std::size_t count = 1;           // inputs per output
};

ReduceMap make_reduce_map(const Shape& shape, std::vector<std::size_t> axes) {
  const std::size_t rank = shape.size();
  std::vector<bool> reduced(rank, axes.empty());
  for (std::size_t ax : axes) {
    if (ax >= rank) throw ShapeError("reduce: axis " + std::to_string(ax) + " invalid for shape " + shape_str(shape));
    if (reduced[ax]) throw ShapeError("reduce: duplicate axis " + std::to_string(ax));
    reduced[ax] = true;
  }
  ReduceMap map;
  std::vector<std::size_t> out_stride(rank, 0);
  std::size_t stride = 1;
  for (std::size_t d = rank; d-- > 0;) {
    if (reduced[d]) {
      map.count *= shape[d];
    } else {
      out_stride[d] = stride;
      stride *= shape[d];
    }
  }
  for (std::size_t d = 0; d < rank; ++d) {
    if (!reduced[d]) map.out_shape.push_back(shape[d]);
  }
  const std::size_t n = shape_numel(shape);
  map.index.resize(n);
  std::vector<std::size_t> coord(rank, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t o = 0;
    for (std::size_t d = 0; d < rank; ++d) o += coord[d] * out_stride[d];
    map.index[i] = o;
    for (std::size_t d = rank; d-- > 0;) {
      if (++coord[d] < shape[d]) break;
      coord[d] = 0;
    }
  }
  return map;
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  const Tensor<T>& x = a.value();
  const Tensor<T>& y = b.value();
  require_same_shape(x, y, "add");
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](const Tensor<T>& g, Tape<T>& tape) {
    tape.accumulate_grad(a, g);
    tape.accumulate_grad(b, g);
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  const Tensor<T>& x = a.value();
  const Tensor<T>& y = b.value();
  require_same_shape(x, y, "sub");
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](const Tensor<T>& g, Tape<T>& tape) {
    tape.accumulate_grad(a, g);
    if (T* gb = tape.grad_buffer(b)) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  const Tensor<T>& x = a.value();
  const Tensor<T>& y = b.value();
  require_same_shape(x, y, "mul");
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](const Tensor<T>& g, Tape<T>& tape) {
    const Tensor<T>& x = tape.value(a);
    const Tensor<T>& y = tape.value(b);
    if (T* ga = tape.grad_buffer(a)) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    }
    if (T* gb = tape.grad_buffer(b)) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
    }
  });
}

template <typename T>
Var<T> div(Var<T> a, Var<T> b) {
  const Tensor<T>& x = a.value();
  const Tensor<T>& y = b.value();
  require_same_shape(x, y, "div");
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (strict_mode() && y[i] == T{0}) throw DomainError("div: division by zero");
    out[i] = x[i] / y[i];
  }
  return a.tape->record(std::move(out), {a, b}, [a, b](const Tensor<T>& g, Tape<T>& tape) {
    const Tensor<T>& x = tape.value(a);
    const Tensor<T>& y = tape.value(b);
    if (T* ga = tape.grad_buffer(a)) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / y[i];
    }
    if (T* gb = tape.grad_buffer(b)) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * x[i] / (y[i] * y[i]);
    }
  });
}

template <typename T>
Var<T> add(Var<T> a, T b) {
  return unary(a, [b](T x) { return x + b; }, [](T) { return T{1}; });
}

template <typename T>
Var<T> mul(Var<T> a, T b) {
  return unary(a, [b](T x) { return x * b; }, [b](T) { return b; });
}

template <typename T>
Var<T> rsub(T a, Var<T> b) {
  return unary(b, [a](T x) { return a - x; }, [](T) { return T{-1}; });
}

template <typename T>
Var<T> log(Var<T> a) {
  if (strict_mode()) {
    for (T v : a.value().data()) {
      if (!(v > T{0})) throw DomainError("log: non-positive argument");
    }
  }
  return unary(a, [](T x) { return std::log(x); }, [](T x) { return T{1} / x; });
}

template <typename T>
Var<T> exp(Var<T> a) {
  return unary(a, [](T x) { return std::exp(x); }, [](T x) { return std::exp(x); });
}

template <typename T>
Var<T> maximum(Var<T> a, T floor) {
  return unary(a, [floor](T x) { return x > floor ? x : floor; },
               [floor](T x) { return x > floor ? T{1} : T{0}; });
}

template <typename T>
Var<T> clamp(Var<T> a, T lo, T hi) {
  if (!(lo <= hi)) throw ConfigError("clamp: lo > hi");
  return unary(a, [lo, hi](T x) { return std::clamp(x, lo, hi); },
               [lo, hi](T x) { return (x >= lo && x <= hi) ? T{1} : T{0}; });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  return unary(a, [](T x) { return stable_sigmoid(x); },
               [](T x) {
                 const T s = stable_sigmoid(x);
                 return s * (T{1} - s);
               });
}

template <typename T>
Var<T> softplus(Var<T> a) {
  return unary(a, [](T x) { return stable_softplus(x); }, [](T x) { return stable_sigmoid(x); });
}

template <typename T>
Var<T> mul(Var<T> a, const Tensor<T>& b) {
  const Tensor<T>& x = a.value();
  require_same_shape(x, b, "mul");
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * b[i];
  return a.tape->record(std::move(out), {a}, [a, b](const Tensor<T>& g, Tape<T>& tape) {
    T* ga = tape.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
  });
}

template <typename T>
Var<T> sum(Var<T> a, std::vector<std::size_t> axes) {
  const Tensor<T>& x = a.value();
  ReduceMap map = make_reduce_map(x.shape(), std::move(axes));
  Tensor<T> out(map.out_shape);
  for (std::size_t i = 0; i < x.size(); ++i) out[map.index[i]] += x[i];
  auto index = std::make_shared<std::vector<std::size_t>>(std::move(map.index));
  return a.tape->record(std::move(out), {a}, [a, index](const Tensor<T>& g, Tape<T>& tape) {
    T* ga = tape.grad_buffer(a);
    for (std::size_t i = 0; i < index->size(); ++i) ga[i] += g[(*index)[i]];
  });
}

template <typename T>
Var<T> mean(Var<T> a, std::vector<std::size_t> axes) {
  const Tensor<T>& x = a.value();
  ReduceMap map = make_reduce_map(x.shape(), std::move(axes));
  Tensor<T> out(map.out_shape);
  for (std::size_t i = 0; i < x.size(); ++i) out[map.index[i]] += x[i];
  const T inv = T{1} / static_cast<T>(map.count);
  for (auto& v : out.data()) v *= inv;
  auto index = std::make_shared<std::vector<std::size_t>>(std::move(map.index));
  return a.tape->record(std::move(out), {a}, [a, index, inv](const Tensor<T>& g, Tape<T>& tape) {
    T* ga = tape.grad_buffer(a);
    for (std::size_t i = 0; i < index->size(); ++i) ga[i] += g[(*index)[i]] * inv;
  });
}

template <typename T>
Var<T> max(Var<T> a, std::vector<std::size_t> axes) {
  const Tensor<T>& x = a.value();
  ReduceMap map = make_reduce_map(x.shape(), std::move(axes));
  Tensor<T> out(map.out_shape, -std::numeric_limits<T>::infinity());
  const std::size_t none = std::numeric_limits<std::size_t>::max();
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size(), none);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t o = map.index[i];
    if ((*argmax)[o] == none || x[i] > out[o]) {
      out[o] = x[i];
      (*argmax)[o] = i;
    }
  }
  return a.tape->record(std::move(out), {a}, [a, argmax](const Tensor<T>& g, Tape<T>& tape) {
    T* ga = tape.grad_buffer(a);
    for (std::size_t o = 0; o < argmax->size(); ++o) ga[(*argmax)[o]] += g[o];
  });
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  Tensor<T> out = a.value().reshaped(std::move(shape));
  return a.tape->record(std::move(out), {a}, [a](const Tensor<T>& g, Tape<T>& tape) {
    T* ga = tape.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b) {
  const Tensor<T>& x = a.value();
  const Tensor<T>& y = b.value();
  require_rank4(x, "concat_channels");
  require_rank4(y, "concat_channels");
  if (x.dim(0) != y.dim(0) || x.dim(2) != y.dim(2) || x.dim(3) != y.dim(3)) {
    throw ShapeError("concat_channels: incompatible shapes " + shape_str(x.shape()) + " and " +
                     shape_str(y.shape()));
  }
  const std::size_t n = x.dim(0), ca = x.dim(1), cb = y.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> out({n, ca + cb, x.dim(2), x.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(x.data().begin() + i * ca * hw, ca * hw, out.data().begin() + i * (ca + cb) * hw);
    std::copy_n(y.data().begin() + i * cb * hw, cb * hw, out.data().begin() + (i * (ca + cb) + ca) * hw);
  }
  return a.tape->record(std::move(out), {a, b}, [a, b, n, ca, cb, hw](const Tensor<T>& g, Tape<T>& tape) {
    if (T* ga = tape.grad_buffer(a)) {
      for (std::size_t i = 0; i < n; ++i) {
        const T* src = g.data().data() + i * (ca + cb) * hw;
        for (std::size_t k = 0; k < ca * hw; ++k) ga[i * ca * hw + k] += src[k];
      }
    }
    if (T* gb = tape.grad_buffer(b)) {
      for (std::size_t i = 0; i < n; ++i) {
        const T* src = g.data().data() + (i * (ca + cb) + ca) * hw;
        for (std::size_t k = 0; k < cb * hw; ++k) gb[i * cb * hw + k] += src[k];
      }
    }
  });
}

template <typename T>
Var<T> channel(Var<T> a, std::size_t c) {
  const Tensor<T>& x = a.value();
  require_rank4(x, "channel");
  if (c >= x.dim(1)) throw ShapeError("channel: index out of range");
  const std::size_t n = x.dim(0), ch = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> out({n, 1, x.dim(2), x.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(x.data().begin() + (i * ch + c) * hw, hw, out.data().begin() + i * hw);
  }
  return a.tape->record(std::move(out), {a}, [a, c, n, ch, hw](const Tensor<T>& g, Tape<T>& tape) {
    T* ga = tape.grad_buffer(a);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < hw; ++k) ga[(i * ch + c) * hw + k] += g[i * hw + k];
    }
  });
}

template <typename T>
Tensor<T> sigmoid_values(const Tensor<T>& logits) {
  Tensor<T> out(logits.shape());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = stable_sigmoid(logits[i]);
  return out;
}

template <typename T>
Tensor<T> softmax_channel_values(const Tensor<T>& x) {
  require_rank4(x, "softmax_channels");
  const std::size_t n = x.dim(0), ch = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < hw; ++p) {
      T m = -std::numeric_limits<T>::infinity();
      for (std::size_t c = 0; c < ch; ++c) m = std::max(m, x[(i * ch + c) * hw + p]);
      T total = 0;
      for (std::size_t c = 0; c < ch; ++c) {
        const T e = std::exp(x[(i * ch + c) * hw + p] - m);
        out[(i * ch + c) * hw + p] = e;
        total += e;
      }
      for (std::size_t c = 0; c < ch; ++c) out[(i * ch + c) * hw + p] /= total;
    }
  }
  return out;
}

template <typename T>
Var<T> softmax_channels(Var<T> a) {
  Tensor<T> out = softmax_channel_values(a.value());
  const Shape shape = out.shape();
  // The rule needs the softmax output; keep a copy alongside the closure.
  auto probs = std::make_shared<Tensor<T>>(out);
  return a.tape->record(std::move(out), {a}, [a, probs, shape](const Tensor<T>& g, Tape<T>& tape) {
    T* ga = tape.grad_buffer(a);
    const std::size_t n = shape[0], ch = shape[1], hw = shape[2] * shape[3];
    const Tensor<T>& y = *probs;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t p = 0; p < hw; ++p) {
        T dot = 0;
        for (std::size_t c = 0; c < ch; ++c) dot += g[(i * ch + c) * hw + p] * y[(i * ch + c) * hw + p];
        for (std::size_t c = 0; c < ch; ++c) {
          const std::size_t k = (i * ch + c) * hw + p;
          ga[k] += y[k] * (g[k] - dot);
        }
      }
    }
  });
}

#define UNETPLUS_INSTANTIATE_OPS(T)                                        \
  template Var<T> add(Var<T>, Var<T>);                                     \
  template Var<T> sub(Var<T>, Var<T>);                                     \
  template Var<T> mul(Var<T>, Var<T>);                                     \
  template Var<T> div(Var<T>, Var<T>);                                     \
  template Var<T> add(Var<T>, T);                                          \
  template Var<T> mul(Var<T>, T);                                          \
  template Var<T> rsub(T, Var<T>);                                         \
  template Var<T> log(Var<T>);                                             \
  template Var<T> exp(Var<T>);                                             \
  template Var<T> maximum(Var<T>, T);                                      \
  template Var<T> clamp(Var<T>, T, T);                                     \
  template Var<T> sigmoid(Var<T>);                                         \
  template Var<T> softplus(Var<T>);                                        \
  template Var<T> mul(Var<T>, const Tensor<T>&);                           \
  template Var<T> sum(Var<T>, std::vector<std::size_t>);                   \
  template Var<T> mean(Var<T>, std::vector<std::size_t>);                  \
  template Var<T> max(Var<T>, std::vector<std::size_t>);                   \
  template Var<T> reshape(Var<T>, Shape);                                  \
  template Var<T> concat_channels(Var<T>, Var<T>);                         \
  template Var<T> channel(Var<T>, std::size_t);                            \
  template Var<T> softmax_channels(Var<T>);                                \
  template Tensor<T> sigmoid_values(const Tensor<T>&);                     \
  template Tensor<T> softmax_channel_values(const Tensor<T>&);

UNETPLUS_INSTANTIATE_OPS(float)
UNETPLUS_INSTANTIATE_OPS(double)

}  // namespace unetplus
