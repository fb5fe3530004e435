#pragma once

#include <vector>

#include "unetplus/autodiff.hpp"

namespace unetplus {

// Elementwise arithmetic. Tensor-tensor forms require equal shapes; the
// scalar forms broadcast the scalar.
template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> div(Var<T> a, Var<T> b);
template <typename T> Var<T> add(Var<T> a, T b);
template <typename T> Var<T> mul(Var<T> a, T b);
template <typename T> Var<T> rsub(T a, Var<T> b);  // a - b
template <typename T> Var<T> log(Var<T> a);
template <typename T> Var<T> exp(Var<T> a);
template <typename T> Var<T> maximum(Var<T> a, T floor);
template <typename T> Var<T> relu(Var<T> a) { return maximum(a, T{0}); }
template <typename T> Var<T> clamp(Var<T> a, T lo, T hi);
template <typename T> Var<T> sigmoid(Var<T> a);
// log(1 + e^x), evaluated without overflow.
template <typename T> Var<T> softplus(Var<T> a);

// Elementwise product with a constant tensor of the same shape.
template <typename T> Var<T> mul(Var<T> a, const Tensor<T>& b);

template <typename T> Var<T> operator+(Var<T> a, Var<T> b) { return add(a, b); }
template <typename T> Var<T> operator-(Var<T> a, Var<T> b) { return sub(a, b); }
template <typename T> Var<T> operator*(Var<T> a, Var<T> b) { return mul(a, b); }
template <typename T> Var<T> operator/(Var<T> a, Var<T> b) { return div(a, b); }

// Reductions. An empty axis list reduces over every axis. Reduced axes are
// dropped from the result shape. Max routes gradient to the first maximum.
template <typename T> Var<T> sum(Var<T> a, std::vector<std::size_t> axes = {});
template <typename T> Var<T> mean(Var<T> a, std::vector<std::size_t> axes = {});
template <typename T> Var<T> max(Var<T> a, std::vector<std::size_t> axes = {});

template <typename T> Var<T> reshape(Var<T> a, Shape shape);

// Concatenates two NCHW tensors along the channel axis.
template <typename T> Var<T> concat_channels(Var<T> a, Var<T> b);

// Selects channel c of an NCHW tensor, returning [N,1,H,W].
template <typename T> Var<T> channel(Var<T> a, std::size_t c);

// Softmax across the channel axis of an NCHW tensor.
template <typename T> Var<T> softmax_channels(Var<T> a);

// Value-level softmax/sigmoid helpers used outside of differentiation.
template <typename T> Tensor<T> sigmoid_values(const Tensor<T>& logits);
template <typename T> Tensor<T> softmax_channel_values(const Tensor<T>& logits);

}  // namespace unetplus
