#pragma once

#include <cstddef>
#include <optional>
#include <string_view>

#include "hsnet/tensor.hpp"

namespace hsnet {

enum class ActivationFn { relu, linear };

std::string_view to_string(ActivationFn fn);
ActivationFn activation_from_string(std::string_view name);

// Forward kernels. Batched inputs carry the batch on axis 0.

/// u = W x (+ b). `x` is [in] or [batch x ...] whose trailing axes flatten to `in`.
Tensor dense_forward(const Tensor& weights, const std::optional<Tensor>& bias, const Tensor& x);

/// Cross-correlation with zero padding. `x` is [in x h x w] or [batch x in x h x w];
/// filters are [out x in x kh x kw].
Tensor conv2d_forward(const Tensor& filters, const std::optional<Tensor>& bias, const Tensor& x,
                      std::size_t stride, std::size_t padding);

/// Output spatial extent of a convolution, or ConfigError when it is not a
/// positive integer.
std::size_t conv_output_extent(std::size_t input, std::size_t kernel, std::size_t stride,
                               std::size_t padding);

Tensor activate(const Tensor& u, ActivationFn fn);

/// x_i = s_i v_i. The node axis of `v` is axis 0 for [n] and [n x h x w],
/// axis 1 for [batch x n] and [batch x n x h x w]; spatial axes share one s.
Tensor sensitivity_forward(const Tensor& s, const Tensor& v);

// Backward kernels, all batched.

struct DenseGrads {
  Tensor input;
  Tensor weights;
  std::optional<Tensor> bias;
};

/// `x` is the cached layer input, `grad_out` is dE/du with shape [batch x out].
/// `input` is left empty when `need_input_grad` is false.
DenseGrads dense_backward(const Tensor& weights, bool has_bias, const Tensor& x,
                          const Tensor& grad_out, bool need_input_grad = true);

struct ConvGrads {
  Tensor input;
  Tensor filters;
  std::optional<Tensor> bias;
};

ConvGrads conv2d_backward(const Tensor& filters, bool has_bias, const Tensor& x,
                          const Tensor& grad_out, std::size_t stride, std::size_t padding,
                          bool need_input_grad = true);

/// dE/du given dE/dv and the cached pre-activation u. relu'(0) is 0.
Tensor activation_backward(const Tensor& u, const Tensor& grad_out, ActivationFn fn);

struct SensitivityGrads {
  Tensor input;
  Tensor s;
};

SensitivityGrads sensitivity_backward(const Tensor& s, const Tensor& v, const Tensor& grad_out);

}  // namespace hsnet
