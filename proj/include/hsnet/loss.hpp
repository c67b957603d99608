#pragma once

#include <string_view>

#include "hsnet/tensor.hpp"

namespace hsnet {

/// MSE averages over every batch and output element. Cross-entropy takes
/// logits, applies softmax internally and averages over the batch.
enum class LossKind { mse, softmax_cross_entropy };

std::string_view to_string(LossKind kind);
LossKind loss_from_string(std::string_view name);

struct LossResult {
  double value = 0.0;
  Tensor grad;  // d value / d output, shaped like the output
};

/// For cross-entropy `target` is either shaped like `output` (one-hot or
/// probabilities) or holds one class index per row.
LossResult loss(const Tensor& output, const Tensor& target, LossKind kind);

/// Loss value only.
double loss_value(const Tensor& output, const Tensor& target, LossKind kind);

}  // namespace hsnet
