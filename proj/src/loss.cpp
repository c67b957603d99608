#include "hsnet/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hsnet/errors.hpp"

namespace hsnet {

std::string_view to_string(LossKind kind) {
  return kind == LossKind::mse ? "mse" : "softmax_cross_entropy";
}

LossKind loss_from_string(std::string_view name) {
  if (name == "mse") return LossKind::mse;
  if (name == "softmax_cross_entropy" || name == "cross_entropy") {
    return LossKind::softmax_cross_entropy;
  }
  throw ConfigError("unknown loss '" + std::string(name) + "'");
}

namespace {

LossResult mse(const Tensor& output, const Tensor& target) {
  if (output.shape() != target.shape()) {
    throw DimensionError("mse: output " + shape_string(output.shape()) + " vs target " +
                         shape_string(target.shape()));
  }
  LossResult r{0.0, Tensor(output.shape())};
  const double n = static_cast<double>(output.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < output.size(); ++i) {
    const double d = output[i] - target[i];
    sum += d * d;
    r.grad[i] = 2.0 * d / n;
  }
  r.value = output.size() ? sum / n : 0.0;
  return r;
}

LossResult cross_entropy(const Tensor& output, const Tensor& target) {
  if (output.rank() != 1 && output.rank() != 2) {
    throw DimensionError("cross-entropy: logits must be [classes] or [batch x classes], got " +
                         shape_string(output.shape()));
  }
  const std::size_t batch = output.rank() == 2 ? output.dim(0) : 1;
  const std::size_t classes = output.rank() == 2 ? output.dim(1) : output.dim(0);
  const bool indices = target.size() == batch && target.shape() != output.shape();
  if (!indices && target.shape() != output.shape()) {
    throw DimensionError("cross-entropy: target " + shape_string(target.shape()) +
                         " does not fit logits " + shape_string(output.shape()));
  }

  LossResult r{0.0, Tensor(output.shape())};
  std::vector<double> p(classes);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* z = output.data().data() + b * classes;
    const double zmax = *std::max_element(z, z + classes);
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) denom += std::exp(z[c] - zmax);
    const double log_denom = std::log(denom);
    for (std::size_t c = 0; c < classes; ++c) p[c] = std::exp(z[c] - zmax - log_denom);

    double* g = r.grad.data().data() + b * classes;
    if (indices) {
      const double label = target[b];
      if (label < 0 || label >= static_cast<double>(classes) || label != std::floor(label)) {
        throw DomainError("cross-entropy: class index " + std::to_string(label) + " out of range");
      }
      const auto k = static_cast<std::size_t>(label);
      r.value -= z[k] - zmax - log_denom;
      for (std::size_t c = 0; c < classes; ++c) g[c] = (p[c] - (c == k ? 1.0 : 0.0)) / batch;
    } else {
      const double* t = target.data().data() + b * classes;
      double mass = 0.0;
      for (std::size_t c = 0; c < classes; ++c) {
        mass += t[c];
        if (t[c] != 0.0) r.value -= t[c] * (z[c] - zmax - log_denom);
      }
      for (std::size_t c = 0; c < classes; ++c) g[c] = (p[c] * mass - t[c]) / batch;
    }
  }
  r.value /= static_cast<double>(batch);
  return r;
}

}  // namespace

LossResult loss(const Tensor& output, const Tensor& target, LossKind kind) {
  return kind == LossKind::mse ? mse(output, target) : cross_entropy(output, target);
}

double loss_value(const Tensor& output, const Tensor& target, LossKind kind) {
  if (kind == LossKind::mse) {
    if (output.shape() != target.shape()) return mse(output, target).value;  // throws
    double sum = 0.0;
    for (std::size_t i = 0; i < output.size(); ++i) {
      const double d = output[i] - target[i];
      sum += d * d;
    }
    return output.size() ? sum / static_cast<double>(output.size()) : 0.0;
  }
  return cross_entropy(output, target).value;
}

}  // namespace hsnet
