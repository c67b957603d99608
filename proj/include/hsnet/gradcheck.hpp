#pragma once

#include <string>

#include "hsnet/graph.hpp"
#include "hsnet/loss.hpp"

namespace hsnet {

struct ParameterCoordinate {
  std::string layer;
  std::string param;
  std::size_t index = 0;  // flat row-major index into the parameter
};

/// Central difference (E(theta + h) - E(theta - h)) / 2h for one scalar
/// parameter, all others fixed. Independent of network_backward.
double finite_difference_gradient(const NetworkGraph& graph, const Tensor& input,
                                  const Tensor& target, LossKind kind,
                                  const ParameterCoordinate& coord, double h);

}  // namespace hsnet
