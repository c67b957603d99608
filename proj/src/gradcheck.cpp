#include "hsnet/gradcheck.hpp"

#include "hsnet/errors.hpp"

namespace hsnet {

double finite_difference_gradient(const NetworkGraph& graph, const Tensor& input,
                                  const Tensor& target, LossKind kind,
                                  const ParameterCoordinate& coord, double h) {
  if (!(h > 0.0)) throw DomainError("finite difference step must be positive");
  NetworkGraph probe = graph;
  Tensor& param = probe.mutable_parameter(coord.layer, coord.param);
  if (coord.index >= param.size()) {
    throw LookupError("index " + std::to_string(coord.index) + " out of range for " + coord.layer +
                      "." + coord.param + " " + shape_string(param.shape()));
  }
  const double original = param[coord.index];

  param[coord.index] = original + h;
  const double up = loss_value(network_predict(probe, input), target, kind);
  param[coord.index] = original - h;
  const double down = loss_value(network_predict(probe, input), target, kind);
  return (up - down) / (2.0 * h);
}

}  // namespace hsnet
