#include "hsnet/pca.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "hsnet/errors.hpp"
#include "hsnet/loss.hpp"
#include "hsnet/train.hpp"

namespace hsnet {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMatrix> as_matrix(const Tensor& inputs) {
  const std::size_t n = inputs.dim(0);
  return {inputs.data().data(), static_cast<Eigen::Index>(n),
          static_cast<Eigen::Index>(n ? inputs.size() / n : 0)};
}

}  // namespace

PcaModel fit_pca(const Dataset& data, std::size_t k) {
  data.validate();
  const auto x = as_matrix(data.inputs);
  const auto d = static_cast<std::size_t>(x.cols());
  if (k < 1 || k > d) {
    throw LookupError("pca: k = " + std::to_string(k) + " outside [1, " + std::to_string(d) + "]");
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const RowMatrix centered = x.rowwise() - mean;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(x.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw Error("pca: eigendecomposition failed");

  PcaModel model;
  model.mean = Tensor({d});
  for (std::size_t j = 0; j < d; ++j) model.mean[j] = mean[static_cast<Eigen::Index>(j)];
  // Eigen returns ascending eigenvalues.
  model.eigenvalues.resize(d);
  model.components = Tensor({k, d});
  for (std::size_t r = 0; r < d; ++r) {
    const auto col = static_cast<Eigen::Index>(d - 1 - r);
    model.eigenvalues[r] = solver.eigenvalues()[col];
    if (r < k) {
      for (std::size_t j = 0; j < d; ++j) {
        model.components.at(r, j) = solver.eigenvectors()(static_cast<Eigen::Index>(j), col);
      }
    }
  }
  return model;
}

double pca_reconstruction_mse(const PcaModel& model, const Dataset& data, std::size_t k) {
  if (k > model.component_count()) {
    throw LookupError("pca: k = " + std::to_string(k) + " exceeds " +
                      std::to_string(model.component_count()) + " fitted components");
  }
  const auto x = as_matrix(data.inputs);
  const std::size_t d = model.mean.size();
  if (static_cast<std::size_t>(x.cols()) != d) throw DimensionError("pca: dimension mismatch");
  Eigen::Map<const Eigen::RowVectorXd> mean(model.mean.data().data(), static_cast<Eigen::Index>(d));
  const RowMatrix centered = x.rowwise() - mean;
  Eigen::Map<const RowMatrix> p(model.components.data().data(),
                                static_cast<Eigen::Index>(model.component_count()),
                                static_cast<Eigen::Index>(d));
  const auto pk = p.topRows(static_cast<Eigen::Index>(k));
  const RowMatrix residual = centered - (centered * pk.transpose()) * pk;
  return residual.squaredNorm() / static_cast<double>(x.size());
}

double topk_node_reconstruction_mse(const NetworkGraph& graph, const Dataset& data, std::size_t k) {
  const auto layers = trainable_sensitivity_layers(graph);
  if (layers.empty()) throw StructuralError("graph has no trainable sensitivity layer");
  NetworkGraph masked = graph;
  auto& s = std::get<SensitivityLayer>(masked.mutable_layer(layers.front()).kind).s;
  if (k > s.size()) {
    throw LookupError("k = " + std::to_string(k) + " exceeds hidden width " +
                      std::to_string(s.size()));
  }
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(s[a]) > std::abs(s[b]); });
  for (std::size_t r = k; r < order.size(); ++r) s[order[r]] = 0.0;
  return deviation_penalty(masked, data, LossKind::mse);
}

}  // namespace hsnet
