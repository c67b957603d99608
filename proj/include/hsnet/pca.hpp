#pragma once

#include <vector>

#include "hsnet/data.hpp"
#include "hsnet/graph.hpp"

namespace hsnet {

/// Principal components of the sample covariance (normalized by n).
struct PcaModel {
  Tensor mean;                    // [d]
  Tensor components;              // [k x d], orthonormal rows
  std::vector<double> eigenvalues;  // all d eigenvalues, descending

  std::size_t component_count() const { return components.rank() ? components.dim(0) : 0; }
};

/// Top-k eigenvectors of the covariance of the flattened inputs.
PcaModel fit_pca(const Dataset& data, std::size_t k);

/// Mean squared error (over samples and dimensions) of projecting onto the
/// first k components and reconstructing.
double pca_reconstruction_mse(const PcaModel& model, const Dataset& data, std::size_t k);

/// Autoencoder reconstruction MSE with every sensitivity of the first
/// trainable sensitivity layer zeroed except the k largest in magnitude.
double topk_node_reconstruction_mse(const NetworkGraph& graph, const Dataset& data, std::size_t k);

}  // namespace hsnet
