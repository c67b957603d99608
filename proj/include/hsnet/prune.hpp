#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "hsnet/graph.hpp"

namespace hsnet {

/// Node indices of one trainable sensitivity layer with |s_i| <= threshold.
struct LayerNodeSet {
  std::string layer;  // sensitivity layer name
  std::vector<std::size_t> nodes;
};

/// Every trainable sensitivity layer appears, possibly with an empty set.
/// The frozen output layer is never listed.
std::vector<LayerNodeSet> zero_sensitivity_nodes(const NetworkGraph& graph, double threshold);

/// Default removal threshold: 0 for proximal training (exact zeros), and
/// 1e-4 * max|s| over all trainable sensitivities for subgradient training.
double default_prune_threshold(const NetworkGraph& graph, bool proximal);

struct LayerPruneRecord {
  std::string layer;     // sensitivity layer name
  std::string producer;  // dense/conv layer whose rows/filters were removed
  std::vector<std::size_t> kept;
  std::vector<std::size_t> removed;
};

struct PruneReport {
  double threshold = 0.0;
  std::vector<LayerPruneRecord> layers;

  std::size_t removed_count() const;
};

struct PruneResult {
  NetworkGraph graph;
  PruneReport report;
};

/// Removes every node with |s| <= threshold: its row (dense) or output
/// filter (conv) and bias entry in the producing layer, its s entry, and the
/// matching input column / input-channel slice of the next parametric layer.
/// Throws StructuralError if a layer would become empty or if the removed
/// nodes feed the network output directly.
PruneResult prune_graph(const NetworkGraph& graph, double threshold);

struct LosslessCheck {
  bool passed = false;
  double max_deviation = 0.0;
};

/// Largest |original(x) - pruned(x)| over the probe batch compared with `tol`.
LosslessCheck assert_lossless(const NetworkGraph& original, const NetworkGraph& pruned,
                              const Tensor& probes, double tol);

/// Counts under a fixed convention: one multiply-accumulate is 2 FLOPs;
/// dense = 2*in*out (+out with bias); conv = 2*kh*kw*in*out*h'*w'
/// (+out*h'*w' with bias); activation and sensitivity scaling cost 1 FLOP
/// per element. Nodes are dense outputs plus conv output channels; weights
/// include biases and trainable sensitivities.
struct ComplexityReport {
  std::size_t node_count = 0;
  std::size_t weight_count = 0;
  std::size_t flop_count = 0;

  friend bool operator==(const ComplexityReport&, const ComplexityReport&) = default;
};

ComplexityReport complexity(const NetworkGraph& graph);

/// "39.30%" style ratio of two counts; baseline 0 yields "n/a".
std::string format_ratio(double value, double baseline);

/// Table with baseline / pruned / ratio columns for nodes, weights and FLOPs.
void write_complexity_table(std::ostream& os, const ComplexityReport& baseline,
                            const ComplexityReport& pruned);
/// CSV columns: metric,baseline,pruned,ratio_percent.
void write_complexity_csv(std::ostream& os, const ComplexityReport& baseline,
                          const ComplexityReport& pruned);
/// Inverse of write_complexity_csv.
std::pair<ComplexityReport, ComplexityReport> read_complexity_csv(std::istream& is);

/// CSV columns: layer,producer,threshold,status,node (one row per node).
void write_prune_csv(std::ostream& os, const PruneReport& report);
PruneReport read_prune_csv(std::istream& is);
void write_prune_table(std::ostream& os, const PruneReport& report);

// Two-layer linear autoencoder: y = W2 diag(s) W1 x.

struct RankTerm {
  double s = 0.0;
  std::size_t node = 0;
  Tensor left;   // column `node` of W2, [out]
  Tensor right;  // row `node` of W1, [in]
};

/// Terms with nonzero s, ordered by |s| descending (ties by node index).
struct RankDecomposition {
  std::vector<RankTerm> terms;

  Tensor reconstruct(std::size_t out, std::size_t in) const;
};

/// W2 * diag(s) * W1 for a graph shaped Dense - [linear] - Sensitivity -
/// Dense - [linear] without biases. Throws StructuralError otherwise.
Tensor linear_autoencoder_map(const NetworkGraph& graph);
RankDecomposition rank_decomposition(const NetworkGraph& graph);

/// Sum of the K terms with the largest |s| (zero terms included once the
/// nonzero ones run out). Throws LookupError for K above the hidden width.
Tensor rank_k_approximation(const NetworkGraph& graph, std::size_t k);

}  // namespace hsnet
