#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string_view>
#include <vector>

#include "hsnet/data.hpp"
#include "hsnet/graph.hpp"
#include "hsnet/loss.hpp"

namespace hsnet {

/// How the L1 term enters the sensitivity update.
///  - subgradient: s <- s - eta*dE/ds - eta*lambda*sign(s), sign(0) = 0
///  - proximal:    s <- shrink(s - eta*dE/ds, eta*lambda)
enum class SensitivityUpdate { subgradient, proximal };

std::string_view to_string(SensitivityUpdate mode);
SensitivityUpdate sensitivity_update_from_string(std::string_view name);

struct TrainConfig {
  double step_size = 0.1;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  double lambda = 0.0;
  SensitivityUpdate sensitivity_update = SensitivityUpdate::proximal;
  std::uint64_t seed = 0;
  bool shuffle = true;
  LossKind loss = LossKind::mse;

  /// Throws ConfigError for eta <= 0, lambda < 0, zero batch size.
  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;
  double deviation = 0.0;  // E over the full training set at epoch end
  double sparsity = 0.0;   // sum of |s| over trainable sensitivity layers
  double lambda = 0.0;
  std::vector<std::size_t> nonzero_counts;  // per trainable sensitivity layer

  friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

/// param - eta * grad.
Tensor sgd_step_weights(const Tensor& param, const Tensor& grad, double step_size);
void sgd_step_weights_inplace(Tensor& param, const Tensor& grad, double step_size);

/// sign(z) * max(|z| - tau, 0).
double shrink(double z, double tau);

Tensor sensitivity_step(const Tensor& s, const Tensor& grad, double step_size, double lambda,
                        SensitivityUpdate mode);
void sensitivity_step_inplace(Tensor& s, const Tensor& grad, double step_size, double lambda,
                              SensitivityUpdate mode);

/// Mean loss over the whole dataset, evaluated in chunks. No updates.
double deviation_penalty(const NetworkGraph& graph, const Dataset& data, LossKind kind);

/// Sum of |s| over every trainable (non-frozen) sensitivity layer.
double sparsity_penalty(const NetworkGraph& graph);

/// Exact nonzero count per trainable sensitivity layer.
std::vector<std::size_t> nonzero_sensitivity_counts(const NetworkGraph& graph);

/// Applies one full gradient step (weights by SGD, sensitivities by the
/// configured mode) from a precomputed gradient set.
void apply_gradients(NetworkGraph& graph, const GradientSet& grads, double step_size,
                     double lambda, SensitivityUpdate mode);

/// Mini-batch SGD over a graph it owns for its lifetime. Keeps the shuffle
/// RNG and epoch counter so epochs can be run one at a time.
class Trainer {
 public:
  Trainer(NetworkGraph& graph, const Dataset& data, TrainConfig config);

  /// One pass over the data followed by the epoch-end evaluation. Throws
  /// DivergenceError when E is not finite.
  EpochStats run_epoch();
  std::vector<EpochStats> run(std::size_t epochs);

  void set_lambda(double lambda);
  double lambda() const { return config_.lambda; }
  std::size_t epochs_run() const { return epoch_; }
  EpochStats evaluate() const;

 private:
  NetworkGraph& graph_;
  const Dataset& data_;
  TrainConfig config_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t epoch_ = 0;
};

/// Runs config.epochs epochs; deterministic given config.seed.
std::vector<EpochStats> train_epochs(NetworkGraph& graph, const Dataset& data,
                                     const TrainConfig& config);

/// CSV columns: epoch,E,S,lambda,nonzero_counts (semicolon-joined).
void write_epoch_csv(std::ostream& os, const std::vector<EpochStats>& stats, bool header = true);
std::vector<EpochStats> read_epoch_csv(std::istream& is);

}  // namespace hsnet
