#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hsnet/errors.hpp"
#include "hsnet/graph.hpp"
#include "hsnet/train.hpp"

namespace hsnet {

/// Increasing transform applied to both penalties before plotting or
/// measuring curvature.
enum class PenaltyTransform { identity, log };

std::string_view to_string(PenaltyTransform phi);
PenaltyTransform penalty_transform_from_string(std::string_view name);
double apply_transform(PenaltyTransform phi, double value);

struct LCurvePoint {
  double lambda = 0.0;
  double deviation = 0.0;  // E
  double sparsity = 0.0;   // S
  bool diverged = false;   // training failed; E/S are the last finite values

  friend bool operator==(const LCurvePoint&, const LCurvePoint&) = default;
};

struct LCurve {
  std::vector<LCurvePoint> points;  // strictly increasing lambda
  PenaltyTransform phi = PenaltyTransform::identity;

  void validate() const;
};

/// Produces a freshly initialized graph for a given seed.
using GraphFactory = std::function<NetworkGraph(std::uint64_t seed)>;

/// Called after each grid point is trained, with the trained graph.
using GridObserver = std::function<void(std::size_t index, const LCurvePoint& point,
                                        const NetworkGraph& trained,
                                        const std::vector<EpochStats>& history)>;

/// One independent training run per lambda. Each run uses a graph from
/// `factory` seeded with derive_seed(config.seed, index) and the same derived
/// seed for shuffling. Divergent runs are kept and flagged.
LCurve build_lcurve_grid(const GraphFactory& factory, const Dataset& data,
                         std::span<const double> lambdas, const TrainConfig& config,
                         PenaltyTransform phi = PenaltyTransform::identity,
                         const GridObserver& observer = {});

/// Log-spaced grid from `lo` to `hi` inclusive with `per_decade` points per decade.
std::vector<double> log_grid(double lo, double hi, std::size_t per_decade);

/// Menger curvature 4*area / (|ab| |bc| |ca|); 0 for degenerate triangles.
double menger_curvature(double ax, double ay, double bx, double by, double cx, double cy);

struct CornerResult {
  double lambda = 0.0;
  std::size_t index = 0;
  std::vector<double> curvature;  // per point; endpoints are 0
};

/// Interior point of maximum Menger curvature. Both transformed axes are
/// rescaled to [0, 1] by their range over the non-diverged points, so the
/// result depends only on the curve's shape. Ties go to the larger lambda.
/// When every curvature is zero (collinear points) the middle point is
/// returned. Throws InsufficientDataError for fewer than 3 usable points.
CornerResult corner_by_curvature(const LCurve& curve);

/// The corner used to pick lambda from a trained grid. Walking up in lambda, a
/// point whose E is below, or whose S is above, the last kept point is training
/// noise and is dropped; corner_by_curvature then runs on what remains. Index
/// and curvature refer to the full curve (dropped points get curvature 0). If
/// fewer than 3 points survive, the full curve is used as is.
CornerResult select_corner(const LCurve& curve);

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

// Simultaneous training and selection.

enum class LambdaGrowth { additive, multiplicative };

std::string_view to_string(LambdaGrowth growth);
LambdaGrowth lambda_growth_from_string(std::string_view name);

struct SelectorConfig {
  double lambda0 = 1e-5;
  double delta = 2.0;           // added (additive) or multiplied (multiplicative)
  LambdaGrowth growth = LambdaGrowth::multiplicative;
  double epsilon = 0.0;         // deviation ceiling; <= 0 means "derive from warmup"
  double epsilon_rel = 0.10;    // ceiling = (1 + epsilon_rel) * E_ref when derived
  std::size_t warmup_epochs = 4;
  std::size_t probe_epochs = 4;
  std::size_t max_probes = 30;
  double reinit_lo = 0.5;
  double reinit_hi = 1.5;

  void validate() const;
};

struct ProbeRecord {
  double lambda = 0.0;
  double deviation = 0.0;
  double sparsity = 0.0;
  std::size_t epochs = 0;
  bool within_ceiling = false;
};

class SelectionError : public Error {
 public:
  SelectionError(const std::string& what, std::vector<ProbeRecord> history)
      : Error(what), history_(std::move(history)) {}
  const std::vector<ProbeRecord>& history() const { return history_; }

 private:
  std::vector<ProbeRecord> history_;
};

/// Decides when training after selection stops. Receives the epochs trained
/// so far at the selected lambda.
using TerminationPredicate = std::function<bool(const std::vector<EpochStats>& final_stats)>;

/// Stops after exactly `epochs` epochs.
TerminationPredicate fixed_epoch_budget(std::size_t epochs);

/// Stops once the objective E + lambda*S has not improved by a relative
/// `tolerance` over the best value seen `patience` epochs earlier, or after
/// `max_epochs`.
TerminationPredicate objective_plateau(std::size_t patience, double tolerance,
                                       std::size_t max_epochs);

struct SelectionResult {
  double lambda = 0.0;
  double epsilon = 0.0;
  std::optional<double> reference_deviation;  // E_ref when epsilon was derived
  std::size_t warmup_epochs = 0;
  std::vector<ProbeRecord> history;
  std::vector<EpochStats> final_stats;
  bool initial_probe_exceeded = false;  // lambda0 already violated the ceiling

  std::size_t probe_epochs_total() const;
  std::size_t final_epochs() const { return final_stats.size(); }
};

/// Grows lambda while the probed E stays within the ceiling, re-initializing
/// the sensitivities before each probe and keeping the weights. When a probe
/// exceeds the ceiling, the parameters checkpointed after the last feasible
/// probe are restored and training continues at that lambda until
/// `terminate` returns true. `graph` holds the trained network on return.
SelectionResult select_and_train(NetworkGraph& graph, const Dataset& data,
                                 const SelectorConfig& selector, const TrainConfig& config,
                                 const TerminationPredicate& terminate);

/// (probe epochs + final epochs - baseline) / baseline * 100.
double epoch_overhead(std::size_t probe_epochs, std::size_t final_epochs,
                      std::size_t baseline_epochs);
double epoch_overhead(std::span<const ProbeRecord> history, std::size_t final_epochs,
                      std::size_t baseline_epochs);

/// CSV columns: lambda,E,S,phiE,phiS,flag.
void write_lcurve_csv(std::ostream& os, const LCurve& curve);
LCurve read_lcurve_csv(std::istream& is, PenaltyTransform phi = PenaltyTransform::identity);

}  // namespace hsnet
