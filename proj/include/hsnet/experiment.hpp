#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hsnet/data.hpp"
#include "hsnet/graph.hpp"
#include "hsnet/lcurve.hpp"
#include "hsnet/train.hpp"

namespace hsnet {

// Network builders. Each returns an initialized graph (Glorot weights, zero
// biases, unit sensitivities).

/// in -> hidden -> in, no biases, no nonlinearity, one sensitivity layer.
NetworkGraph build_linear_autoencoder(std::size_t inputs, std::size_t hidden, std::uint64_t seed);

/// in -> hidden (relu, biased) -> in (relu, biased), one sensitivity layer after
/// the hidden activation. Every node is rectified, outputs included.
NetworkGraph build_relu_autoencoder(std::size_t inputs, std::size_t hidden, std::uint64_t seed);

/// [channels x side x side] images -> one stride-2 conv block per entry of
/// `filters` (relu, sensitivity layer) -> dense classifier. Blocks use pad 1 and
/// a 3x3 kernel on odd extents, 4x4 on even ones, so every extent halves exactly.
NetworkGraph build_small_cnn(std::size_t channels, std::size_t side,
                             const std::vector<std::size_t>& filters, std::size_t classes,
                             std::uint64_t seed);

// Synthetic Gaussian study.

struct GaussianAeSetting {
  GaussianSpec spec;
  std::size_t hidden = 16;
  double reference_nonzero = 0.0;  // published mean count, 0 when unknown
};

/// The six synthetic configurations with their published mean counts.
std::vector<GaussianAeSetting> table1_settings();

struct GaussianStudyConfig {
  std::size_t samples = 1000;
  TrainConfig train{.step_size = 0.3, .batch_size = 32, .epochs = 1000};
  double grid_lo = 1e-6;
  double grid_hi = 1e-1;
  std::size_t grid_per_decade = 4;
  std::size_t grid_repetitions = 5;  // independent grids averaged into one L-curve
  PenaltyTransform phi = PenaltyTransform::identity;
  std::size_t repetitions = 50;
};

struct GaussianStudyRow {
  GaussianAeSetting setting;
  LCurve curve;
  CornerResult corner;
  std::vector<std::size_t> nonzero;  // one count per repetition

  double mean_nonzero() const;
  double mean_zero() const { return static_cast<double>(setting.hidden) - mean_nonzero(); }
};

/// Builds the L-curve for one setting, picks its corner, then trains
/// `repetitions` fresh networks (each with its own data and seeds) at the
/// corner lambda and records the surviving node counts.
GaussianStudyRow run_gaussian_study(const GaussianAeSetting& setting,
                                    const GaussianStudyConfig& config, std::uint64_t seed);

/// Hidden,corr,indep,lambda,mean_nonzero,mean_zero,reference_nonzero.
void write_table1_csv(std::ostream& os, const std::vector<GaussianStudyRow>& rows);
void write_table1_text(std::ostream& os, const std::vector<GaussianStudyRow>& rows);

// Experiment configuration files (JSON).

enum class TaskKind { gaussian_ae, mnist_ae, cifar_cnn };

std::string_view to_string(TaskKind task);
TaskKind task_from_string(std::string_view name);

enum class LambdaMode { fixed, grid, select };

struct ExperimentConfig {
  TaskKind task = TaskKind::gaussian_ae;

  // Network.
  std::size_t hidden = 16;
  std::vector<std::size_t> filters{8, 16};

  // Data.
  GaussianSpec gaussian;
  std::size_t samples = 1000;        // gaussian-ae
  std::filesystem::path data_path;   // mnist-ae images / cifar-cnn batch
  std::size_t limit = 0;             // 0 keeps every record

  TrainConfig train;
  LambdaMode lambda_mode = LambdaMode::fixed;
  double grid_lo = 1e-5;
  double grid_hi = 1e-1;
  std::size_t grid_per_decade = 2;
  PenaltyTransform phi = PenaltyTransform::identity;
  std::size_t final_epochs = 0;  // grid mode: retrain at the corner; 0 reuses train.epochs
  SelectorConfig selector;
  std::size_t repetitions = 1;
  std::filesystem::path output_dir = "out";

  void validate() const;
};

/// Thrown for malformed config text; line and column are 1-based.
class ConfigParseError : public ConfigError {
 public:
  ConfigParseError(const std::string& what, std::size_t line, std::size_t column)
      : ConfigError(what), line_(line), column_(column) {}
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Loads or generates the dataset a config refers to.
Dataset experiment_dataset(const ExperimentConfig& config, std::uint64_t seed);

/// Fresh network for the config's task and dataset.
NetworkGraph experiment_graph(const ExperimentConfig& config, const Dataset& data,
                              std::uint64_t seed);

using ProgressSink = std::function<void(const std::string&)>;

struct RunSummary {
  double lambda = 0.0;
  std::vector<std::filesystem::path> artifacts;
};

/// Trains per the config (fixed lambda, grid corner, or simultaneous
/// selection), prunes at the default threshold, and writes every artifact
/// into config.output_dir.
RunSummary run_experiment(const ExperimentConfig& config, std::uint64_t seed,
                          const ProgressSink& progress = {});

}  // namespace hsnet
