#include "hsnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "hsnet/csv.hpp"
#include "hsnet/errors.hpp"

namespace hsnet {

std::string_view to_string(SensitivityUpdate mode) {
  return mode == SensitivityUpdate::proximal ? "proximal" : "subgradient";
}

SensitivityUpdate sensitivity_update_from_string(std::string_view name) {
  if (name == "proximal") return SensitivityUpdate::proximal;
  if (name == "subgradient") return SensitivityUpdate::subgradient;
  throw ConfigError("unknown sensitivity update '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (!(step_size > 0.0)) throw ConfigError("step size must be positive");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
}

Tensor sgd_step_weights(const Tensor& param, const Tensor& grad, double step_size) {
  Tensor out = param;
  sgd_step_weights_inplace(out, grad, step_size);
  return out;
}

void sgd_step_weights_inplace(Tensor& param, const Tensor& grad, double step_size) {
  if (param.shape() != grad.shape()) {
    throw DimensionError("sgd step: parameter " + shape_string(param.shape()) + " vs gradient " +
                         shape_string(grad.shape()));
  }
  for (std::size_t i = 0; i < param.size(); ++i) param[i] -= step_size * grad[i];
}

double shrink(double z, double tau) {
  const double m = std::abs(z) - tau;
  if (!(m > 0.0)) return 0.0;
  return z > 0.0 ? m : -m;
}

Tensor sensitivity_step(const Tensor& s, const Tensor& grad, double step_size, double lambda,
                        SensitivityUpdate mode) {
  Tensor out = s;
  sensitivity_step_inplace(out, grad, step_size, lambda, mode);
  return out;
}

void sensitivity_step_inplace(Tensor& s, const Tensor& grad, double step_size, double lambda,
                              SensitivityUpdate mode) {
  if (s.shape() != grad.shape()) {
    throw DimensionError("sensitivity step: s " + shape_string(s.shape()) + " vs gradient " +
                         shape_string(grad.shape()));
  }
  const double tau = step_size * lambda;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double z = s[i] - step_size * grad[i];
    if (mode == SensitivityUpdate::proximal) {
      s[i] = tau == 0.0 ? z : shrink(z, tau);
    } else {
      const double sign = s[i] > 0.0 ? 1.0 : (s[i] < 0.0 ? -1.0 : 0.0);
      s[i] = z - tau * sign;
    }
  }
}

double deviation_penalty(const NetworkGraph& graph, const Dataset& data, LossKind kind) {
  data.validate();
  constexpr std::size_t kChunk = 1000;
  const std::size_t n = data.size();
  double total = 0.0;
  for (std::size_t begin = 0; begin < n; begin += kChunk) {
    const std::size_t end = std::min(n, begin + kChunk);
    Dataset part = data.slice(begin, end);
    const double value = loss_value(network_predict(graph, part.inputs), part.targets, kind);
    total += value * static_cast<double>(end - begin);
  }
  return total / static_cast<double>(n);
}

double sparsity_penalty(const NetworkGraph& graph) {
  double sum = 0.0;
  for (std::size_t i : trainable_sensitivity_layers(graph)) {
    for (double v : std::get<SensitivityLayer>(graph.layer(i).kind).s.values()) sum += std::abs(v);
  }
  return sum;
}

std::vector<std::size_t> nonzero_sensitivity_counts(const NetworkGraph& graph) {
  std::vector<std::size_t> counts;
  for (std::size_t i : trainable_sensitivity_layers(graph)) {
    const auto& s = std::get<SensitivityLayer>(graph.layer(i).kind).s.values();
    counts.push_back(static_cast<std::size_t>(
        std::count_if(s.begin(), s.end(), [](double v) { return v != 0.0; })));
  }
  return counts;
}

void apply_gradients(NetworkGraph& graph, const GradientSet& grads, double step_size,
                     double lambda, SensitivityUpdate mode) {
  for (std::size_t i = 0; i < graph.layer_count(); ++i) {
    const bool frozen = graph.is_frozen(i);
    LayerRecord& layer = graph.mutable_layer(i);
    if (auto* d = std::get_if<DenseLayer>(&layer.kind)) {
      sgd_step_weights_inplace(d->weights, grads.at(layer.name, "weights"), step_size);
      if (d->bias) sgd_step_weights_inplace(*d->bias, grads.at(layer.name, "bias"), step_size);
    } else if (auto* c = std::get_if<Conv2DLayer>(&layer.kind)) {
      sgd_step_weights_inplace(c->filters, grads.at(layer.name, "filters"), step_size);
      if (c->bias) sgd_step_weights_inplace(*c->bias, grads.at(layer.name, "bias"), step_size);
    } else if (auto* s = std::get_if<SensitivityLayer>(&layer.kind); s && !frozen) {
      sensitivity_step_inplace(s->s, grads.at(layer.name, "s"), step_size, lambda, mode);
    }
  }
}

Trainer::Trainer(NetworkGraph& graph, const Dataset& data, TrainConfig config)
    : graph_(graph), data_(data), config_(config), rng_(config.seed) {
  config_.validate();
  data_.validate();
  if (data_.size() == 0) throw DomainError("training set is empty");
  graph_.validate();
  order_.resize(data_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
}

void Trainer::set_lambda(double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  config_.lambda = lambda;
}

EpochStats Trainer::evaluate() const {
  EpochStats stats;
  stats.epoch = epoch_;
  stats.deviation = deviation_penalty(graph_, data_, config_.loss);
  stats.sparsity = sparsity_penalty(graph_);
  stats.lambda = config_.lambda;
  stats.nonzero_counts = nonzero_sensitivity_counts(graph_);
  return stats;
}

EpochStats Trainer::run_epoch() {
  if (config_.shuffle) std::shuffle(order_.begin(), order_.end(), rng_);
  const std::size_t n = order_.size();
  for (std::size_t begin = 0; begin < n; begin += config_.batch_size) {
    const std::size_t end = std::min(n, begin + config_.batch_size);
    const Dataset batch = data_.gather(std::span(order_).subspan(begin, end - begin));
    auto [output, trace] = network_forward(graph_, batch.inputs);
    LossResult l = loss(output, batch.targets, config_.loss);
    if (!std::isfinite(l.value)) {
      throw DivergenceError("training diverged in epoch " + std::to_string(epoch_ + 1) +
                                ": batch loss is not finite",
                            epoch_ + 1);
    }
    GradientSet grads = network_backward(graph_, trace, l.grad);
    apply_gradients(graph_, grads, config_.step_size, config_.lambda, config_.sensitivity_update);
  }
  ++epoch_;
  EpochStats stats = evaluate();
  if (!std::isfinite(stats.deviation)) {
    throw DivergenceError("training diverged in epoch " + std::to_string(epoch_) +
                              ": deviation penalty is not finite",
                          epoch_);
  }
  return stats;
}

std::vector<EpochStats> Trainer::run(std::size_t epochs) {
  std::vector<EpochStats> out;
  out.reserve(epochs);
  for (std::size_t e = 0; e < epochs; ++e) out.push_back(run_epoch());
  return out;
}

std::vector<EpochStats> train_epochs(NetworkGraph& graph, const Dataset& data,
                                     const TrainConfig& config) {
  Trainer trainer(graph, data, config);
  return trainer.run(config.epochs);
}

void write_epoch_csv(std::ostream& os, const std::vector<EpochStats>& stats, bool header) {
  if (header) write_csv_row(os, {"epoch", "E", "S", "lambda", "nonzero_counts"});
  for (const auto& s : stats) {
    std::string counts;
    for (std::size_t i = 0; i < s.nonzero_counts.size(); ++i) {
      if (i) counts += ';';
      counts += std::to_string(s.nonzero_counts[i]);
    }
    write_csv_row(os, {std::to_string(s.epoch), format_double(s.deviation),
                       format_double(s.sparsity), format_double(s.lambda), counts});
  }
}

std::vector<EpochStats> read_epoch_csv(std::istream& is) {
  CsvTable table = read_csv(is);
  const std::size_t c_epoch = table.column("epoch"), c_e = table.column("E"),
                    c_s = table.column("S"), c_l = table.column("lambda"),
                    c_n = table.column("nonzero_counts");
  std::vector<EpochStats> out;
  for (const auto& row : table.rows) {
    EpochStats s;
    s.epoch = static_cast<std::size_t>(parse_double(row[c_epoch]));
    s.deviation = parse_double(row[c_e]);
    s.sparsity = parse_double(row[c_s]);
    s.lambda = parse_double(row[c_l]);
    std::istringstream counts(row[c_n]);
    std::string item;
    while (std::getline(counts, item, ';')) {
      s.nonzero_counts.push_back(static_cast<std::size_t>(parse_double(item)));
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace hsnet
