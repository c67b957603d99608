#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "hsnet/layers.hpp"
#include "hsnet/tensor.hpp"

namespace hsnet {

struct DenseLayer {
  Tensor weights;  // [out x in]
  std::optional<Tensor> bias;
};

struct Conv2DLayer {
  Tensor filters;  // [out x in x kh x kw]
  std::optional<Tensor> bias;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

struct ActivationLayer {
  ActivationFn fn = ActivationFn::linear;
};

/// Per-node scale after an activation. One scalar per dense node or per
/// convolution output channel.
struct SensitivityLayer {
  Tensor s;
};

using LayerKind = std::variant<DenseLayer, Conv2DLayer, ActivationLayer, SensitivityLayer>;

struct LayerRecord {
  std::string name;
  LayerKind kind;
};

bool is_parametric(const LayerRecord& layer);

/// Ordered layer stack. Every mutation through the non-const accessors bumps
/// the revision so that stale forward traces can be detected.
class NetworkGraph {
 public:
  explicit NetworkGraph(Shape input_shape = {}, bool frozen_last_sensitivity = true);
  NetworkGraph(const NetworkGraph& other);
  NetworkGraph& operator=(const NetworkGraph& other);
  NetworkGraph(NetworkGraph&&) noexcept = default;
  NetworkGraph& operator=(NetworkGraph&&) noexcept = default;

  NetworkGraph& add(LayerRecord layer);
  NetworkGraph& add_dense(std::string name, Tensor weights, std::optional<Tensor> bias = {});
  NetworkGraph& add_conv2d(std::string name, Tensor filters, std::optional<Tensor> bias = {},
                           std::size_t stride = 1, std::size_t padding = 0);
  NetworkGraph& add_activation(std::string name, ActivationFn fn);
  NetworkGraph& add_sensitivity(std::string name, Tensor s);

  const std::vector<LayerRecord>& layers() const { return layers_; }
  std::size_t layer_count() const { return layers_.size(); }
  const LayerRecord& layer(std::size_t i) const { return layers_.at(i); }
  LayerRecord& mutable_layer(std::size_t i);
  std::size_t index_of(const std::string& name) const;

  const Shape& input_shape() const { return input_shape_; }
  bool frozen_last_sensitivity() const { return frozen_last_sensitivity_; }

  /// True for the sensitivity record that belongs to the output stage
  /// (no parametric layer after it) when the freeze flag is set.
  bool is_frozen(std::size_t i) const;

  /// Per-layer unbatched output shapes. Throws DimensionError naming the
  /// first incompatible layer.
  std::vector<Shape> output_shapes() const;
  Shape output_shape() const;

  /// Shape checks plus the frozen-sensitivity-is-one rule.
  void validate() const;

  /// Parameter by (layer name, "weights" | "bias" | "filters" | "s").
  const Tensor& parameter(const std::string& layer, const std::string& param) const;
  Tensor& mutable_parameter(const std::string& layer, const std::string& param);

  std::uint64_t id() const { return id_; }
  std::uint64_t revision() const { return revision_; }
  void touch() { ++revision_; }

 private:
  static std::uint64_t next_id();
  Tensor* locate(const std::string& layer, const std::string& param);

  Shape input_shape_;
  bool frozen_last_sensitivity_;
  std::vector<LayerRecord> layers_;
  std::uint64_t id_;
  std::uint64_t revision_ = 0;
};

/// Cached per-layer inputs of one forward pass. `inputs[i]` is what layer i
/// consumed; for an activation layer that is its pre-activation u.
struct ForwardTrace {
  std::uint64_t graph_id = 0;
  std::uint64_t revision = 0;
  bool batched = true;
  std::vector<Tensor> inputs;
  Tensor output;
};

/// Gradients keyed by (layer name, parameter name).
class GradientSet {
 public:
  using Key = std::pair<std::string, std::string>;

  void set(const std::string& layer, const std::string& param, Tensor grad);
  bool contains(const std::string& layer, const std::string& param) const;
  const Tensor& at(const std::string& layer, const std::string& param) const;
  std::size_t size() const { return grads_.size(); }
  auto begin() const { return grads_.begin(); }
  auto end() const { return grads_.end(); }

 private:
  std::map<Key, Tensor> grads_;
};

/// Evaluates the graph. `input` is either exactly input_shape or carries an
/// extra leading batch axis.
std::pair<Tensor, ForwardTrace> network_forward(const NetworkGraph& graph, const Tensor& input);

/// Output only; skips building the trace.
Tensor network_predict(const NetworkGraph& graph, const Tensor& input);

GradientSet network_backward(const NetworkGraph& graph, const ForwardTrace& trace,
                             const Tensor& output_grad);

// Initialization.

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(const Shape& shape, std::size_t fan_in, std::size_t fan_out,
                      std::mt19937_64& rng);

/// Redraws dense/conv weights, zeroes biases and sets trainable
/// sensitivities to one. Frozen sensitivities stay at one.
void initialize_parameters(NetworkGraph& graph, std::uint64_t seed);

/// Redraws every trainable sensitivity uniformly from [lo, hi].
void reinitialize_sensitivities(NetworkGraph& graph, std::mt19937_64& rng, double lo = 0.5,
                                double hi = 1.5);

/// Indices of trainable (non-frozen) sensitivity layers, in order.
std::vector<std::size_t> trainable_sensitivity_layers(const NetworkGraph& graph);

/// Stable 64-bit mix used to derive per-run seeds from a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace hsnet
