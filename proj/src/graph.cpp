#include "hsnet/graph.hpp"

#include <atomic>
#include <cmath>

#include "hsnet/errors.hpp"

namespace hsnet {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::size_t node_axis_length(const Shape& shape) {
  // Unbatched shapes: [n] for dense, [c x h x w] for conv.
  return shape.empty() ? 0 : shape[0];
}

}  // namespace

bool is_parametric(const LayerRecord& layer) {
  return std::holds_alternative<DenseLayer>(layer.kind) ||
         std::holds_alternative<Conv2DLayer>(layer.kind);
}

std::uint64_t NetworkGraph::next_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}

NetworkGraph::NetworkGraph(Shape input_shape, bool frozen_last_sensitivity)
    : input_shape_(std::move(input_shape)),
      frozen_last_sensitivity_(frozen_last_sensitivity),
      id_(next_id()) {}

NetworkGraph::NetworkGraph(const NetworkGraph& other)
    : input_shape_(other.input_shape_),
      frozen_last_sensitivity_(other.frozen_last_sensitivity_),
      layers_(other.layers_),
      id_(next_id()) {}

NetworkGraph& NetworkGraph::operator=(const NetworkGraph& other) {
  if (this != &other) {
    input_shape_ = other.input_shape_;
    frozen_last_sensitivity_ = other.frozen_last_sensitivity_;
    layers_ = other.layers_;
    ++revision_;
  }
  return *this;
}

NetworkGraph& NetworkGraph::add(LayerRecord layer) {
  for (const auto& existing : layers_) {
    if (existing.name == layer.name) {
      throw ConfigError("duplicate layer name '" + layer.name + "'");
    }
  }
  layers_.push_back(std::move(layer));
  ++revision_;
  return *this;
}

NetworkGraph& NetworkGraph::add_dense(std::string name, Tensor weights, std::optional<Tensor> bias) {
  return add({std::move(name), DenseLayer{std::move(weights), std::move(bias)}});
}

NetworkGraph& NetworkGraph::add_conv2d(std::string name, Tensor filters, std::optional<Tensor> bias,
                                       std::size_t stride, std::size_t padding) {
  return add({std::move(name), Conv2DLayer{std::move(filters), std::move(bias), stride, padding}});
}

NetworkGraph& NetworkGraph::add_activation(std::string name, ActivationFn fn) {
  return add({std::move(name), ActivationLayer{fn}});
}

NetworkGraph& NetworkGraph::add_sensitivity(std::string name, Tensor s) {
  return add({std::move(name), SensitivityLayer{std::move(s)}});
}

LayerRecord& NetworkGraph::mutable_layer(std::size_t i) {
  ++revision_;
  return layers_.at(i);
}

std::size_t NetworkGraph::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].name == name) return i;
  }
  throw LookupError("no layer named '" + name + "'");
}

bool NetworkGraph::is_frozen(std::size_t i) const {
  if (!frozen_last_sensitivity_ || i >= layers_.size()) return false;
  if (!std::holds_alternative<SensitivityLayer>(layers_[i].kind)) return false;
  for (std::size_t j = i + 1; j < layers_.size(); ++j) {
    if (is_parametric(layers_[j])) return false;
  }
  // Only the output stage counts, and only when it follows a parametric layer.
  for (std::size_t j = 0; j < i; ++j) {
    if (is_parametric(layers_[j])) return true;
  }
  return false;
}

std::vector<Shape> NetworkGraph::output_shapes() const {
  std::vector<Shape> shapes;
  shapes.reserve(layers_.size());
  Shape current = input_shape_;
  for (const auto& layer : layers_) {
    const auto fail = [&](const std::string& why) {
      throw DimensionError("layer '" + layer.name + "': " + why + " (input " +
                           shape_string(current) + ")");
    };
    std::visit(Overloaded{
                   [&](const DenseLayer& d) {
                     if (d.weights.rank() != 2) fail("weights must be 2-D");
                     if (shape_product(current) != d.weights.dim(1)) {
                       fail("weights " + shape_string(d.weights.shape()) + " expect " +
                            std::to_string(d.weights.dim(1)) + " inputs");
                     }
                     if (d.bias && (d.bias->rank() != 1 || d.bias->dim(0) != d.weights.dim(0))) {
                       fail("bias " + shape_string(d.bias->shape()) + " mismatched");
                     }
                     current = {d.weights.dim(0)};
                   },
                   [&](const Conv2DLayer& c) {
                     if (c.filters.rank() != 4) fail("filters must be 4-D");
                     if (current.size() != 3 || current[0] != c.filters.dim(1)) {
                       fail("filters " + shape_string(c.filters.shape()) + " do not fit");
                     }
                     if (c.bias && (c.bias->rank() != 1 || c.bias->dim(0) != c.filters.dim(0))) {
                       fail("bias " + shape_string(c.bias->shape()) + " mismatched");
                     }
                     current = {c.filters.dim(0),
                                conv_output_extent(current[1], c.filters.dim(2), c.stride, c.padding),
                                conv_output_extent(current[2], c.filters.dim(3), c.stride, c.padding)};
                   },
                   [&](const ActivationLayer&) {},
                   [&](const SensitivityLayer& s) {
                     if (s.s.rank() != 1 || s.s.dim(0) != node_axis_length(current) ||
                         (current.size() != 1 && current.size() != 3)) {
                       fail("s " + shape_string(s.s.shape()) + " does not match node count");
                     }
                   },
               },
               layer.kind);
    shapes.push_back(current);
  }
  return shapes;
}

Shape NetworkGraph::output_shape() const {
  auto shapes = output_shapes();
  return shapes.empty() ? input_shape_ : shapes.back();
}

void NetworkGraph::validate() const {
  output_shapes();
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (!is_frozen(i)) continue;
    const auto& s = std::get<SensitivityLayer>(layers_[i].kind).s;
    for (double v : s.values()) {
      if (v != 1.0) {
        throw StructuralError("layer '" + layers_[i].name +
                              "': frozen output sensitivity must be identically 1");
      }
    }
  }
}

namespace {

template <class Layer>
Tensor* find_param(Layer& kind, const std::string& param) {
  return std::visit(Overloaded{
                        [&](auto& d) -> Tensor* {
                          using T = std::decay_t<decltype(d)>;
                          if constexpr (std::is_same_v<T, DenseLayer>) {
                            if (param == "weights") return &d.weights;
                            if (param == "bias" && d.bias) return &*d.bias;
                          } else if constexpr (std::is_same_v<T, Conv2DLayer>) {
                            if (param == "filters") return &d.filters;
                            if (param == "bias" && d.bias) return &*d.bias;
                          } else if constexpr (std::is_same_v<T, SensitivityLayer>) {
                            if (param == "s") return &d.s;
                          }
                          return nullptr;
                        },
                    },
                    kind);
}

}  // namespace

Tensor* NetworkGraph::locate(const std::string& layer, const std::string& param) {
  Tensor* t = find_param(layers_[index_of(layer)].kind, param);
  if (!t) throw LookupError("layer '" + layer + "' has no parameter '" + param + "'");
  return t;
}

const Tensor& NetworkGraph::parameter(const std::string& layer, const std::string& param) const {
  return *const_cast<NetworkGraph*>(this)->locate(layer, param);
}

Tensor& NetworkGraph::mutable_parameter(const std::string& layer, const std::string& param) {
  Tensor* t = locate(layer, param);
  ++revision_;
  return *t;
}

void GradientSet::set(const std::string& layer, const std::string& param, Tensor grad) {
  grads_[{layer, param}] = std::move(grad);
}

bool GradientSet::contains(const std::string& layer, const std::string& param) const {
  return grads_.count({layer, param}) != 0;
}

const Tensor& GradientSet::at(const std::string& layer, const std::string& param) const {
  auto it = grads_.find({layer, param});
  if (it == grads_.end()) {
    throw LookupError("no gradient for " + layer + "." + param);
  }
  return it->second;
}

namespace {

Tensor batched_input(const NetworkGraph& graph, const Tensor& input, bool& batched) {
  const Shape& expected = graph.input_shape();
  const Shape& got = input.shape();
  if (got == expected) {
    batched = false;
    Shape with_batch{1};
    with_batch.insert(with_batch.end(), expected.begin(), expected.end());
    return input.reshaped(std::move(with_batch));
  }
  if (got.size() == expected.size() + 1 && std::equal(expected.begin(), expected.end(), got.begin() + 1)) {
    batched = true;
    return input;
  }
  throw DimensionError("input " + shape_string(got) + " does not match graph input " +
                       shape_string(expected));
}

Tensor apply_layer(const LayerRecord& layer, const Tensor& x) {
  try {
    return std::visit(Overloaded{
                          [&](const DenseLayer& d) { return dense_forward(d.weights, d.bias, x); },
                          [&](const Conv2DLayer& c) {
                            return conv2d_forward(c.filters, c.bias, x, c.stride, c.padding);
                          },
                          [&](const ActivationLayer& a) { return activate(x, a.fn); },
                          [&](const SensitivityLayer& s) { return sensitivity_forward(s.s, x); },
                      },
                      layer.kind);
  } catch (const DimensionError& e) {
    throw DimensionError("layer '" + layer.name + "': " + e.what());
  }
}

Tensor unbatch(Tensor t) {
  Shape s(t.shape().begin() + 1, t.shape().end());
  return t.reshaped(std::move(s));
}

}  // namespace

std::pair<Tensor, ForwardTrace> network_forward(const NetworkGraph& graph, const Tensor& input) {
  ForwardTrace trace;
  trace.graph_id = graph.id();
  trace.revision = graph.revision();
  Tensor x = batched_input(graph, input, trace.batched);
  trace.inputs.reserve(graph.layer_count());
  for (const auto& layer : graph.layers()) {
    Tensor next = apply_layer(layer, x);
    trace.inputs.push_back(std::move(x));
    x = std::move(next);
  }
  trace.output = x;
  Tensor out = trace.batched ? std::move(x) : unbatch(std::move(x));
  return {std::move(out), std::move(trace)};
}

Tensor network_predict(const NetworkGraph& graph, const Tensor& input) {
  bool batched = true;
  Tensor x = batched_input(graph, input, batched);
  for (const auto& layer : graph.layers()) x = apply_layer(layer, x);
  return batched ? x : unbatch(std::move(x));
}

GradientSet network_backward(const NetworkGraph& graph, const ForwardTrace& trace,
                             const Tensor& output_grad) {
  if (trace.graph_id != graph.id() || trace.revision != graph.revision() ||
      trace.inputs.size() != graph.layer_count()) {
    throw ConsistencyError("forward trace is stale: graph changed since the forward pass");
  }
  Tensor grad;
  if (output_grad.size() != trace.output.size()) {
    throw DimensionError("output gradient " + shape_string(output_grad.shape()) +
                         " does not match output " + shape_string(trace.output.shape()));
  }
  grad = output_grad.reshaped(trace.output.shape());

  GradientSet grads;
  // Layers before the first parametric one never need an input gradient.
  std::size_t first_param = graph.layer_count();
  for (std::size_t i = 0; i < graph.layer_count(); ++i) {
    if (is_parametric(graph.layer(i)) ||
        (std::holds_alternative<SensitivityLayer>(graph.layer(i).kind) && !graph.is_frozen(i))) {
      first_param = i;
      break;
    }
  }

  for (std::size_t i = graph.layer_count(); i-- > 0;) {
    const LayerRecord& layer = graph.layer(i);
    const Tensor& x = trace.inputs[i];
    const bool need_input = i > first_param;
    std::visit(Overloaded{
                   [&](const DenseLayer& d) {
                     auto g = dense_backward(d.weights, d.bias.has_value(), x, grad, need_input);
                     grads.set(layer.name, "weights", std::move(g.weights));
                     if (g.bias) grads.set(layer.name, "bias", std::move(*g.bias));
                     grad = std::move(g.input);
                   },
                   [&](const Conv2DLayer& c) {
                     auto g = conv2d_backward(c.filters, c.bias.has_value(), x, grad, c.stride,
                                              c.padding, need_input);
                     grads.set(layer.name, "filters", std::move(g.filters));
                     if (g.bias) grads.set(layer.name, "bias", std::move(*g.bias));
                     grad = std::move(g.input);
                   },
                   [&](const ActivationLayer& a) { grad = activation_backward(x, grad, a.fn); },
                   [&](const SensitivityLayer& s) {
                     auto g = sensitivity_backward(s.s, x, grad);
                     if (!graph.is_frozen(i)) grads.set(layer.name, "s", std::move(g.s));
                     grad = std::move(g.input);
                   },
               },
               layer.kind);
    if (!need_input) break;
  }
  return grads;
}

Tensor glorot_uniform(const Shape& shape, std::size_t fan_in, std::size_t fan_out,
                      std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t(shape);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

void initialize_parameters(NetworkGraph& graph, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < graph.layer_count(); ++i) {
    LayerRecord& layer = graph.mutable_layer(i);
    std::visit(Overloaded{
                   [&](DenseLayer& d) {
                     d.weights = glorot_uniform(d.weights.shape(), d.weights.dim(1), d.weights.dim(0), rng);
                     if (d.bias) d.bias->fill(0.0);
                   },
                   [&](Conv2DLayer& c) {
                     const std::size_t k = c.filters.dim(2) * c.filters.dim(3);
                     c.filters = glorot_uniform(c.filters.shape(), c.filters.dim(1) * k,
                                                c.filters.dim(0) * k, rng);
                     if (c.bias) c.bias->fill(0.0);
                   },
                   [&](ActivationLayer&) {},
                   [&](SensitivityLayer& s) { s.s.fill(1.0); },
               },
               layer.kind);
  }
}

void reinitialize_sensitivities(NetworkGraph& graph, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (std::size_t i : trainable_sensitivity_layers(graph)) {
    auto& s = std::get<SensitivityLayer>(graph.mutable_layer(i).kind).s;
    for (auto& v : s.values()) v = dist(rng);
  }
}

std::vector<std::size_t> trainable_sensitivity_layers(const NetworkGraph& graph) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < graph.layer_count(); ++i) {
    if (std::holds_alternative<SensitivityLayer>(graph.layer(i).kind) && !graph.is_frozen(i)) {
      out.push_back(i);
    }
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  // splitmix64 over the combined value.
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace hsnet
