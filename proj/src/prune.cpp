#include "hsnet/prune.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>

#include "hsnet/csv.hpp"
#include "hsnet/errors.hpp"

namespace hsnet {
namespace {

bool is_elementwise(const LayerRecord& layer) {
  return std::holds_alternative<ActivationLayer>(layer.kind) ||
         std::holds_alternative<SensitivityLayer>(layer.kind);
}

const Tensor& sensitivities(const LayerRecord& layer) {
  return std::get<SensitivityLayer>(layer.kind).s;
}

// A parametric layer followed by a run of elementwise layers, up to the next
// parametric layer (the consumer) or the end of the graph.
struct Stage {
  std::size_t producer;
  std::vector<std::size_t> sensitivity_layers;  // trainable ones in the run
  std::optional<std::size_t> consumer;
};

std::vector<Stage> stages(const NetworkGraph& graph) {
  std::vector<Stage> out;
  for (std::size_t i = 0; i < graph.layer_count(); ++i) {
    if (!is_parametric(graph.layer(i))) continue;
    Stage st{i, {}, std::nullopt};
    std::size_t j = i + 1;
    for (; j < graph.layer_count() && is_elementwise(graph.layer(j)); ++j) {
      if (std::holds_alternative<SensitivityLayer>(graph.layer(j).kind) && !graph.is_frozen(j)) {
        st.sensitivity_layers.push_back(j);
      }
    }
    if (j < graph.layer_count()) st.consumer = j;
    out.push_back(std::move(st));
  }
  return out;
}

Tensor keep_along_axis(const Tensor& t, std::size_t axis, const std::vector<std::size_t>& keep,
                       std::size_t block = 1) {
  // `axis` groups elements in blocks of `block` consecutive indices.
  Shape shape = t.shape();
  const std::size_t outer = std::accumulate(shape.begin(), shape.begin() + axis, std::size_t{1},
                                            std::multiplies<>());
  const std::size_t inner = std::accumulate(shape.begin() + axis + 1, shape.end(), std::size_t{1},
                                            std::multiplies<>());
  const std::size_t axis_len = shape[axis];
  const std::size_t unit = block * inner;
  shape[axis] = keep.size() * block;
  std::vector<double> out;
  out.reserve(outer * keep.size() * unit);
  for (std::size_t o = 0; o < outer; ++o) {
    const auto base = t.values().begin() + o * axis_len * inner;
    for (std::size_t k : keep) {
      out.insert(out.end(), base + k * unit, base + (k + 1) * unit);
    }
  }
  return Tensor(std::move(shape), std::move(out));
}

}  // namespace

std::vector<LayerNodeSet> zero_sensitivity_nodes(const NetworkGraph& graph, double threshold) {
  if (!(threshold >= 0.0)) throw DomainError("prune threshold must be non-negative");
  std::vector<LayerNodeSet> out;
  for (std::size_t i : trainable_sensitivity_layers(graph)) {
    LayerNodeSet set{graph.layer(i).name, {}};
    const Tensor& s = sensitivities(graph.layer(i));
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (std::abs(s[k]) <= threshold) set.nodes.push_back(k);
    }
    out.push_back(std::move(set));
  }
  return out;
}

double default_prune_threshold(const NetworkGraph& graph, bool proximal) {
  if (proximal) return 0.0;
  double max_abs = 0.0;
  for (std::size_t i : trainable_sensitivity_layers(graph)) {
    max_abs = std::max(max_abs, sensitivities(graph.layer(i)).max_abs());
  }
  return 1e-4 * max_abs;
}

std::size_t PruneReport::removed_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.removed.size();
  return n;
}

PruneResult prune_graph(const NetworkGraph& graph, double threshold) {
  if (!(threshold >= 0.0)) throw DomainError("prune threshold must be non-negative");
  graph.validate();
  const std::vector<Shape> shapes = graph.output_shapes();
  const auto input_shape_of = [&](std::size_t i) {
    return i == 0 ? graph.input_shape() : shapes[i - 1];
  };

  PruneResult result{graph, {threshold, {}}};
  NetworkGraph& pruned = result.graph;

  std::set<std::size_t> covered;
  for (const Stage& st : stages(graph)) {
    if (st.sensitivity_layers.empty()) continue;
    const std::size_t width = shapes[st.producer][0];
    std::set<std::size_t> removed_set;
    for (std::size_t li : st.sensitivity_layers) {
      covered.insert(li);
      const Tensor& s = sensitivities(graph.layer(li));
      for (std::size_t k = 0; k < s.size(); ++k) {
        if (std::abs(s[k]) <= threshold) removed_set.insert(k);
      }
    }
    LayerPruneRecord rec;
    rec.layer = graph.layer(st.sensitivity_layers.front()).name;
    rec.producer = graph.layer(st.producer).name;
    rec.removed.assign(removed_set.begin(), removed_set.end());
    for (std::size_t k = 0; k < width; ++k) {
      if (!removed_set.count(k)) rec.kept.push_back(k);
    }
    if (!rec.removed.empty()) {
      if (rec.kept.empty()) {
        throw StructuralError("pruning would remove every node of layer '" + rec.producer + "'");
      }
      if (!st.consumer) {
        throw StructuralError("layer '" + rec.layer +
                              "' feeds the network output; its nodes cannot be removed");
      }
      LayerRecord& producer = pruned.mutable_layer(st.producer);
      if (auto* d = std::get_if<DenseLayer>(&producer.kind)) {
        d->weights = keep_along_axis(d->weights, 0, rec.kept);
        if (d->bias) d->bias = keep_along_axis(*d->bias, 0, rec.kept);
      } else {
        auto& c = std::get<Conv2DLayer>(producer.kind);
        c.filters = keep_along_axis(c.filters, 0, rec.kept);
        if (c.bias) c.bias = keep_along_axis(*c.bias, 0, rec.kept);
      }
      for (std::size_t j = st.producer + 1; j < *st.consumer; ++j) {
        if (auto* s = std::get_if<SensitivityLayer>(&pruned.mutable_layer(j).kind)) {
          s->s = keep_along_axis(s->s, 0, rec.kept);
        }
      }
      LayerRecord& consumer = pruned.mutable_layer(*st.consumer);
      const Shape in_shape = input_shape_of(*st.consumer);
      if (auto* d = std::get_if<DenseLayer>(&consumer.kind)) {
        const std::size_t block = shape_product(in_shape) / in_shape[0];
        d->weights = keep_along_axis(d->weights, 1, rec.kept, block);
      } else {
        auto& c = std::get<Conv2DLayer>(consumer.kind);
        c.filters = keep_along_axis(c.filters, 1, rec.kept);
      }
    }
    result.report.layers.push_back(std::move(rec));
  }

  for (std::size_t i : trainable_sensitivity_layers(graph)) {
    if (covered.count(i)) continue;
    // A sensitivity layer with no producing dense/conv layer scales raw inputs.
    for (double v : sensitivities(graph.layer(i)).values()) {
      if (std::abs(v) <= threshold) {
        throw StructuralError("layer '" + graph.layer(i).name +
                              "' scales network inputs; its nodes cannot be removed");
      }
    }
  }
  pruned.validate();
  return result;
}

LosslessCheck assert_lossless(const NetworkGraph& original, const NetworkGraph& pruned,
                              const Tensor& probes, double tol) {
  const Tensor a = network_predict(original, probes);
  const Tensor b = network_predict(pruned, probes);
  LosslessCheck check;
  check.max_deviation = max_abs_difference(a, b);
  check.passed = check.max_deviation <= tol;
  return check;
}

ComplexityReport complexity(const NetworkGraph& graph) {
  ComplexityReport r;
  const std::vector<Shape> shapes = graph.output_shapes();
  for (std::size_t i = 0; i < graph.layer_count(); ++i) {
    const LayerRecord& layer = graph.layer(i);
    const Shape& out = shapes[i];
    if (const auto* d = std::get_if<DenseLayer>(&layer.kind)) {
      const std::size_t o = d->weights.dim(0), in = d->weights.dim(1);
      r.node_count += o;
      r.weight_count += o * in + (d->bias ? o : 0);
      r.flop_count += 2 * in * o + (d->bias ? o : 0);
    } else if (const auto* c = std::get_if<Conv2DLayer>(&layer.kind)) {
      const std::size_t o = c->filters.dim(0), in = c->filters.dim(1);
      const std::size_t kh = c->filters.dim(2), kw = c->filters.dim(3);
      const std::size_t spatial = out[1] * out[2];
      r.node_count += o;
      r.weight_count += c->filters.size() + (c->bias ? o : 0);
      r.flop_count += 2 * kh * kw * in * o * spatial + (c->bias ? o * spatial : 0);
    } else if (const auto* s = std::get_if<SensitivityLayer>(&layer.kind)) {
      if (!graph.is_frozen(i)) r.weight_count += s->s.size();
      r.flop_count += shape_product(out);
    } else {
      r.flop_count += shape_product(out);
    }
  }
  return r;
}

std::string format_ratio(double value, double baseline) {
  if (baseline == 0.0) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * value / baseline);
  return buf;
}

void write_complexity_table(std::ostream& os, const ComplexityReport& baseline,
                            const ComplexityReport& pruned) {
  char line[160];
  std::snprintf(line, sizeof line, "%-14s %14s %14s %10s\n", "", "baseline", "proposed", "ratio");
  os << line;
  const auto row = [&](const char* name, std::size_t b, std::size_t p) {
    std::snprintf(line, sizeof line, "%-14s %14zu %14zu %10s\n", name, b, p,
                  format_ratio(static_cast<double>(p), static_cast<double>(b)).c_str());
    os << line;
  };
  row("# of nodes", baseline.node_count, pruned.node_count);
  row("# of weights", baseline.weight_count, pruned.weight_count);
  row("# of FLOPs", baseline.flop_count, pruned.flop_count);
}

void write_complexity_csv(std::ostream& os, const ComplexityReport& baseline,
                          const ComplexityReport& pruned) {
  write_csv_row(os, {"metric", "baseline", "pruned", "ratio_percent"});
  const auto row = [&](const char* name, std::size_t b, std::size_t p) {
    std::string ratio = format_ratio(static_cast<double>(p), static_cast<double>(b));
    if (!ratio.empty() && ratio.back() == '%') ratio.pop_back();
    write_csv_row(os, {name, std::to_string(b), std::to_string(p), ratio});
  };
  row("nodes", baseline.node_count, pruned.node_count);
  row("weights", baseline.weight_count, pruned.weight_count);
  row("flops", baseline.flop_count, pruned.flop_count);
}

std::pair<ComplexityReport, ComplexityReport> read_complexity_csv(std::istream& is) {
  CsvTable table = read_csv(is);
  const std::size_t cm = table.column("metric"), cb = table.column("baseline"),
                    cp = table.column("pruned");
  ComplexityReport b, p;
  for (const auto& row : table.rows) {
    const auto bv = static_cast<std::size_t>(std::stoull(row[cb]));
    const auto pv = static_cast<std::size_t>(std::stoull(row[cp]));
    if (row[cm] == "nodes") b.node_count = bv, p.node_count = pv;
    else if (row[cm] == "weights") b.weight_count = bv, p.weight_count = pv;
    else if (row[cm] == "flops") b.flop_count = bv, p.flop_count = pv;
    else throw FormatError("complexity csv: unknown metric '" + row[cm] + "'", 0);
  }
  return {b, p};
}

void write_prune_csv(std::ostream& os, const PruneReport& report) {
  write_csv_row(os, {"layer", "producer", "threshold", "status", "node"});
  for (const auto& l : report.layers) {
    for (std::size_t k : l.kept) {
      write_csv_row(os, {l.layer, l.producer, format_double(report.threshold), "kept", std::to_string(k)});
    }
    for (std::size_t k : l.removed) {
      write_csv_row(os, {l.layer, l.producer, format_double(report.threshold), "removed", std::to_string(k)});
    }
  }
}

PruneReport read_prune_csv(std::istream& is) {
  CsvTable table = read_csv(is);
  const std::size_t cl = table.column("layer"), cp = table.column("producer"),
                    ct = table.column("threshold"), cs = table.column("status"),
                    cn = table.column("node");
  PruneReport report;
  for (const auto& row : table.rows) {
    report.threshold = parse_double(row[ct]);
    if (report.layers.empty() || report.layers.back().layer != row[cl]) {
      report.layers.push_back({row[cl], row[cp], {}, {}});
    }
    auto& rec = report.layers.back();
    const auto node = static_cast<std::size_t>(std::stoull(row[cn]));
    if (row[cs] == "kept") rec.kept.push_back(node);
    else if (row[cs] == "removed") rec.removed.push_back(node);
    else throw FormatError("prune csv: unknown status '" + row[cs] + "'", 0);
  }
  return report;
}

void write_prune_table(std::ostream& os, const PruneReport& report) {
  char line[200];
  std::snprintf(line, sizeof line, "%-16s %-16s %8s %8s %8s\n", "sensitivity", "producer", "before",
                "kept", "removed");
  os << line;
  for (const auto& l : report.layers) {
    std::snprintf(line, sizeof line, "%-16s %-16s %8zu %8zu %8zu\n", l.layer.c_str(),
                  l.producer.c_str(), l.kept.size() + l.removed.size(), l.kept.size(),
                  l.removed.size());
    os << line;
  }
  os << "threshold " << format_double(report.threshold) << '\n';
}

namespace {

struct LinearAutoencoder {
  const Tensor* w1;
  const Tensor* s;
  const Tensor* w2;
};

LinearAutoencoder match_linear_autoencoder(const NetworkGraph& graph) {
  const auto& layers = graph.layers();
  std::size_t i = 0;
  const auto fail = [](const std::string& why) -> StructuralError {
    return StructuralError("not a two-layer linear autoencoder: " + why);
  };
  const auto dense_at = [&](std::size_t k) -> const Tensor* {
    if (k >= layers.size()) return nullptr;
    const auto* d = std::get_if<DenseLayer>(&layers[k].kind);
    if (!d) return nullptr;
    if (d->bias) throw fail("layer '" + layers[k].name + "' has a bias");
    return &d->weights;
  };
  const auto skip_linear = [&](std::size_t& k) {
    if (k < layers.size()) {
      if (const auto* a = std::get_if<ActivationLayer>(&layers[k].kind)) {
        if (a->fn != ActivationFn::linear) throw fail("layer '" + layers[k].name + "' is not linear");
        ++k;
      }
    }
  };
  LinearAutoencoder ae{};
  if (!(ae.w1 = dense_at(i++))) throw fail("expected a dense encoder first");
  skip_linear(i);
  if (i >= layers.size() || !std::holds_alternative<SensitivityLayer>(layers[i].kind) ||
      graph.is_frozen(i)) {
    throw fail("expected a trainable sensitivity layer after the encoder");
  }
  ae.s = &std::get<SensitivityLayer>(layers[i++].kind).s;
  if (!(ae.w2 = dense_at(i++))) throw fail("expected a dense decoder after the sensitivity layer");
  skip_linear(i);
  if (i != layers.size()) throw fail("unexpected layer '" + layers[i].name + "'");
  graph.validate();
  return ae;
}

Tensor sum_terms(const LinearAutoencoder& ae, const std::vector<std::size_t>& nodes) {
  const std::size_t out = ae.w2->dim(0), in = ae.w1->dim(1);
  Tensor a({out, in});
  for (std::size_t k : nodes) {
    const double s = (*ae.s)[k];
    for (std::size_t r = 0; r < out; ++r) {
      const double left = s * ae.w2->at(r, k);
      for (std::size_t c = 0; c < in; ++c) a.at(r, c) += left * ae.w1->at(k, c);
    }
  }
  return a;
}

std::vector<std::size_t> by_magnitude(const Tensor& s) {
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(s[a]) > std::abs(s[b]); });
  return order;
}

}  // namespace

Tensor RankDecomposition::reconstruct(std::size_t out, std::size_t in) const {
  Tensor a({out, in});
  for (const auto& t : terms) {
    for (std::size_t r = 0; r < out; ++r) {
      for (std::size_t c = 0; c < in; ++c) a.at(r, c) += t.s * t.left[r] * t.right[c];
    }
  }
  return a;
}

Tensor linear_autoencoder_map(const NetworkGraph& graph) {
  const LinearAutoencoder ae = match_linear_autoencoder(graph);
  std::vector<std::size_t> all(ae.s->size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return sum_terms(ae, all);
}

RankDecomposition rank_decomposition(const NetworkGraph& graph) {
  const LinearAutoencoder ae = match_linear_autoencoder(graph);
  const std::size_t out = ae.w2->dim(0), in = ae.w1->dim(1);
  RankDecomposition dec;
  for (std::size_t k : by_magnitude(*ae.s)) {
    if ((*ae.s)[k] == 0.0) continue;
    RankTerm t{(*ae.s)[k], k, Tensor({out}), Tensor({in})};
    for (std::size_t r = 0; r < out; ++r) t.left[r] = ae.w2->at(r, k);
    for (std::size_t c = 0; c < in; ++c) t.right[c] = ae.w1->at(k, c);
    dec.terms.push_back(std::move(t));
  }
  return dec;
}

Tensor rank_k_approximation(const NetworkGraph& graph, std::size_t k) {
  const LinearAutoencoder ae = match_linear_autoencoder(graph);
  if (k > ae.s->size()) {
    throw LookupError("rank " + std::to_string(k) + " exceeds hidden width " +
                      std::to_string(ae.s->size()));
  }
  std::vector<std::size_t> order = by_magnitude(*ae.s);
  order.resize(k);
  // Selection is by magnitude but the sum runs in node order, the same order the full map uses,
  // so keeping every nonzero term reproduces linear_autoencoder_map bit for bit.
  std::sort(order.begin(), order.end());
  return sum_terms(ae, order);
}

}  // namespace hsnet
