#include "hsnet/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "hsnet/data.hpp"
#include "hsnet/errors.hpp"

namespace hsnet {
namespace {

constexpr std::uint8_t kMagic[4] = {'H', 'S', 'N', 'G'};

enum class Tag : std::uint8_t { dense = 1, conv2d = 2, activation = 3, sensitivity = 4 };

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void shape(const Shape& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    for (auto d : s) u64(d);
  }
  void tensor(const Tensor& t) {
    shape(t.shape());
    for (double v : t.values()) f64(v);
  }
  void optional_tensor(const std::optional<Tensor>& t) {
    u8(t ? 1 : 0);
    if (t) tensor(*t);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{in_[pos_++]} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{in_[pos_++]} << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  Shape shape() {
    const std::uint32_t rank = u32();
    Shape s(rank);
    for (auto& d : s) d = static_cast<std::size_t>(u64());
    return s;
  }
  Tensor tensor() {
    Shape s = shape();
    const std::size_t n = shape_product(s);
    need(n * 8);
    std::vector<double> data(n);
    for (auto& v : data) v = f64();
    return Tensor(std::move(s), std::move(data));
  }
  std::optional<Tensor> optional_tensor() {
    const std::uint8_t present = u8();
    if (present > 1) fail("bad optional flag");
    if (!present) return std::nullopt;
    return tensor();
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == in_.size(); }
  [[noreturn]] void fail(const std::string& what) const { throw FormatError("graph: " + what, pos_); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) fail("truncated container");
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_graph(const NetworkGraph& graph) {
  Writer w;
  for (auto b : kMagic) w.u8(b);
  w.u32(kGraphFormatVersion);
  w.u8(graph.frozen_last_sensitivity() ? 1 : 0);
  w.shape(graph.input_shape());
  w.u32(static_cast<std::uint32_t>(graph.layer_count()));
  for (const auto& layer : graph.layers()) {
    if (const auto* d = std::get_if<DenseLayer>(&layer.kind)) {
      w.u8(static_cast<std::uint8_t>(Tag::dense));
      w.str(layer.name);
      w.tensor(d->weights);
      w.optional_tensor(d->bias);
    } else if (const auto* c = std::get_if<Conv2DLayer>(&layer.kind)) {
      w.u8(static_cast<std::uint8_t>(Tag::conv2d));
      w.str(layer.name);
      w.tensor(c->filters);
      w.optional_tensor(c->bias);
      w.u32(static_cast<std::uint32_t>(c->stride));
      w.u32(static_cast<std::uint32_t>(c->padding));
    } else if (const auto* a = std::get_if<ActivationLayer>(&layer.kind)) {
      w.u8(static_cast<std::uint8_t>(Tag::activation));
      w.str(layer.name);
      w.u8(a->fn == ActivationFn::relu ? 0 : 1);
    } else {
      w.u8(static_cast<std::uint8_t>(Tag::sensitivity));
      w.str(layer.name);
      w.tensor(std::get<SensitivityLayer>(layer.kind).s);
    }
  }
  return w.take();
}

NetworkGraph decode_graph(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  for (std::size_t i = 0; i < sizeof kMagic; ++i) {
    if (r.u8() != kMagic[i]) throw FormatError("graph: bad magic", i);
  }
  const std::uint32_t version = r.u32();
  if (version != kGraphFormatVersion) r.fail("unsupported version " + std::to_string(version));
  const std::uint8_t frozen = r.u8();
  if (frozen > 1) r.fail("bad freeze flag");
  NetworkGraph graph(r.shape(), frozen == 1);
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto tag = static_cast<Tag>(r.u8());
    std::string name = r.str();
    switch (tag) {
      case Tag::dense: {
        Tensor w = r.tensor();
        graph.add_dense(std::move(name), std::move(w), r.optional_tensor());
        break;
      }
      case Tag::conv2d: {
        Tensor f = r.tensor();
        auto b = r.optional_tensor();
        const std::uint32_t stride = r.u32();
        const std::uint32_t padding = r.u32();
        graph.add_conv2d(std::move(name), std::move(f), std::move(b), stride, padding);
        break;
      }
      case Tag::activation: {
        const std::uint8_t fn = r.u8();
        if (fn > 1) r.fail("bad activation code");
        graph.add_activation(std::move(name), fn == 0 ? ActivationFn::relu : ActivationFn::linear);
        break;
      }
      case Tag::sensitivity:
        graph.add_sensitivity(std::move(name), r.tensor());
        break;
      default:
        r.fail("unknown layer tag");
    }
  }
  if (!r.done()) r.fail("trailing bytes");
  try {
    graph.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("graph: decoded layers are inconsistent: ") + e.what(), r.pos());
  }
  return graph;
}

void save_graph(const std::filesystem::path& path, const NetworkGraph& graph) {
  const auto bytes = encode_graph(graph);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write '" + path.string() + "'");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

NetworkGraph load_graph(const std::filesystem::path& path) {
  return decode_graph(read_file_bytes(path));
}

}  // namespace hsnet
