#include "hsnet/layers.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <string>

#include "hsnet/errors.hpp"

namespace hsnet {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

struct NodeLayout {
  std::size_t outer;   // batch count (1 when unbatched)
  std::size_t nodes;
  std::size_t inner;   // spatial elements per node
};

NodeLayout node_layout(const Shape& shape) {
  switch (shape.size()) {
    case 1: return {1, shape[0], 1};
    case 2: return {shape[0], shape[1], 1};
    case 3: return {1, shape[0], shape[1] * shape[2]};
    case 4: return {shape[0], shape[1], shape[2] * shape[3]};
    default:
      throw DimensionError("sensitivity: unsupported input rank " + shape_string(shape));
  }
}

struct ConvGeometry {
  std::size_t batch, in, h, w, out, kh, kw, oh, ow;
};

ConvGeometry conv_geometry(const Tensor& filters, const Shape& x, std::size_t stride,
                           std::size_t padding) {
  if (filters.rank() != 4) {
    throw DimensionError("conv2d: filters must be [out x in x kh x kw], got " +
                         shape_string(filters.shape()));
  }
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  ConvGeometry g{};
  if (x.size() == 3) {
    g.batch = 1;
    g.in = x[0], g.h = x[1], g.w = x[2];
  } else if (x.size() == 4) {
    g.batch = x[0];
    g.in = x[1], g.h = x[2], g.w = x[3];
  } else {
    throw DimensionError("conv2d: input must be [in x h x w] or [batch x in x h x w], got " +
                         shape_string(x));
  }
  g.out = filters.dim(0);
  g.kh = filters.dim(2);
  g.kw = filters.dim(3);
  if (filters.dim(1) != g.in) {
    throw DimensionError("conv2d: filters " + shape_string(filters.shape()) +
                         " do not match input " + shape_string(x));
  }
  g.oh = conv_output_extent(g.h, g.kh, stride, padding);
  g.ow = conv_output_extent(g.w, g.kw, stride, padding);
  return g;
}

// Unrolls one sample into a [in*kh*kw x oh*ow] patch matrix.
void im2col(const double* x, const ConvGeometry& g, std::size_t stride, std::size_t padding,
            double* cols) {
  const std::size_t spatial = g.oh * g.ow;
  for (std::size_t c = 0; c < g.in; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        double* row = cols + ((c * g.kh + ki) * g.kw + kj) * spatial;
        for (std::size_t oi = 0; oi < g.oh; ++oi) {
          const long yi = static_cast<long>(oi * stride + ki) - static_cast<long>(padding);
          for (std::size_t oj = 0; oj < g.ow; ++oj) {
            const long xj = static_cast<long>(oj * stride + kj) - static_cast<long>(padding);
            const bool inside = yi >= 0 && xj >= 0 && yi < static_cast<long>(g.h) &&
                                xj < static_cast<long>(g.w);
            row[oi * g.ow + oj] = inside ? x[(c * g.h + yi) * g.w + xj] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, std::size_t stride,
                std::size_t padding, double* x) {
  const std::size_t spatial = g.oh * g.ow;
  for (std::size_t c = 0; c < g.in; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const double* row = cols + ((c * g.kh + ki) * g.kw + kj) * spatial;
        for (std::size_t oi = 0; oi < g.oh; ++oi) {
          const long yi = static_cast<long>(oi * stride + ki) - static_cast<long>(padding);
          if (yi < 0 || yi >= static_cast<long>(g.h)) continue;
          for (std::size_t oj = 0; oj < g.ow; ++oj) {
            const long xj = static_cast<long>(oj * stride + kj) - static_cast<long>(padding);
            if (xj < 0 || xj >= static_cast<long>(g.w)) continue;
            x[(c * g.h + yi) * g.w + xj] += row[oi * g.ow + oj];
          }
        }
      }
    }
  }
}

// out[m x n] = a[m x k] * b[k x n], all row-major. Every output accumulates its k terms
// strictly in index order, so inserting or removing exact-zero terms never changes a
// result bit. Blocked GEMM would regroup the sums whenever k changes.
void ordered_product(const double* a, std::size_t m, std::size_t k, const double* b,
                     std::size_t n, double* out) {
  constexpr std::size_t kRows = 4;
  std::fill(out, out + m * n, 0.0);
  for (std::size_t r0 = 0; r0 < m; r0 += kRows) {
    const std::size_t rows = std::min(kRows, m - r0);
    for (std::size_t j = 0; j < k; ++j) {
      const double* brow = b + j * n;
      if (rows == kRows) {
        const double a0 = a[(r0 + 0) * k + j], a1 = a[(r0 + 1) * k + j];
        const double a2 = a[(r0 + 2) * k + j], a3 = a[(r0 + 3) * k + j];
        if (a0 == 0.0 && a1 == 0.0 && a2 == 0.0 && a3 == 0.0) continue;
        double* o0 = out + (r0 + 0) * n;
        double* o1 = out + (r0 + 1) * n;
        double* o2 = out + (r0 + 2) * n;
        double* o3 = out + (r0 + 3) * n;
        for (std::size_t c = 0; c < n; ++c) {
          const double bv = brow[c];
          o0[c] += a0 * bv;
          o1[c] += a1 * bv;
          o2[c] += a2 * bv;
          o3[c] += a3 * bv;
        }
      } else {
        for (std::size_t r = 0; r < rows; ++r) {
          const double av = a[(r0 + r) * k + j];
          if (av == 0.0) continue;
          double* o = out + (r0 + r) * n;
          for (std::size_t c = 0; c < n; ++c) o[c] += av * brow[c];
        }
      }
    }
  }
}

}  // namespace

std::string_view to_string(ActivationFn fn) {
  return fn == ActivationFn::relu ? "relu" : "linear";
}

ActivationFn activation_from_string(std::string_view name) {
  if (name == "relu") return ActivationFn::relu;
  if (name == "linear") return ActivationFn::linear;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::size_t conv_output_extent(std::size_t input, std::size_t kernel, std::size_t stride,
                               std::size_t padding) {
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  const std::size_t padded = input + 2 * padding;
  if (kernel == 0 || padded < kernel || (padded - kernel) % stride != 0) {
    throw ConfigError("conv2d: (" + std::to_string(input) + " + 2*" + std::to_string(padding) +
                      " - " + std::to_string(kernel) + ") / " + std::to_string(stride) +
                      " is not a non-negative integer");
  }
  return (padded - kernel) / stride + 1;
}

Tensor dense_forward(const Tensor& weights, const std::optional<Tensor>& bias, const Tensor& x) {
  if (weights.rank() != 2) {
    throw DimensionError("dense: weights must be 2-D, got " + shape_string(weights.shape()));
  }
  const std::size_t out = weights.dim(0), in = weights.dim(1);
  const bool batched = x.rank() >= 2;
  const std::size_t batch = batched ? x.dim(0) : 1;
  const std::size_t features = batched ? (batch ? x.size() / batch : 0) : x.size();
  if (x.rank() == 0 || features != in) {
    throw DimensionError("dense: weights " + shape_string(weights.shape()) +
                         " cannot multiply input " + shape_string(x.shape()));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != out)) {
    throw DimensionError("dense: bias " + shape_string(bias->shape()) + " does not match weights " +
                         shape_string(weights.shape()));
  }
  Tensor u(batched ? Shape{batch, out} : Shape{out});
  const RowMatrix Wt = ConstMatrixMap(weights.data().data(), out, in).transpose();
  ordered_product(x.data().data(), batch, in, Wt.data(), out, u.data().data());
  MatrixMap U(u.data().data(), batch, out);
  if (bias) {
    Eigen::Map<const Eigen::RowVectorXd> b(bias->data().data(), out);
    U.rowwise() += b;
  }
  return u;
}

Tensor conv2d_forward(const Tensor& filters, const std::optional<Tensor>& bias, const Tensor& x,
                      std::size_t stride, std::size_t padding) {
  const ConvGeometry g = conv_geometry(filters, x.shape(), stride, padding);
  if (bias && (bias->rank() != 1 || bias->dim(0) != g.out)) {
    throw DimensionError("conv2d: bias " + shape_string(bias->shape()) + " does not match " +
                         std::to_string(g.out) + " filters");
  }
  const std::size_t patch = g.in * g.kh * g.kw;
  const std::size_t spatial = g.oh * g.ow;
  Tensor u(x.rank() == 4 ? Shape{g.batch, g.out, g.oh, g.ow} : Shape{g.out, g.oh, g.ow});
  Buffer cols(patch * spatial);
  const std::size_t in_stride = g.in * g.h * g.w;
  for (std::size_t b = 0; b < g.batch; ++b) {
    im2col(x.data().data() + b * in_stride, g, stride, padding, cols.data());
    double* ub = u.data().data() + b * g.out * spatial;
    ordered_product(filters.data().data(), g.out, patch, cols.data(), spatial, ub);
    MatrixMap U(ub, g.out, spatial);
    if (bias) {
      Eigen::Map<const Eigen::VectorXd> bv(bias->data().data(), g.out);
      U.colwise() += bv;
    }
  }
  return u;
}

Tensor activate(const Tensor& u, ActivationFn fn) {
  if (fn == ActivationFn::linear) return u;
  Tensor v = u;
  for (auto& e : v.values()) e = e > 0.0 ? e : 0.0;
  return v;
}

Tensor sensitivity_forward(const Tensor& s, const Tensor& v) {
  const NodeLayout l = node_layout(v.shape());
  if (s.rank() != 1 || s.dim(0) != l.nodes) {
    throw DimensionError("sensitivity: s " + shape_string(s.shape()) + " does not match input " +
                         shape_string(v.shape()));
  }
  Tensor x(v.shape());
  const double* in = v.data().data();
  double* out = x.data().data();
  for (std::size_t b = 0; b < l.outer; ++b) {
    for (std::size_t n = 0; n < l.nodes; ++n) {
      const double scale = s[n];
      const std::size_t base = (b * l.nodes + n) * l.inner;
      for (std::size_t k = 0; k < l.inner; ++k) out[base + k] = scale * in[base + k];
    }
  }
  return x;
}

DenseGrads dense_backward(const Tensor& weights, bool has_bias, const Tensor& x,
                          const Tensor& grad_out, bool need_input_grad) {
  const std::size_t out = weights.dim(0), in = weights.dim(1);
  const std::size_t batch = x.rank() >= 2 ? x.dim(0) : 1;
  if (grad_out.size() != batch * out) {
    throw DimensionError("dense backward: gradient " + shape_string(grad_out.shape()) +
                         " does not match output of " + shape_string(weights.shape()));
  }
  ConstMatrixMap W(weights.data().data(), out, in);
  ConstMatrixMap X(x.data().data(), batch, in);
  ConstMatrixMap G(grad_out.data().data(), batch, out);

  DenseGrads grads{Tensor(), Tensor(weights.shape()), std::nullopt};
  if (need_input_grad) {
    grads.input = Tensor(x.shape());
    MatrixMap(grads.input.data().data(), batch, in).noalias() = G * W;
  }
  MatrixMap(grads.weights.data().data(), out, in).noalias() = G.transpose() * X;
  if (has_bias) {
    Tensor gb({out});
    Eigen::Map<Eigen::RowVectorXd>(gb.data().data(), out) = G.colwise().sum();
    grads.bias = std::move(gb);
  }
  return grads;
}

ConvGrads conv2d_backward(const Tensor& filters, bool has_bias, const Tensor& x,
                          const Tensor& grad_out, std::size_t stride, std::size_t padding,
                          bool need_input_grad) {
  const ConvGeometry g = conv_geometry(filters, x.shape(), stride, padding);
  const std::size_t patch = g.in * g.kh * g.kw;
  const std::size_t spatial = g.oh * g.ow;
  if (grad_out.size() != g.batch * g.out * spatial) {
    throw DimensionError("conv2d backward: gradient " + shape_string(grad_out.shape()) +
                         " does not match output");
  }
  ConvGrads grads{need_input_grad ? Tensor(x.shape()) : Tensor(), Tensor(filters.shape()),
                  std::nullopt};
  if (has_bias) grads.bias = Tensor({g.out});

  ConstMatrixMap F(filters.data().data(), g.out, patch);
  MatrixMap GF(grads.filters.data().data(), g.out, patch);
  Buffer cols(patch * spatial);
  Buffer grad_cols(patch * spatial);
  const std::size_t in_stride = g.in * g.h * g.w;
  for (std::size_t b = 0; b < g.batch; ++b) {
    im2col(x.data().data() + b * in_stride, g, stride, padding, cols.data());
    ConstMatrixMap C(cols.data(), patch, spatial);
    ConstMatrixMap G(grad_out.data().data() + b * g.out * spatial, g.out, spatial);
    GF.noalias() += G * C.transpose();
    if (need_input_grad) {
      MatrixMap(grad_cols.data(), patch, spatial).noalias() = F.transpose() * G;
      col2im_add(grad_cols.data(), g, stride, padding, grads.input.data().data() + b * in_stride);
    }
    if (has_bias) {
      Eigen::Map<Eigen::VectorXd>(grads.bias->data().data(), g.out) += G.rowwise().sum();
    }
  }
  return grads;
}

Tensor activation_backward(const Tensor& u, const Tensor& grad_out, ActivationFn fn) {
  if (u.shape() != grad_out.shape()) {
    throw DimensionError("activation backward: " + shape_string(u.shape()) + " vs " +
                         shape_string(grad_out.shape()));
  }
  if (fn == ActivationFn::linear) return grad_out;
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(u[i] > 0.0)) g[i] = 0.0;
  }
  return g;
}

SensitivityGrads sensitivity_backward(const Tensor& s, const Tensor& v, const Tensor& grad_out) {
  if (v.shape() != grad_out.shape()) {
    throw DimensionError("sensitivity backward: " + shape_string(v.shape()) + " vs " +
                         shape_string(grad_out.shape()));
  }
  const NodeLayout l = node_layout(v.shape());
  SensitivityGrads grads{sensitivity_forward(s, grad_out), Tensor(s.shape())};
  const double* vin = v.data().data();
  const double* gin = grad_out.data().data();
  for (std::size_t b = 0; b < l.outer; ++b) {
    for (std::size_t n = 0; n < l.nodes; ++n) {
      const std::size_t base = (b * l.nodes + n) * l.inner;
      double acc = 0.0;
      for (std::size_t k = 0; k < l.inner; ++k) acc += gin[base + k] * vin[base + k];
      grads.s[n] += acc;
    }
  }
  return grads;
}

}  // namespace hsnet
