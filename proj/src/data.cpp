#include "hsnet/data.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>

#include "hsnet/csv.hpp"
#include "hsnet/errors.hpp"

namespace hsnet {

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  return {inputs.slice_rows(begin, end), targets.slice_rows(begin, end), split};
}

Dataset Dataset::gather(std::span<const std::size_t> rows) const {
  const auto take = [&](const Tensor& t) {
    Shape shape = t.shape();
    const std::size_t stride = shape[0] ? t.size() / shape[0] : 0;
    shape[0] = rows.size();
    std::vector<double> out;
    out.reserve(rows.size() * stride);
    for (std::size_t r : rows) {
      if (r >= t.dim(0)) throw LookupError("row " + std::to_string(r) + " out of range");
      out.insert(out.end(), t.values().begin() + r * stride, t.values().begin() + (r + 1) * stride);
    }
    return Tensor(std::move(shape), std::move(out));
  };
  return {take(inputs), take(targets), split};
}

void Dataset::validate() const {
  if (inputs.rank() == 0 || targets.rank() == 0 || inputs.dim(0) != targets.dim(0)) {
    throw DimensionError("dataset inputs " + shape_string(inputs.shape()) + " and targets " +
                         shape_string(targets.shape()) + " disagree on sample count");
  }
}

Dataset autoencoding(Tensor inputs, std::string split) {
  Tensor targets = inputs;
  return {std::move(inputs), std::move(targets), std::move(split)};
}

Tensor GaussianSpec::covariance() const {
  const std::size_t d = dims();
  Tensor c({d, d});
  for (std::size_t i = 0; i < n_corr; ++i) {
    for (std::size_t j = 0; j < n_corr; ++j) c.at(i, j) = i == j ? var_hi : rho * var_hi;
  }
  for (std::size_t i = n_corr; i < d; ++i) c.at(i, i) = var_lo;
  return c;
}

Dataset gen_gaussian(const GaussianSpec& spec, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw DomainError("gen_gaussian: sample count must be positive");
  const std::size_t d = spec.dims();
  if (d == 0) throw ConfigError("gen_gaussian: no input dimensions");
  const Tensor cov = spec.covariance();
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> c(
      cov.data().data(), d, d);
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() != Eigen::Success || !(spec.var_lo > 0.0 || spec.n_indep == 0) ||
      !(spec.rho > -1.0 && spec.rho < 1.0)) {
    throw ConfigError("gen_gaussian: covariance is not positive definite");
  }
  const Eigen::MatrixXd lower = llt.matrixL();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor x({n, d});
  Eigen::VectorXd z(d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < d; ++k) z[k] = normal(rng);
    const Eigen::VectorXd sample = lower * z;
    for (std::size_t k = 0; k < d; ++k) x.at(r, k) = sample[k];
  }
  return autoencoding(std::move(x));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

namespace {

bool unit_scaled(IdxValues values, std::size_t rank) {
  return values == IdxValues::unit_interval || (values == IdxValues::automatic && rank > 1);
}

}  // namespace

Tensor parse_idx(std::span<const std::uint8_t> bytes, IdxValues values) {
  if (bytes.size() < 4) throw FormatError("idx: file shorter than the 4-byte magic", bytes.size());
  if (bytes[0] != 0 || bytes[1] != 0) throw FormatError("idx: bad magic", 0);
  if (bytes[2] != 0x08) throw FormatError("idx: only unsigned-byte payloads (0x08) are supported", 2);
  const std::size_t rank = bytes[3];
  if (rank == 0) throw FormatError("idx: zero dimensions", 3);
  const std::size_t header = 4 + 4 * rank;
  if (bytes.size() < header) throw FormatError("idx: truncated dimension header", bytes.size());
  Shape shape(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const auto* p = bytes.data() + 4 + 4 * i;
    shape[i] = (std::size_t{p[0]} << 24) | (std::size_t{p[1]} << 16) | (std::size_t{p[2]} << 8) | p[3];
  }
  const std::size_t count = shape_product(shape);
  if (bytes.size() < header + count) {
    throw FormatError("idx: payload holds " + std::to_string(bytes.size() - header) +
                          " bytes, dimensions need " + std::to_string(count),
                      bytes.size());
  }
  if (bytes.size() > header + count) {
    throw FormatError("idx: trailing bytes after payload", header + count);
  }
  const bool scale = unit_scaled(values, rank);
  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double b = bytes[header + i];
    data[i] = scale ? b / 255.0 : b;
  }
  return Tensor(std::move(shape), std::move(data));
}

Tensor load_idx(const std::filesystem::path& path, IdxValues values) {
  return parse_idx(read_file_bytes(path), values);
}

void write_idx(const std::filesystem::path& path, const Tensor& tensor, IdxValues values) {
  if (tensor.rank() == 0 || tensor.rank() > 255) throw DimensionError("idx: unsupported rank");
  const bool scale = unit_scaled(values, tensor.rank());
  std::vector<std::uint8_t> out{0, 0, 0x08, static_cast<std::uint8_t>(tensor.rank())};
  for (std::size_t d : tensor.shape()) {
    if (d > 0xFFFFFFFFu) throw DimensionError("idx: dimension exceeds 32 bits");
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(d >> shift));
  }
  for (double v : tensor.values()) {
    const double b = std::round(scale ? v * 255.0 : v);
    if (!(b >= 0.0 && b <= 255.0)) throw DomainError("idx: value does not fit an unsigned byte");
    out.push_back(static_cast<std::uint8_t>(b));
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write '" + path.string() + "'");
  os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

Dataset load_mnist_autoencoding(const std::filesystem::path& images, std::size_t limit) {
  Tensor raw = load_idx(images, IdxValues::unit_interval);
  if (raw.rank() != 3) throw FormatError("mnist: expected a 3-D image file", 3);
  const std::size_t n = limit ? std::min(limit, raw.dim(0)) : raw.dim(0);
  const std::size_t pixels = raw.dim(1) * raw.dim(2);
  Tensor flat = raw.slice_rows(0, n).reshaped({n, pixels});
  return autoencoding(std::move(flat));
}

Dataset parse_cifar10(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % kCifarRecordBytes != 0) {
    throw FormatError("cifar10: file length " + std::to_string(bytes.size()) +
                          " is not a multiple of " + std::to_string(kCifarRecordBytes),
                      bytes.size() - bytes.size() % kCifarRecordBytes);
  }
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  Tensor images({n, 3, 32, 32});
  Tensor labels({n});
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t base = r * kCifarRecordBytes;
    if (bytes[base] > 9) throw FormatError("cifar10: label outside 0-9", base);
    labels[r] = bytes[base];
    for (std::size_t k = 0; k < kCifarRecordBytes - 1; ++k) {
      images[r * (kCifarRecordBytes - 1) + k] = bytes[base + 1 + k] / 255.0;
    }
  }
  return {std::move(images), std::move(labels), "train"};
}

Dataset load_cifar10(const std::filesystem::path& path) {
  return parse_cifar10(read_file_bytes(path));
}

void write_cifar10(const std::filesystem::path& path, const Dataset& data) {
  data.validate();
  const std::size_t n = data.size();
  if (data.inputs.size() != n * (kCifarRecordBytes - 1) || data.targets.size() != n) {
    throw DimensionError("cifar10: expected [n x 3 x 32 x 32] images and n labels");
  }
  std::vector<std::uint8_t> out;
  out.reserve(n * kCifarRecordBytes);
  for (std::size_t r = 0; r < n; ++r) {
    out.push_back(static_cast<std::uint8_t>(data.targets[r]));
    for (std::size_t k = 0; k < kCifarRecordBytes - 1; ++k) {
      out.push_back(static_cast<std::uint8_t>(std::round(data.inputs[r * (kCifarRecordBytes - 1) + k] * 255.0)));
    }
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write '" + path.string() + "'");
  os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

void write_dataset_csv(std::ostream& os, const Dataset& data) {
  data.validate();
  const std::size_t n = data.size();
  const std::size_t d = data.inputs.size() / n;
  const bool with_targets = !(data.inputs == data.targets);
  const std::size_t k = with_targets ? data.targets.size() / n : 0;
  std::vector<std::string> header;
  for (std::size_t j = 0; j < d; ++j) header.push_back("x" + std::to_string(j));
  for (std::size_t j = 0; j < k; ++j) header.push_back("t" + std::to_string(j));
  write_csv_row(os, header);
  std::vector<std::string> row(d + k);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) row[j] = format_double(data.inputs[r * d + j]);
    for (std::size_t j = 0; j < k; ++j) row[d + j] = format_double(data.targets[r * k + j]);
    write_csv_row(os, row);
  }
}

Dataset read_dataset_csv(std::istream& is) {
  CsvTable table = read_csv(is);
  std::size_t d = 0, k = 0;
  for (const auto& h : table.header) {
    if (!h.empty() && h[0] == 'x') ++d;
    else if (!h.empty() && h[0] == 't') ++k;
    else throw FormatError("dataset csv: unexpected column '" + h + "'", 0);
  }
  const std::size_t n = table.rows.size();
  if (n == 0) throw FormatError("dataset csv: no rows", 0);
  Tensor x({n, d});
  Tensor t({n, k ? k : d});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) x[r * d + j] = parse_double(table.rows[r][j]);
    for (std::size_t j = 0; j < k; ++j) t[r * k + j] = parse_double(table.rows[r][d + j]);
  }
  if (k == 0) return autoencoding(std::move(x));
  if (k == 1) t = t.reshaped({n});
  return {std::move(x), std::move(t), "train"};
}

}  // namespace hsnet
