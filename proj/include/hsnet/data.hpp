#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hsnet/tensor.hpp"

namespace hsnet {

/// Inputs and targets share their leading (sample) axis.
struct Dataset {
  Tensor inputs;
  Tensor targets;
  std::string split = "train";

  std::size_t size() const { return inputs.rank() ? inputs.dim(0) : 0; }
  /// Rows [begin, end) of inputs and targets.
  Dataset slice(std::size_t begin, std::size_t end) const;
  /// Rows in the given order.
  Dataset gather(std::span<const std::size_t> rows) const;
  /// Throws DimensionError when row counts differ.
  void validate() const;
};

/// Autoencoding dataset: targets are the inputs.
Dataset autoencoding(Tensor inputs, std::string split = "train");

/// Zero-mean Gaussian inputs: the first n_corr coordinates have variance
/// var_hi with pairwise correlation rho, the remaining n_indep are independent
/// with variance var_lo. No correlation across the two blocks.
struct GaussianSpec {
  std::size_t n_corr = 8;
  std::size_t n_indep = 8;
  double var_hi = 1.0;
  double var_lo = 1e-4;
  double rho = 0.9;

  std::size_t dims() const { return n_corr + n_indep; }
  Tensor covariance() const;
};

/// n samples via the Cholesky factor of the block covariance; targets equal
/// inputs. Throws ConfigError when the covariance is not positive definite.
Dataset gen_gaussian(const GaussianSpec& spec, std::size_t n, std::uint64_t seed);

// IDX (big-endian, unsigned-byte payload).

enum class IdxValues {
  automatic,     // rank 1: raw integers (labels); otherwise bytes / 255
  raw,
  unit_interval,
};

Tensor load_idx(const std::filesystem::path& path, IdxValues values = IdxValues::automatic);
Tensor parse_idx(std::span<const std::uint8_t> bytes, IdxValues values = IdxValues::automatic);
/// Inverse of load_idx: values are mapped back to bytes by the same rule.
void write_idx(const std::filesystem::path& path, const Tensor& tensor,
               IdxValues values = IdxValues::automatic);

/// Flattened MNIST images [n x 784] in [0, 1] as an autoencoding dataset.
/// `limit` of 0 keeps every image.
Dataset load_mnist_autoencoding(const std::filesystem::path& images, std::size_t limit = 0);

// CIFAR-10 binary: records of one label byte followed by 3072 image bytes.

constexpr std::size_t kCifarRecordBytes = 3073;

Dataset load_cifar10(const std::filesystem::path& path);
Dataset parse_cifar10(std::span<const std::uint8_t> bytes);
void write_cifar10(const std::filesystem::path& path, const Dataset& data);

/// CSV with header x0..x{d-1}, followed by t0..t{k-1} when the targets are
/// not the inputs. Rows are samples; trailing input axes are flattened.
void write_dataset_csv(std::ostream& os, const Dataset& data);
Dataset read_dataset_csv(std::istream& is);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace hsnet
