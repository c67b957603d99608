#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

#include "hsnet/errors.hpp"
#include "hsnet/experiment.hpp"
#include "hsnet/pca.hpp"
#include "hsnet/train.hpp"

using namespace hsnet;

namespace {

std::filesystem::path scratch_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "hsnet_test_data";
  std::filesystem::create_directories(dir);
  return dir / name;
}

// Sample covariance (normalized by n) of the rows of x.
std::vector<std::vector<double>> sample_covariance(const Tensor& x) {
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += x.at(i, j) / static_cast<double>(n);
  }
  std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = 0; b < d; ++b) {
        cov[a][b] += (x.at(i, a) - mean[a]) * (x.at(i, b) - mean[b]) / static_cast<double>(n);
      }
    }
  }
  return cov;
}

// Cyclic Jacobi rotations; returns the eigenvalues of a small symmetric matrix.
std::vector<double> jacobi_eigenvalues(std::vector<std::vector<double>> a) {
  const std::size_t d = a.size();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) off += a[p][q] * a[p][q];
    }
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        if (a[p][q] == 0.0) continue;
        const double theta = (a[q][q] - a[p][p]) / (2 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (std::size_t k = 0; k < d; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> eig(d);
  for (std::size_t i = 0; i < d; ++i) eig[i] = a[i][i];
  std::sort(eig.rbegin(), eig.rend());
  return eig;
}

Dataset random_dataset(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> scale(d);
  for (auto& s : scale) s = 0.2 + 2.0 * std::abs(normal(rng));
  Tensor x({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const double shared = normal(rng);
    for (std::size_t j = 0; j < d; ++j) x.at(i, j) = scale[j] * normal(rng) + 0.5 * shared + 1.0;
  }
  return autoencoding(std::move(x));
}

std::vector<std::uint8_t> idx_header(std::uint8_t type, const std::vector<std::uint32_t>& dims) {
  std::vector<std::uint8_t> b{0, 0, type, static_cast<std::uint8_t>(dims.size())};
  for (std::uint32_t d : dims) {
    for (int shift = 24; shift >= 0; shift -= 8) b.push_back(static_cast<std::uint8_t>(d >> shift));
  }
  return b;
}

}  // namespace

// Gaussian generator.

TEST(GaussianData, CovarianceMatrixHasTheBlockStructure) {
  const GaussianSpec spec{3, 2, 1.0, 1e-4, 0.9};
  const Tensor c = spec.covariance();
  ASSERT_EQ(c.shape(), (Shape{5, 5}));
  for (std::size_t a = 0; a < 5; ++a) {
    for (std::size_t b = 0; b < 5; ++b) {
      double expected = 0.0;
      if (a < 3 && b < 3) expected = a == b ? 1.0 : 0.9;
      else if (a == b) expected = 1e-4;
      EXPECT_EQ(c.at(a, b), expected) << a << "," << b;
    }
  }
}

TEST(GaussianData, SampleCovarianceMatchesSpecAtTenThousandSamples) {
  const GaussianSpec spec{8, 8, 1.0, 1e-4, 0.9};
  const Dataset d = gen_gaussian(spec, 10000, 21);
  ASSERT_EQ(d.inputs.shape(), (Shape{10000, 16}));
  EXPECT_EQ(d.targets, d.inputs);
  const Tensor target = spec.covariance();
  const auto cov = sample_covariance(d.inputs);
  for (std::size_t a = 0; a < 16; ++a) {
    double mean = 0;
    for (std::size_t i = 0; i < 10000; ++i) mean += d.inputs.at(i, a) / 10000.0;
    EXPECT_NEAR(mean, 0.0, 0.05);
    for (std::size_t b = 0; b < 16; ++b) EXPECT_NEAR(cov[a][b], target.at(a, b), 0.05);
  }
}

TEST(GaussianData, UncorrelatedEqualVarianceIsIid) {
  const Dataset d = gen_gaussian({3, 3, 2.0, 2.0, 0.0}, 10000, 22);
  const auto cov = sample_covariance(d.inputs);
  for (std::size_t a = 0; a < 6; ++a) {
    for (std::size_t b = 0; b < 6; ++b) EXPECT_NEAR(cov[a][b], a == b ? 2.0 : 0.0, 0.1);
  }
}

TEST(GaussianData, SingleSample) {
  const Dataset d = gen_gaussian({2, 2, 1.0, 1e-4, 0.9}, 1, 1);
  EXPECT_EQ(d.size(), 1u);
  EXPECT_EQ(d.inputs.shape(), (Shape{1, 4}));
}

TEST(GaussianData, DeterministicPerSeed) {
  const GaussianSpec spec{4, 4, 1.0, 1e-4, 0.9};
  EXPECT_EQ(gen_gaussian(spec, 50, 5).inputs, gen_gaussian(spec, 50, 5).inputs);
  EXPECT_NE(gen_gaussian(spec, 50, 5).inputs, gen_gaussian(spec, 50, 6).inputs);
}

TEST(GaussianData, NonPositiveDefiniteSpecsAreRejected) {
  // Equicorrelation is PD only for rho in (-1/(n-1), 1).
  EXPECT_THROW(gen_gaussian({4, 0, 1.0, 1e-4, -0.5}, 10, 1), ConfigError);
  EXPECT_THROW(gen_gaussian({4, 2, 1.0, 1e-4, 1.0}, 10, 1), ConfigError);
  EXPECT_THROW(gen_gaussian({2, 2, 1.0, 0.0, 0.5}, 10, 1), ConfigError);
  EXPECT_NO_THROW(gen_gaussian({4, 0, 1.0, 1e-4, -0.3}, 10, 1));
}

// IDX.

TEST(Idx, ImageHeaderArithmetic) {
  auto bytes = idx_header(0x08, {2, 3, 3});
  for (int i = 0; i < 18; ++i) bytes.push_back(static_cast<std::uint8_t>(i * 15));
  const Tensor t = parse_idx(bytes);
  EXPECT_EQ(t.shape(), (Shape{2, 3, 3}));
  EXPECT_EQ(t[0], 0.0);
  EXPECT_EQ(t[17], 255.0 / 255.0);
  EXPECT_EQ(t[1], 15.0 / 255.0);
}

TEST(Idx, LabelFilesStayIntegral) {
  auto bytes = idx_header(0x08, {4});
  for (std::uint8_t v : {7, 0, 9, 3}) bytes.push_back(v);
  const Tensor t = parse_idx(bytes);
  EXPECT_EQ(t, Tensor::vector({7, 0, 9, 3}));
}

TEST(Idx, TruncatedPayloadReportsOffset) {
  auto bytes = idx_header(0x08, {2, 3, 3});
  bytes.resize(bytes.size() + 17);
  try {
    parse_idx(bytes);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), bytes.size());
  }
}

TEST(Idx, BadMagicAndTypeAreFormatErrors) {
  auto bytes = idx_header(0x08, {1});
  bytes.push_back(1);
  auto bad = bytes;
  bad[0] = 1;
  try {
    parse_idx(bad);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  bad = bytes;
  bad[2] = 0x0D;
  try {
    parse_idx(bad);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 2u);
  }
  EXPECT_THROW(parse_idx(std::vector<std::uint8_t>{0, 0}), FormatError);
  bytes.push_back(0);
  EXPECT_THROW(parse_idx(bytes), FormatError);
}

TEST(Idx, WriteThenReadIsBitExact) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> byte(0, 255);
  Tensor images({3, 4, 5});
  for (auto& v : images.values()) v = byte(rng) / 255.0;
  const auto path = scratch_file("images.idx");
  write_idx(path, images);
  EXPECT_EQ(load_idx(path), images);

  Tensor labels({6});
  for (auto& v : labels.values()) v = byte(rng) % 10;
  write_idx(path, labels);
  EXPECT_EQ(load_idx(path), labels);
}

TEST(Idx, MnistLoaderFlattensAndLimits) {
  Tensor images({5, 28, 28});
  for (std::size_t i = 0; i < images.size(); ++i) images[i] = static_cast<double>(i % 256) / 255.0;
  const auto path = scratch_file("mnist.idx");
  write_idx(path, images);
  const Dataset d = load_mnist_autoencoding(path, 3);
  EXPECT_EQ(d.inputs.shape(), (Shape{3, 784}));
  EXPECT_EQ(d.targets, d.inputs);
  EXPECT_EQ(d.inputs.at(2, 5), images[2 * 784 + 5]);
}

// CIFAR-10.

TEST(Cifar, ZeroRecord) {
  const std::vector<std::uint8_t> bytes(kCifarRecordBytes, 0);
  const Dataset d = parse_cifar10(bytes);
  EXPECT_EQ(d.inputs.shape(), (Shape{1, 3, 32, 32}));
  EXPECT_EQ(d.targets, Tensor::vector({0}));
  EXPECT_EQ(d.inputs.max_abs(), 0.0);
}

TEST(Cifar, TwoRecords) {
  std::vector<std::uint8_t> bytes(2 * kCifarRecordBytes, 255);
  bytes[0] = 4;
  bytes[kCifarRecordBytes] = 9;
  const Dataset d = parse_cifar10(bytes);
  EXPECT_EQ(d.size(), 2u);
  EXPECT_EQ(d.targets, Tensor::vector({4, 9}));
  EXPECT_EQ(d.inputs[3071], 1.0);
}

TEST(Cifar, LengthNotAMultipleOfTheRecordIsRejected) {
  EXPECT_THROW(parse_cifar10(std::vector<std::uint8_t>(3074, 0)), FormatError);
  std::vector<std::uint8_t> bad_label(kCifarRecordBytes, 0);
  bad_label[0] = 10;
  EXPECT_THROW(parse_cifar10(bad_label), FormatError);
}

TEST(Cifar, WriteThenReadIsBitExact) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> byte(0, 255);
  Tensor images({3, 3, 32, 32});
  for (auto& v : images.values()) v = byte(rng) / 255.0;
  const Dataset d{images, Tensor::vector({1, 0, 8}), "train"};
  const auto path = scratch_file("cifar.bin");
  write_cifar10(path, d);
  EXPECT_EQ(std::filesystem::file_size(path), 3 * kCifarRecordBytes);
  const Dataset back = load_cifar10(path);
  EXPECT_EQ(back.inputs, d.inputs);
  EXPECT_EQ(back.targets, d.targets);
}

// Dataset CSV.

TEST(DatasetCsv, AutoencodingRoundTrip) {
  const Dataset d = gen_gaussian({2, 3, 1.0, 1e-4, 0.9}, 20, 8);
  std::stringstream ss;
  write_dataset_csv(ss, d);
  const Dataset back = read_dataset_csv(ss);
  EXPECT_EQ(back.inputs, d.inputs);
  EXPECT_EQ(back.targets, d.targets);
}

TEST(DatasetCsv, LabelledRoundTrip) {
  const Dataset d{Tensor({3, 2}, {0.1, -2.5, 1e-300, 3, 4, 5}), Tensor::vector({2, 0, 1}), "train"};
  std::stringstream ss;
  write_dataset_csv(ss, d);
  const Dataset back = read_dataset_csv(ss);
  EXPECT_EQ(back.inputs, d.inputs);
  EXPECT_EQ(back.targets, d.targets);
}

// PCA.

TEST(Pca, PointsOnALineHaveOneComponent) {
  Tensor x({50, 2});
  for (std::size_t i = 0; i < 50; ++i) {
    const double t = static_cast<double>(i) - 24.5;
    x.at(i, 0) = 3 * t + 1;
    x.at(i, 1) = 4 * t - 2;
  }
  const PcaModel m = fit_pca(autoencoding(x), 2);
  EXPECT_NEAR(std::abs(m.components.at(0, 0)), 0.6, 1e-12);
  EXPECT_NEAR(std::abs(m.components.at(0, 1)), 0.8, 1e-12);
  EXPECT_NEAR(m.eigenvalues[1], 0.0, 1e-9);
  EXPECT_NEAR(pca_reconstruction_mse(m, autoencoding(x), 1), 0.0, 1e-20);
}

TEST(Pca, IsotropicDataHasNearlyEqualEigenvalues) {
  const Dataset d = gen_gaussian({4, 0, 1.0, 1.0, 0.0}, 20000, 9);
  const PcaModel m = fit_pca(d, 4);
  for (double e : m.eigenvalues) EXPECT_NEAR(e, 1.0, 0.05);
}

TEST(Pca, FullBasisReconstructsExactly) {
  const Dataset d = random_dataset(40, 6, 1);
  const PcaModel m = fit_pca(d, 6);
  EXPECT_LE(pca_reconstruction_mse(m, d, 6), 1e-10);
}

TEST(Pca, ComponentsAreOrthonormalAndEigenvaluesDescend) {
  const Dataset d = random_dataset(100, 8, 2);
  const PcaModel m = fit_pca(d, 5);
  ASSERT_EQ(m.component_count(), 5u);
  ASSERT_EQ(m.eigenvalues.size(), 8u);
  for (std::size_t a = 0; a < 5; ++a) {
    for (std::size_t b = 0; b < 5; ++b) {
      double dot = 0;
      for (std::size_t j = 0; j < 8; ++j) dot += m.components.at(a, j) * m.components.at(b, j);
      EXPECT_NEAR(dot, a == b ? 1.0 : 0.0, 1e-10);
    }
  }
  for (std::size_t i = 1; i < 8; ++i) EXPECT_LE(m.eigenvalues[i], m.eigenvalues[i - 1]);
}

TEST(Pca, ErrorIsTheTrailingEigenvalueSumPerDimension) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Dataset d = random_dataset(60, 5, 100 + seed);
    const std::vector<double> eig = jacobi_eigenvalues(sample_covariance(d.inputs));
    const PcaModel m = fit_pca(d, 5);
    for (std::size_t k = 0; k <= 5; ++k) {
      double trailing = 0;
      for (std::size_t i = k; i < 5; ++i) trailing += eig[i];
      EXPECT_NEAR(pca_reconstruction_mse(m, d, k), trailing / 5.0, 1e-10) << "k = " << k;
    }
  }
}

TEST(Pca, ErrorDoesNotIncreaseWithK) {
  const Dataset d = random_dataset(80, 7, 3);
  const PcaModel m = fit_pca(d, 7);
  double prev = INFINITY;
  for (std::size_t k = 0; k <= 7; ++k) {
    const double e = pca_reconstruction_mse(m, d, k);
    EXPECT_LE(e, prev);
    prev = e;
  }
}

TEST(Pca, BeatsRandomOrthonormalProjections) {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> normal;
  for (std::size_t dim = 2; dim <= 6; ++dim) {
    const Dataset d = random_dataset(50, dim, dim);
    for (std::size_t k = 1; k <= std::min<std::size_t>(2, dim); ++k) {
      const PcaModel m = fit_pca(d, k);
      const double best = pca_reconstruction_mse(m, d, k);
      for (int trial = 0; trial < 200; ++trial) {
        // Gram-Schmidt on Gaussian vectors gives a random orthonormal k-frame.
        std::vector<std::vector<double>> q(k, std::vector<double>(dim));
        for (std::size_t r = 0; r < k; ++r) {
          for (auto& v : q[r]) v = normal(rng);
          for (std::size_t p = 0; p < r; ++p) {
            double dot = 0;
            for (std::size_t j = 0; j < dim; ++j) dot += q[r][j] * q[p][j];
            for (std::size_t j = 0; j < dim; ++j) q[r][j] -= dot * q[p][j];
          }
          double norm = 0;
          for (double v : q[r]) norm += v * v;
          for (auto& v : q[r]) v /= std::sqrt(norm);
        }
        double err = 0;
        for (std::size_t i = 0; i < d.size(); ++i) {
          std::vector<double> c(dim);
          for (std::size_t j = 0; j < dim; ++j) c[j] = d.inputs.at(i, j) - m.mean[j];
          std::vector<double> rec(dim, 0.0);
          for (std::size_t r = 0; r < k; ++r) {
            double proj = 0;
            for (std::size_t j = 0; j < dim; ++j) proj += q[r][j] * c[j];
            for (std::size_t j = 0; j < dim; ++j) rec[j] += proj * q[r][j];
          }
          for (std::size_t j = 0; j < dim; ++j) err += std::pow(c[j] - rec[j], 2);
        }
        err /= static_cast<double>(d.size() * dim);
        EXPECT_LE(best, err + 1e-12) << "d " << dim << " k " << k << " trial " << trial;
      }
    }
  }
}

TEST(Pca, ComponentCountOutOfRange) {
  const Dataset d = random_dataset(10, 3, 4);
  EXPECT_THROW(fit_pca(d, 0), LookupError);
  EXPECT_THROW(fit_pca(d, 4), LookupError);
  const PcaModel m = fit_pca(d, 2);
  EXPECT_THROW(pca_reconstruction_mse(m, d, 3), LookupError);
}

// Masked reconstruction through the network.

TEST(TopK, FullWidthIsTheNetworkError) {
  const Dataset d = gen_gaussian({3, 3, 1.0, 1e-2, 0.9}, 100, 5);
  NetworkGraph g = build_relu_autoencoder(6, 5, 6);
  g.mutable_parameter("hidden_s", "s") = Tensor::vector({0.4, -1.2, 0.0, 2.0, 0.9});
  EXPECT_EQ(topk_node_reconstruction_mse(g, d, 5), deviation_penalty(g, d, LossKind::mse));
}

TEST(TopK, ZeroNodesLeavesOnlyTheBiasPath) {
  const Dataset d = gen_gaussian({3, 3, 1.0, 1e-2, 0.9}, 100, 5);
  NetworkGraph g = build_relu_autoencoder(6, 4, 7);
  g.mutable_parameter("decoder", "bias") = Tensor::vector({0.5, -0.5, 0.1, 0.0, 2.0, -1.0});
  // Output is relu(decoder bias) for every sample.
  const std::vector<double> out{0.5, 0.0, 0.1, 0.0, 2.0, 0.0};
  double expected = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = 0; j < 6; ++j) expected += std::pow(out[j] - d.inputs.at(i, j), 2);
  }
  expected /= static_cast<double>(d.size() * 6);
  EXPECT_NEAR(topk_node_reconstruction_mse(g, d, 0), expected, 1e-14);
}

TEST(TopK, KeepsTheLargestMagnitudes) {
  const Dataset d = gen_gaussian({2, 2, 1.0, 1e-2, 0.9}, 30, 5);
  NetworkGraph g = build_relu_autoencoder(4, 4, 8);
  g.mutable_parameter("hidden_s", "s") = Tensor::vector({0.1, -3.0, 0.5, 2.0});
  NetworkGraph masked = g;
  masked.mutable_parameter("hidden_s", "s") = Tensor::vector({0.0, -3.0, 0.0, 2.0});
  EXPECT_EQ(topk_node_reconstruction_mse(g, d, 2), deviation_penalty(masked, d, LossKind::mse));
  EXPECT_THROW(topk_node_reconstruction_mse(g, d, 5), LookupError);
}

TEST(TopK, NonIncreasingInKForOrthonormalFactors) {
  // Linear codes along orthonormal directions with gains in (0, 2): each kept
  // node shrinks the residual along its direction, so masking is monotone.
  const Dataset d = gen_gaussian({3, 3, 1.0, 1e-2, 0.5}, 200, 10);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> gain(0.05, 1.95);
  Tensor q({6, 6});
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t c = 0; c < 6; ++c) q.at(r, c) = normal(rng);
    for (std::size_t p = 0; p < r; ++p) {
      double dot = 0;
      for (std::size_t c = 0; c < 6; ++c) dot += q.at(r, c) * q.at(p, c);
      for (std::size_t c = 0; c < 6; ++c) q.at(r, c) -= dot * q.at(p, c);
    }
    double norm = 0;
    for (std::size_t c = 0; c < 6; ++c) norm += q.at(r, c) * q.at(r, c);
    for (std::size_t c = 0; c < 6; ++c) q.at(r, c) /= std::sqrt(norm);
  }
  Tensor qt({6, 6}), s({6});
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t c = 0; c < 6; ++c) qt.at(c, r) = q.at(r, c);
    s[r] = gain(rng);
  }
  NetworkGraph g({6});
  g.add_dense("encoder", q).add_sensitivity("hidden_s", s).add_dense("decoder", qt);
  double prev = INFINITY;
  for (std::size_t k = 0; k <= 6; ++k) {
    const double e = topk_node_reconstruction_mse(g, d, k);
    EXPECT_LE(e, prev + 1e-15) << "k = " << k;
    prev = e;
  }
}
