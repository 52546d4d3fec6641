#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ntkd/errors.hpp"

namespace ntkd {

// Samples stored as columns of X; labels as columns of Y.
struct Dataset {
  Eigen::MatrixXd x;  // d x N
  Eigen::MatrixXd y;  // label_dim x N
  struct Meta {
    std::string name;
    std::string normalization;
    std::uint64_t seed = 0;
  } meta;

  Eigen::Index size() const { return x.cols(); }
  Eigen::Index dim() const { return x.rows(); }

  std::vector<Eigen::VectorXd> columns() const {
    std::vector<Eigen::VectorXd> v;
    v.reserve(size_t(x.cols()));
    for (Eigen::Index i = 0; i < x.cols(); ++i) v.push_back(x.col(i));
    return v;
  }
};

// y = sin(x) for x uniform on [0, pi].
inline Dataset gen_sine(int n, std::uint64_t seed) {
  if (n < 1) throw config_error("gen_sine: n must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, std::numbers::pi);
  Dataset d;
  d.x.resize(1, n);
  d.y.resize(1, n);
  for (int i = 0; i < n; ++i) {
    const double v = u(rng);
    d.x(0, i) = v;
    d.y(0, i) = std::sin(v);
  }
  d.meta = {"sine", "none", seed};
  return d;
}

// Unit-circle inputs (cos g, sin g) with label cos(g)*sin(g); g either
// uniform on [-pi, pi] or evenly spaced.
inline Dataset gen_circle(int n, std::uint64_t seed, bool evenly_spaced = false) {
  if (n < 1) throw config_error("gen_circle: n must be >= 1");
  Dataset d;
  d.x.resize(2, n);
  d.y.resize(1, n);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
  for (int i = 0; i < n; ++i) {
    const double g = evenly_spaced
                         ? -std::numbers::pi + 2.0 * std::numbers::pi * i / n
                         : u(rng);
    d.x(0, i) = std::cos(g);
    d.x(1, i) = std::sin(g);
    d.y(0, i) = std::cos(g) * std::sin(g);
  }
  d.meta = {"circle", "none", seed};
  return d;
}

enum class LabelKind { standard_normal, none };
enum class ScaledVariant { gaussian, sphere };

// Zero-mean inputs with |x| on the sqrt(d) scale: either x ~ N(0, I_d) or
// uniform on the unit sphere.  Optional standard-normal scalar labels.
inline Dataset gen_wellscaled(int n, int d, LabelKind labels, ScaledVariant variant,
                              std::uint64_t seed) {
  if (n < 1 || d < 1) throw config_error("gen_wellscaled: n and d must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset out;
  out.x.resize(d, n);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd v(d);
    for (int j = 0; j < d; ++j) v(j) = normal(rng);
    if (variant == ScaledVariant::sphere) {
      double norm = v.norm();
      while (norm == 0.0) {  // astronomically rare; redraw
        for (int j = 0; j < d; ++j) v(j) = normal(rng);
        norm = v.norm();
      }
      v /= norm;
    }
    out.x.col(i) = v;
  }
  if (labels == LabelKind::standard_normal) {
    out.y.resize(1, n);
    for (int i = 0; i < n; ++i) out.y(0, i) = normal(rng);
  } else {
    out.y.resize(0, n);
  }
  out.meta = {variant == ScaledVariant::gaussian ? "wellscaled_gaussian"
                                                 : "wellscaled_sphere",
              "none", seed};
  return out;
}

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw format_error("cannot open file: " + path);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                    std::istreambuf_iterator<char>());
}

inline std::uint32_t be32(const std::vector<unsigned char>& b, size_t off) {
  if (off + 4 > b.size()) throw format_error("truncated file: header past end");
  return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
         (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

inline Eigen::MatrixXd one_hot(const std::vector<int>& labels, int classes) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(classes, Eigen::Index(labels.size()));
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes)
      throw format_error("label byte out of range: " + std::to_string(labels[i]));
    y(labels[i], Eigen::Index(i)) = 1.0;
  }
  return y;
}

}  // namespace detail

// IDX image/label pair: big-endian magic 0x00000803 (3-d ubyte image tensor)
// and 0x00000801 (1-d ubyte labels), dimension sizes, raw bytes.  Pixels are
// scaled to [0,1] and flattened row-major; labels become one-hot over 10.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                        std::optional<int> limit = std::nullopt) {
  const auto img = detail::read_file_bytes(images_path);
  const auto lab = detail::read_file_bytes(labels_path);

  const std::uint32_t img_magic = detail::be32(img, 0);
  if (img_magic != 0x00000803u) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "0x%08x", img_magic);
    throw format_error(std::string("IDX image magic mismatch: got ") + buf +
                       ", expected 0x00000803");
  }
  const std::uint32_t lab_magic = detail::be32(lab, 0);
  if (lab_magic != 0x00000801u) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "0x%08x", lab_magic);
    throw format_error(std::string("IDX label magic mismatch: got ") + buf +
                       ", expected 0x00000801");
  }

  const std::uint32_t count = detail::be32(img, 4);
  const std::uint32_t rows = detail::be32(img, 8);
  const std::uint32_t cols = detail::be32(img, 12);
  const std::uint32_t lab_count = detail::be32(lab, 4);
  if (lab_count != count)
    throw format_error("IDX image/label counts differ: " + std::to_string(count) +
                       " vs " + std::to_string(lab_count));
  const size_t pixels = size_t(rows) * cols;
  if (img.size() < 16 + size_t(count) * pixels)
    throw format_error("IDX image file truncated: need " +
                       std::to_string(16 + size_t(count) * pixels) + " bytes, have " +
                       std::to_string(img.size()));
  if (lab.size() < 8 + size_t(count))
    throw format_error("IDX label file truncated");

  const int n = limit ? std::min<int>(*limit, int(count)) : int(count);
  Dataset d;
  d.x.resize(Eigen::Index(pixels), n);
  std::vector<int> labels(size_t(n));
  for (int i = 0; i < n; ++i) {
    const size_t base = 16 + size_t(i) * pixels;
    for (size_t p = 0; p < pixels; ++p)
      d.x(Eigen::Index(p), i) = double(img[base + p]) / 255.0;
    labels[size_t(i)] = int(lab[8 + size_t(i)]);
  }
  d.y = detail::one_hot(labels, 10);
  d.meta = {"idx:" + images_path, "pixels scaled to [0,1], not centered", 0};
  return d;
}

// CIFAR-10 binary batches: records of 1 label byte + 3072 channel-planar
// pixel bytes.  Pixels scaled to [0,1]; one-hot labels over 10 classes.
inline Dataset load_cifar10(const std::vector<std::string>& batch_paths,
                            std::optional<int> limit = std::nullopt) {
  constexpr size_t kRecord = 3073;
  constexpr size_t kPixels = 3072;
  std::vector<Eigen::VectorXd> images;
  std::vector<int> labels;
  for (const auto& path : batch_paths) {
    const auto bytes = detail::read_file_bytes(path);
    if (bytes.size() % kRecord != 0)
      throw format_error("CIFAR-10 batch size " + std::to_string(bytes.size()) +
                         " is not a multiple of 3073: " + path);
    const size_t records = bytes.size() / kRecord;
    for (size_t r = 0; r < records; ++r) {
      if (limit && int(images.size()) >= *limit) break;
      const size_t base = r * kRecord;
      labels.push_back(int(bytes[base]));
      Eigen::VectorXd v(kPixels);
      for (size_t p = 0; p < kPixels; ++p)
        v(Eigen::Index(p)) = double(bytes[base + 1 + p]) / 255.0;
      images.push_back(std::move(v));
    }
  }
  Dataset d;
  d.x.resize(Eigen::Index(kPixels), Eigen::Index(images.size()));
  for (size_t i = 0; i < images.size(); ++i) d.x.col(Eigen::Index(i)) = images[i];
  d.y = detail::one_hot(labels, 10);
  d.meta = {"cifar10", "pixels scaled to [0,1], not centered", 0};
  return d;
}

// Shuffle-and-split used by the experiment runner; halves per the sampled
// counts with a dedicated split seed.
inline std::pair<Dataset, Dataset> split_dataset(const Dataset& d, int n_first,
                                                 std::uint64_t split_seed) {
  const Eigen::Index n = d.size();
  if (n_first < 0 || n_first > n)
    throw config_error("split_dataset: split point out of range");
  std::vector<Eigen::Index> order(size_t(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(split_seed);
  std::shuffle(order.begin(), order.end(), rng);
  Dataset a, b;
  a.meta = d.meta;
  b.meta = d.meta;
  a.x.resize(d.x.rows(), n_first);
  a.y.resize(d.y.rows(), n_first);
  b.x.resize(d.x.rows(), n - n_first);
  b.y.resize(d.y.rows(), n - n_first);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i < n_first) {
      a.x.col(i) = d.x.col(order[size_t(i)]);
      if (d.y.rows() > 0) a.y.col(i) = d.y.col(order[size_t(i)]);
    } else {
      b.x.col(i - n_first) = d.x.col(order[size_t(i)]);
      if (d.y.rows() > 0) b.y.col(i - n_first) = d.y.col(order[size_t(i)]);
    }
  }
  return {std::move(a), std::move(b)};
}

}  // namespace ntkd
