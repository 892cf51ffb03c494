#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "phantom/datasets.hpp"

namespace phantom::testing {

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("phantom_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_bytes(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

/// Images quantized to k/255 so they survive the byte round-trip exactly.
inline LabeledDataset byte_image_dataset(std::size_t n, Shape sample_shape, std::size_t classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> byte(0, 255);
  std::uniform_int_distribution<std::size_t> cls(0, classes - 1);
  Shape shape{n};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  Tensor images(shape);
  for (auto& v : images.data()) v = byte(rng) / 255.0;
  std::vector<Label> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i < classes ? i : cls(rng);
  return LabeledDataset(std::move(images), std::move(labels), classes);
}

/// Class-structured 28x28 grayscale images: each class has its own template
/// plus per-image noise. Stands in for FashionMNIST when the real files are absent.
inline LabeledDataset synthetic_fashion_like(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::vector<double>> templates(10, std::vector<double>(28 * 28));
  for (auto& t : templates)
    for (auto& v : t) v = u(rng);
  Tensor images({n, 1, 28, 28});
  std::vector<Label> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = i % 10;
    for (std::size_t p = 0; p < 28 * 28; ++p) {
      const double v = 0.6 * templates[labels[i]][p] + 0.4 * u(rng);
      images[i * 28 * 28 + p] = std::round(v * 255.0) / 255.0;
    }
  }
  return LabeledDataset(std::move(images), std::move(labels), 10);
}

}  // namespace phantom::testing
