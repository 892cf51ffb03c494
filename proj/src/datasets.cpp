#include "phantom/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "phantom/error.hpp"

namespace phantom {

LabeledDataset::LabeledDataset(Tensor images, std::vector<Label> labels, std::size_t num_classes)
    : images_(std::move(images)), labels_(std::move(labels)), class_index_(num_classes) {
  if (images_.rank() < 2 || images_.dim(0) != labels_.size()) {
    throw ShapeError("dataset images " + shape_to_string(images_.shape()) + " do not match " +
                     std::to_string(labels_.size()) + " labels");
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] >= num_classes) {
      throw FormatError(FormatError::Kind::bad_value, "label " + std::to_string(labels_[i]) + " at index " +
                                                          std::to_string(i) + " exceeds class count " +
                                                          std::to_string(num_classes));
    }
    class_index_[labels_[i]].push_back(i);
  }
}

Shape LabeledDataset::sample_shape() const { return Shape(images_.shape().begin() + 1, images_.shape().end()); }

std::size_t LabeledDataset::sample_size() const { return shape_size(sample_shape()); }

std::span<const double> LabeledDataset::sample(std::size_t i) const {
  const std::size_t n = sample_size();
  return images_.data().subspan(i * n, n);
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  Shape shape = images_.shape();
  shape[0] = indices.size();
  std::vector<double> data;
  data.reserve(shape_size(shape));
  std::vector<Label> labels;
  labels.reserve(indices.size());
  for (auto i : indices) {
    auto s = sample(i);
    data.insert(data.end(), s.begin(), s.end());
    labels.push_back(labels_.at(i));
  }
  return LabeledDataset(Tensor(std::move(shape), std::move(data)), std::move(labels), num_classes());
}

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::io, "cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(FormatError::Kind::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatError::Kind::io, "write failed for " + path.string());
}

std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

void put_be32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) b.push_back(static_cast<unsigned char>(v >> shift));
}

unsigned char to_byte(double v) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw FormatError(FormatError::Kind::bad_value, "pixel value " + std::to_string(v) + " outside [0, 1]");
  }
  return static_cast<unsigned char>(std::lround(v * 255.0));
}

std::size_t infer_classes(const std::vector<Label>& labels) {
  return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
}

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;
constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarPixels = 3 * kCifarSide * kCifarSide;
constexpr std::size_t kCifarRecord = 1 + kCifarPixels;

}  // namespace

LabeledDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                        std::size_t num_classes) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);
  if (img.size() < 16) throw FormatError(FormatError::Kind::truncated, images_path.string() + ": header truncated");
  if (lab.size() < 8) throw FormatError(FormatError::Kind::truncated, labels_path.string() + ": header truncated");
  if (read_be32(img, 0) != kIdxImages) {
    throw FormatError(FormatError::Kind::bad_magic, images_path.string() + ": bad IDX image magic");
  }
  if (read_be32(lab, 0) != kIdxLabels) {
    throw FormatError(FormatError::Kind::bad_magic, labels_path.string() + ": bad IDX label magic");
  }
  const std::size_t n = read_be32(img, 4), rows = read_be32(img, 8), cols = read_be32(img, 12);
  const std::size_t n_labels = read_be32(lab, 4);
  if (n != n_labels) {
    throw FormatError(FormatError::Kind::count_mismatch, "IDX count mismatch: " + std::to_string(n) +
                                                             " images vs " + std::to_string(n_labels) + " labels");
  }
  if (img.size() < 16 + n * rows * cols) {
    throw FormatError(FormatError::Kind::truncated, images_path.string() + ": pixel data truncated");
  }
  if (lab.size() < 8 + n) throw FormatError(FormatError::Kind::truncated, labels_path.string() + ": labels truncated");
  if (n == 0 || rows == 0 || cols == 0) throw FormatError(FormatError::Kind::bad_value, "IDX file holds no images");

  std::vector<double> pixels(n * rows * cols);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = img[16 + i] / 255.0;
  std::vector<Label> labels(lab.begin() + 8, lab.begin() + 8 + static_cast<std::ptrdiff_t>(n));
  if (num_classes == 0) num_classes = infer_classes(labels);
  return LabeledDataset(Tensor({n, 1, rows, cols}, std::move(pixels)), std::move(labels), num_classes);
}

void write_idx(const LabeledDataset& ds, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path) {
  const Shape s = ds.sample_shape();
  if (s.size() != 3 || s[0] != 1) throw ShapeError("IDX images must be [N, 1, h, w], got " + shape_to_string(ds.images().shape()));
  std::vector<unsigned char> img;
  put_be32(img, kIdxImages);
  put_be32(img, static_cast<std::uint32_t>(ds.size()));
  put_be32(img, static_cast<std::uint32_t>(s[1]));
  put_be32(img, static_cast<std::uint32_t>(s[2]));
  for (double v : ds.images().data()) img.push_back(to_byte(v));
  std::vector<unsigned char> lab;
  put_be32(lab, kIdxLabels);
  put_be32(lab, static_cast<std::uint32_t>(ds.size()));
  for (auto l : ds.labels()) lab.push_back(static_cast<unsigned char>(l));
  write_file(images_path, img);
  write_file(labels_path, lab);
}

LabeledDataset load_cifar10(std::span<const std::filesystem::path> batch_files) {
  std::vector<double> pixels;
  std::vector<Label> labels;
  for (const auto& path : batch_files) {
    const auto bytes = read_file(path);
    if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
      throw FormatError(FormatError::Kind::bad_length, path.string() + ": length " + std::to_string(bytes.size()) +
                                                           " is not a positive multiple of 3073");
    }
    for (std::size_t off = 0; off < bytes.size(); off += kCifarRecord) {
      labels.push_back(bytes[off]);
      for (std::size_t i = 1; i < kCifarRecord; ++i) pixels.push_back(bytes[off + i] / 255.0);
    }
  }
  if (labels.empty()) throw FormatError(FormatError::Kind::bad_value, "no CIFAR-10 batch files given");
  const std::size_t n = labels.size();
  return LabeledDataset(Tensor({n, 3, kCifarSide, kCifarSide}, std::move(pixels)), std::move(labels), 10);
}

void write_cifar10(const LabeledDataset& ds, const std::filesystem::path& path) {
  if (ds.sample_shape() != Shape{3, kCifarSide, kCifarSide}) {
    throw ShapeError("CIFAR-10 images must be [N, 3, 32, 32], got " + shape_to_string(ds.images().shape()));
  }
  std::vector<unsigned char> bytes;
  bytes.reserve(ds.size() * kCifarRecord);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    bytes.push_back(static_cast<unsigned char>(ds.labels()[i]));
    for (double v : ds.sample(i)) bytes.push_back(to_byte(v));
  }
  write_file(path, bytes);
}

SyntheticKind synthetic_kind_from_string(const std::string& name) {
  if (name == "two_moons" || name == "two-moons") return SyntheticKind::two_moons;
  if (name == "gaussian_blobs" || name == "blobs") return SyntheticKind::gaussian_blobs;
  throw Error("unknown synthetic generator '" + name + "'");
}

LabeledDataset make_synthetic_2d(SyntheticKind kind, std::size_t n_per_class, double noise_std,
                                 std::uint64_t seed) {
  if (n_per_class == 0) throw Error("make_synthetic_2d: n_per_class must be >= 1");
  if (!(noise_std >= 0.0)) throw Error("make_synthetic_2d: noise_std must be >= 0");
  Rng rng = make_rng(seed, streams::data);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> points;
  std::vector<Label> labels;
  points.reserve(4 * n_per_class);
  for (Label c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      double x, y;
      if (kind == SyntheticKind::two_moons) {
        const double t = angle(rng);
        x = c == 0 ? std::cos(t) : 1.0 - std::cos(t);
        y = c == 0 ? std::sin(t) : 0.5 - std::sin(t);
      } else {
        x = c == 0 ? -2.0 : 2.0;
        y = 0.0;
      }
      if (noise_std > 0.0) {
        x += noise_std * noise(rng);
        y += noise_std * noise(rng);
      }
      points.push_back(x);
      points.push_back(y);
      labels.push_back(c);
    }
  }
  const std::size_t n = labels.size();
  return LabeledDataset(Tensor({n, 2}, std::move(points)), std::move(labels), 2);
}

void AugmentPolicy::validate() const {
  if (!(hflip_prob >= 0.0 && hflip_prob <= 1.0)) throw Error("augment: hflip_prob must be in [0, 1]");
  for (double s : normalize_std) {
    if (!(s > 0.0)) throw Error("augment: normalization std must be strictly positive");
  }
  if (!normalize_std.empty() && !normalize_mean.empty() && normalize_std.size() != normalize_mean.size()) {
    throw Error("augment: mean and std have different channel counts");
  }
}

AugmentPolicy AugmentPolicy::eval_only() const {
  AugmentPolicy p;
  p.normalize_mean = normalize_mean;
  p.normalize_std = normalize_std;
  return p;
}

void compute_normalization(const LabeledDataset& ds, std::vector<double>& mean, std::vector<double>& stdev) {
  const Shape s = ds.sample_shape();
  const std::size_t channels = s[0];
  const std::size_t per_channel = shape_size(s) / channels;
  const double count = static_cast<double>(ds.size() * per_channel);
  mean.assign(channels, 0.0);
  stdev.assign(channels, 0.0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto x = ds.sample(i);
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t j = 0; j < per_channel; ++j) mean[c] += x[c * per_channel + j];
    }
  }
  for (auto& m : mean) m /= count;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto x = ds.sample(i);
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t j = 0; j < per_channel; ++j) {
        const double d = x[c * per_channel + j] - mean[c];
        stdev[c] += d * d;
      }
    }
  }
  for (auto& v : stdev) {
    v = std::sqrt(v / count);
    if (v == 0.0) v = 1.0;  // constant channel
  }
}

void augment_sample(std::span<const double> in, std::span<double> out, const Shape& shape,
                    const AugmentPolicy& policy, Rng& rng) {
  const std::size_t channels = shape.empty() ? 1 : shape[0];
  const std::size_t per_channel = in.size() / channels;
  const bool spatial = shape.size() == 3;

  if (spatial && ((policy.random_crop && policy.pad > 0) || policy.hflip_prob > 0.0)) {
    const std::size_t h = shape[1], w = shape[2];
    const auto pad = static_cast<std::ptrdiff_t>(policy.pad);
    std::ptrdiff_t oy = pad, ox = pad;
    if (policy.random_crop && policy.pad > 0) {
      std::uniform_int_distribution<std::ptrdiff_t> offset(0, 2 * pad);
      oy = offset(rng);
      ox = offset(rng);
    }
    bool flip = false;
    if (policy.hflip_prob >= 1.0) {
      flip = true;
    } else if (policy.hflip_prob > 0.0) {
      flip = uniform01(rng) < policy.hflip_prob;
    }
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t y = 0; y < h; ++y) {
        const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + oy - pad;
        for (std::size_t x = 0; x < w; ++x) {
          const std::size_t src_x = flip ? w - 1 - x : x;
          const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(src_x) + ox - pad;
          const bool inside = sy >= 0 && sy < static_cast<std::ptrdiff_t>(h) && sx >= 0 &&
                              sx < static_cast<std::ptrdiff_t>(w);
          out[(c * h + y) * w + x] = inside ? in[(c * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)] : 0.0;
        }
      }
    }
  } else {
    std::copy(in.begin(), in.end(), out.begin());
  }

  if (!policy.normalize_mean.empty() || !policy.normalize_std.empty()) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double m = policy.normalize_mean.empty() ? 0.0 : policy.normalize_mean.at(c);
      const double s = policy.normalize_std.empty() ? 1.0 : policy.normalize_std.at(c);
      for (std::size_t j = 0; j < per_channel; ++j) out[c * per_channel + j] = (out[c * per_channel + j] - m) / s;
    }
  }
}

Tensor augment(const Tensor& batch, const AugmentPolicy& policy, Rng& rng) {
  policy.validate();
  if (batch.rank() < 2) throw ShapeError("augment: expected [N, ...] batch, got " + shape_to_string(batch.shape()));
  const Shape sample_shape(batch.shape().begin() + 1, batch.shape().end());
  const std::size_t n = shape_size(sample_shape);
  Tensor out(batch.shape());
  for (std::size_t i = 0; i < batch.dim(0); ++i) {
    augment_sample(batch.data().subspan(i * n, n), out.data().subspan(i * n, n), sample_shape, policy, rng);
  }
  return out;
}

}  // namespace phantom
