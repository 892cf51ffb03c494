#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "phantom/rng.hpp"
#include "phantom/tensor.hpp"

namespace phantom {

using Label = std::size_t;

/// Images (or feature vectors) with class labels and a per-class index.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  /// images: [N, sample dims...]; every label must be < num_classes.
  LabeledDataset(Tensor images, std::vector<Label> labels, std::size_t num_classes);

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t num_classes() const noexcept { return class_index_.size(); }
  const Tensor& images() const noexcept { return images_; }
  const std::vector<Label>& labels() const noexcept { return labels_; }
  /// Instance indices of class l, ascending.
  const std::vector<std::size_t>& class_members(Label l) const { return class_index_.at(l); }
  const std::vector<std::vector<std::size_t>>& class_index() const noexcept { return class_index_; }

  Shape sample_shape() const;
  std::size_t sample_size() const;
  std::span<const double> sample(std::size_t i) const;

  LabeledDataset subset(std::span<const std::size_t> indices) const;

 private:
  Tensor images_;
  std::vector<Label> labels_;
  std::vector<std::vector<std::size_t>> class_index_;
};

// IDX (MNIST / FashionMNIST) files. num_classes == 0 infers max label + 1.
LabeledDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                        std::size_t num_classes = 0);
/// Pixels are written as round(255 * v); values must lie in [0, 1].
void write_idx(const LabeledDataset& ds, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path);

// CIFAR-10 binary batches: 3073-byte records (label + planar 3x32x32).
LabeledDataset load_cifar10(std::span<const std::filesystem::path> batch_files);
void write_cifar10(const LabeledDataset& ds, const std::filesystem::path& path);

enum class SyntheticKind { two_moons, gaussian_blobs };

SyntheticKind synthetic_kind_from_string(const std::string& name);

/// Two-class, two-feature data. Samples are shaped [N, 2].
/// two_moons: class 0 on the upper unit semicircle, class 1 on the shifted
/// lower one. gaussian_blobs: class 0 around (-2, 0), class 1 around (2, 0).
LabeledDataset make_synthetic_2d(SyntheticKind kind, std::size_t n_per_class, double noise_std,
                                 std::uint64_t seed);

struct AugmentPolicy {
  std::size_t pad = 0;
  bool random_crop = false;
  double hflip_prob = 0.0;
  std::vector<double> normalize_mean;  // per channel; empty means no shift
  std::vector<double> normalize_std;   // per channel; empty means no scaling

  void validate() const;
  /// Same normalization, no geometric augmentation.
  AugmentPolicy eval_only() const;
};

/// Per-channel mean and population std over the whole dataset. The channel
/// axis is the first sample axis.
void compute_normalization(const LabeledDataset& ds, std::vector<double>& mean, std::vector<double>& std);

/// Augments one sample: random crop from the zero-padded canvas, horizontal
/// flip, then per-channel normalization. Crop and flip apply to [ch, h, w]
/// samples only.
void augment_sample(std::span<const double> in, std::span<double> out, const Shape& sample_shape,
                    const AugmentPolicy& policy, Rng& rng);

/// Augments a [N, sample...] batch image by image.
Tensor augment(const Tensor& batch, const AugmentPolicy& policy, Rng& rng);

}  // namespace phantom
