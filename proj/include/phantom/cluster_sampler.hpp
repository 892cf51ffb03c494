#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "phantom/datasets.hpp"
#include "phantom/rng.hpp"
#include "phantom/tensor.hpp"

namespace phantom {

/// K same-class instances; member 0 is the main instance.
struct MicroCluster {
  std::vector<std::size_t> members;
  Label label = 0;
};

struct MicroClusterBatch {
  std::vector<MicroCluster> clusters;
  Tensor images;  // [B, K, sample dims...]
  std::vector<Label> labels;
};

/// Sum over classes of C(N_l, k). Throws OverflowError naming the class whose
/// term (or running sum) leaves the 64-bit range.
std::uint64_t count_clusters(const LabeledDataset& ds, std::size_t k);

/// Per-epoch micro-cluster sampler.
///
/// Every instance is the main member of exactly one cluster per epoch, in a
/// seeded random order. The remaining k-1 members are drawn uniformly without
/// replacement from the main instance's class, excluding the main instance
/// itself. Classes with fewer than k members fall back to drawing with
/// replacement (with a one-time warning on stderr).
class EpochSampler {
 public:
  EpochSampler(const LabeledDataset& ds, std::size_t k, std::size_t batch_size, Rng rng);

  /// Shuffles the main-instance order for a new epoch.
  void begin_epoch();
  /// Next batch of clusters, or nullopt once the epoch is exhausted. The
  /// last batch may be short.
  std::optional<std::vector<MicroCluster>> next();

  std::size_t k() const noexcept { return k_; }
  std::size_t batches_per_epoch() const noexcept { return (order_.size() + batch_size_ - 1) / batch_size_; }

 private:
  MicroCluster make_cluster(std::size_t main);

  const LabeledDataset* ds_;
  std::size_t k_;
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> position_in_class_;
  std::size_t cursor_ = 0;
};

/// All cluster batches for one epoch.
std::vector<std::vector<MicroCluster>> sample_epoch_batches(const LabeledDataset& ds, std::size_t k,
                                                            std::size_t batch_size, Rng& rng);

/// Copies cluster members into a [B, K, ...] tensor, augmenting each member
/// with its own draw from `rng`.
MicroClusterBatch materialize(const LabeledDataset& ds, std::vector<MicroCluster> clusters,
                              const AugmentPolicy& policy, Rng& rng);

}  // namespace phantom
