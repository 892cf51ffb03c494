#include "phantom/cluster_sampler.hpp"

#include <algorithm>
#include <iostream>
#include <limits>
#include <numeric>

#include "phantom/error.hpp"

namespace phantom {

std::uint64_t count_clusters(const LabeledDataset& ds, std::size_t k) {
  if (k == 0) throw Error("count_clusters: k must be >= 1");
  constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t total = 0;
  for (Label l = 0; l < ds.num_classes(); ++l) {
    const std::uint64_t n = ds.class_members(l).size();
    if (n < k) continue;
    const std::uint64_t r = std::min<std::uint64_t>(k, n - k);
    // C(n, i+1) = C(n, i) * (n - i) / (i + 1), exact at every step.
    unsigned __int128 c = 1;
    for (std::uint64_t i = 0; i < r; ++i) {
      c = c * (n - i) / (i + 1);
      if (c > kMax) throw OverflowError(l, "cluster count for class " + std::to_string(l) + " overflows 64 bits");
    }
    const auto term = static_cast<std::uint64_t>(c);
    if (total > kMax - term) {
      throw OverflowError(l, "cluster count overflows 64 bits when adding class " + std::to_string(l));
    }
    total += term;
  }
  return total;
}

EpochSampler::EpochSampler(const LabeledDataset& ds, std::size_t k, std::size_t batch_size, Rng rng)
    : ds_(&ds), k_(k), batch_size_(batch_size), rng_(std::move(rng)) {
  if (k == 0) throw Error("sampler: k must be >= 1");
  if (batch_size == 0) throw Error("sampler: batch_size must be >= 1");
  if (ds.size() == 0) throw Error("sampler: dataset is empty");
  position_in_class_.resize(ds.size());
  for (Label l = 0; l < ds.num_classes(); ++l) {
    const auto& members = ds.class_members(l);
    for (std::size_t p = 0; p < members.size(); ++p) position_in_class_[members[p]] = p;
    if (!members.empty() && members.size() < k) {
      std::cerr << "warning: class " << l << " has " << members.size() << " instances, fewer than k=" << k
                << "; partners are drawn with replacement\n";
    }
  }
  order_.resize(ds.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  cursor_ = order_.size();
}

void EpochSampler::begin_epoch() {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

MicroCluster EpochSampler::make_cluster(std::size_t main) {
  const Label label = ds_->labels()[main];
  const auto& pool = ds_->class_members(label);
  MicroCluster c;
  c.label = label;
  c.members.reserve(k_);
  c.members.push_back(main);
  if (k_ == 1) return c;

  const std::size_t n = pool.size();
  const std::size_t main_pos = position_in_class_[main];
  if (n == 1) {
    c.members.resize(k_, main);
    return c;
  }
  // Index into the pool with the main instance removed.
  std::uniform_int_distribution<std::size_t> pick(0, n - 2);
  auto draw = [&] {
    const std::size_t j = pick(rng_);
    return pool[j < main_pos ? j : j + 1];
  };
  if (n < k_) {
    while (c.members.size() < k_) c.members.push_back(draw());
    return c;
  }
  while (c.members.size() < k_) {
    const std::size_t candidate = draw();
    if (std::find(c.members.begin() + 1, c.members.end(), candidate) == c.members.end()) {
      c.members.push_back(candidate);
    }
  }
  return c;
}

std::optional<std::vector<MicroCluster>> EpochSampler::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
  std::vector<MicroCluster> batch;
  batch.reserve(end - cursor_);
  for (; cursor_ < end; ++cursor_) batch.push_back(make_cluster(order_[cursor_]));
  return batch;
}

std::vector<std::vector<MicroCluster>> sample_epoch_batches(const LabeledDataset& ds, std::size_t k,
                                                            std::size_t batch_size, Rng& rng) {
  EpochSampler sampler(ds, k, batch_size, rng);
  sampler.begin_epoch();
  std::vector<std::vector<MicroCluster>> batches;
  while (auto b = sampler.next()) batches.push_back(std::move(*b));
  return batches;
}

MicroClusterBatch materialize(const LabeledDataset& ds, std::vector<MicroCluster> clusters,
                              const AugmentPolicy& policy, Rng& rng) {
  if (clusters.empty()) throw Error("materialize: empty cluster list");
  const std::size_t k = clusters.front().members.size();
  const Shape sample_shape = ds.sample_shape();
  const std::size_t n = shape_size(sample_shape);
  Shape shape{clusters.size(), k};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  MicroClusterBatch batch;
  batch.images = Tensor(shape);
  auto out = batch.images.data();
  std::size_t slot = 0;
  for (const auto& c : clusters) {
    if (c.members.size() != k) throw Error("materialize: clusters have different sizes");
    for (auto idx : c.members) {
      augment_sample(ds.sample(idx), out.subspan(slot * n, n), sample_shape, policy, rng);
      ++slot;
    }
    batch.labels.push_back(c.label);
  }
  batch.clusters = std::move(clusters);
  return batch;
}

}  // namespace phantom
