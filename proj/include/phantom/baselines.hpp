#pragma once

#include <span>
#include <vector>

#include "phantom/datasets.hpp"
#include "phantom/rng.hpp"
#include "phantom/tape.hpp"

namespace phantom {

/// Inverted dropout applied at the embedding boundary.
struct DropoutSpec {
  double rate = 0.5;
  void validate() const;
};

/// Label disturbance: each label is replaced, with probability flip_prob, by
/// one of the other num_classes - 1 classes.
struct DisturbSpec {
  double flip_prob = 0.1;
  std::size_t num_classes = 0;
  void validate() const;
};

/// Inverted dropout on a plain tensor (no tape).
Tensor dropout_forward(const Tensor& input, double rate, bool training, Rng& rng);

/// Tape-recorded dropout; see ops::dropout.
Var dropout_forward(Tape& tape, Var input, double rate, bool training, Rng& rng);

std::vector<Label> disturb_labels(std::span<const Label> labels, const DisturbSpec& spec, Rng& rng);

}  // namespace phantom
