#include "phantom/baselines.hpp"

#include "phantom/error.hpp"

namespace phantom {

void DropoutSpec::validate() const {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("baseline.rate", "dropout rate must be in [0, 1)");
}

void DisturbSpec::validate() const {
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("baseline.rate", "flip probability must be in [0, 1]");
  if (num_classes < 2) throw ConfigError("baseline.rate", "label disturbance needs at least 2 classes");
}

Tensor dropout_forward(const Tensor& input, double rate, bool training, Rng& rng) {
  Tape tape;
  Var out = ops::dropout(tape, tape.constant(input), rate, training, rng);
  return tape.value(out);
}

Var dropout_forward(Tape& tape, Var input, double rate, bool training, Rng& rng) {
  return ops::dropout(tape, input, rate, training, rng);
}

std::vector<Label> disturb_labels(std::span<const Label> labels, const DisturbSpec& spec, Rng& rng) {
  spec.validate();
  std::vector<Label> out(labels.begin(), labels.end());
  if (spec.flip_prob == 0.0) return out;
  std::bernoulli_distribution fire(spec.flip_prob);
  std::uniform_int_distribution<std::size_t> other(0, spec.num_classes - 2);
  for (auto& l : out) {
    if (l >= spec.num_classes) throw Error("disturb_labels: label " + std::to_string(l) + " out of range");
    if (fire(rng)) {
      const std::size_t r = other(rng);
      l = r < l ? r : r + 1;
    }
  }
  return out;
}

}  // namespace phantom
