#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>

#include "phantom/datasets.hpp"
#include "phantom/rng.hpp"
#include "phantom/tape.hpp"

namespace phantom {

/// How the main-instance and phantom losses are combined.
enum class CombineSign { plus, minus };
enum class Aggregator { mean };

std::string to_string(CombineSign sign);
CombineSign combine_sign_from_string(const std::string& name);

struct PhantomConfig {
  std::size_t k = 2;  // cluster size including the main instance
  double beta_a = 1.0;
  double beta_b = 1.0;
  CombineSign sign = CombineSign::plus;
  std::optional<double> alpha_override;
  Aggregator aggregator = Aggregator::mean;

  void validate() const;
};

struct PhantomLossOutput {
  Var total;
  double main_term = 0.0;
  double phantom_term = 0.0;
  double alpha = 0.0;
};

/// Maps a [B, D] embedding to [B, L] logits on the same tape.
using Predictor = std::function<Var(Var embedding)>;

/// [B, K, D] member embeddings -> [B, D] phantom embeddings.
Var aggregate_embeddings(Tape& tape, Var member_embeddings, Aggregator aggregator = Aggregator::mean);

/// One Beta(beta_a, beta_b) draw via the ratio of two Gamma variates, or the
/// override when set.
double sample_alpha(const PhantomConfig& config, Rng& rng);

/// alpha * CE(psi(main)) +/- (1 - alpha) * CE(psi(phantom)); one alpha per call.
PhantomLossOutput phantom_loss(Tape& tape, Var member_embeddings, std::span<const Label> labels,
                               const Predictor& predictor, const PhantomConfig& config, Rng& rng);

/// CE(psi(phantom)) alone: the phantom embedding replaces the instance.
PhantomLossOutput naive_phantom_loss(Tape& tape, Var member_embeddings, std::span<const Label> labels,
                                     const Predictor& predictor, const PhantomConfig& config);

}  // namespace phantom
