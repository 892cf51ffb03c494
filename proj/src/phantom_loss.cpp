#include "phantom/phantom_loss.hpp"

#include "phantom/error.hpp"

namespace phantom {

std::string to_string(CombineSign sign) { return sign == CombineSign::plus ? "plus" : "minus"; }

CombineSign combine_sign_from_string(const std::string& name) {
  if (name == "plus") return CombineSign::plus;
  if (name == "minus") return CombineSign::minus;
  throw ConfigError("phantom.sign", "expected 'plus' or 'minus', got '" + name + "'");
}

void PhantomConfig::validate() const {
  if (k == 0) throw ConfigError("phantom.k", "must be >= 1");
  if (!(beta_a > 0.0)) throw ConfigError("phantom.beta_a", "must be > 0");
  if (!(beta_b > 0.0)) throw ConfigError("phantom.beta_b", "must be > 0");
  if (alpha_override && !(*alpha_override >= 0.0 && *alpha_override <= 1.0)) {
    throw ConfigError("phantom.alpha_override", "must be in [0, 1]");
  }
}

Var aggregate_embeddings(Tape& tape, Var member_embeddings, Aggregator aggregator) {
  switch (aggregator) {
    case Aggregator::mean: return ops::mean_members(tape, member_embeddings);
  }
  throw Error("unknown aggregator");
}

double sample_alpha(const PhantomConfig& config, Rng& rng) {
  if (config.alpha_override) return *config.alpha_override;
  const double x = std::gamma_distribution<double>(config.beta_a, 1.0)(rng);
  const double y = std::gamma_distribution<double>(config.beta_b, 1.0)(rng);
  // Both draws underflowing to zero is possible for tiny shape parameters.
  if (x + y == 0.0) return config.beta_a >= config.beta_b ? 1.0 : 0.0;
  return x / (x + y);
}

namespace {

std::size_t members_of(Tape& tape, Var member_embeddings) {
  const Tensor& e = tape.value(member_embeddings);
  if (e.rank() != 3) throw ShapeError("phantom loss expects [B, K, D] embeddings, got " + shape_to_string(e.shape()));
  return e.dim(1);
}

}  // namespace

PhantomLossOutput phantom_loss(Tape& tape, Var member_embeddings, std::span<const Label> labels,
                               const Predictor& predictor, const PhantomConfig& config, Rng& rng) {
  if (config.k == 0) throw ConfigError("phantom.k", "must be >= 1");
  if (members_of(tape, member_embeddings) != config.k) {
    throw ShapeError("embeddings carry " + std::to_string(members_of(tape, member_embeddings)) +
                     " members, config expects k=" + std::to_string(config.k));
  }
  const double alpha = sample_alpha(config, rng);

  Var main_emb = ops::select_member(tape, member_embeddings, 0);
  Var main_loss = ops::softmax_cross_entropy(tape, predictor(main_emb), labels);
  Var phantom_emb = aggregate_embeddings(tape, member_embeddings, config.aggregator);
  Var phantom_term = ops::softmax_cross_entropy(tape, predictor(phantom_emb), labels);

  const double phantom_weight = config.sign == CombineSign::plus ? 1.0 - alpha : -(1.0 - alpha);
  Var total = ops::add(tape, ops::scale(tape, main_loss, alpha), ops::scale(tape, phantom_term, phantom_weight));
  return {total, tape.value(main_loss).item(), tape.value(phantom_term).item(), alpha};
}

PhantomLossOutput naive_phantom_loss(Tape& tape, Var member_embeddings, std::span<const Label> labels,
                                     const Predictor& predictor, const PhantomConfig& config) {
  members_of(tape, member_embeddings);
  Var phantom_emb = aggregate_embeddings(tape, member_embeddings, config.aggregator);
  Var loss = ops::softmax_cross_entropy(tape, predictor(phantom_emb), labels);
  const double value = tape.value(loss).item();
  return {loss, 0.0, value, 0.0};
}

}  // namespace phantom
