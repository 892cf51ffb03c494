#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "phantom/checkpoint.hpp"
#include "phantom/datasets.hpp"
#include "phantom/model.hpp"
#include "phantom/phantom_loss.hpp"

namespace phantom {

enum class Method { erm, phantom, naive_phantom, dropout, disturb };

std::string to_string(Method method);
Method method_from_string(const std::string& name);

/// One optimizer step as seen by TrainConfig::on_step.
struct StepLog {
  std::int64_t iteration = 0;  // 0-based
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  std::optional<double> main_loss;
  std::optional<double> phantom_loss;
  std::optional<double> alpha;
  const ParameterMap* parameters = nullptr;  // after the update
};

struct TrainConfig {
  Method method = Method::erm;
  double lr0 = 0.1;
  std::vector<std::int64_t> lr_decay_iters{32000, 48000};
  double lr_decay_factor = 0.1;
  double weight_decay = 0.0005;
  double momentum = 0.0;
  std::size_t batch_size = 128;
  std::optional<std::int64_t> max_iters;  // defaults to 64000 when neither limit is set
  std::optional<std::size_t> max_epochs;
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;  // epochs between test evaluations
  PhantomConfig phantom;
  std::optional<double> baseline_rate;  // dropout rate or flip probability
  AugmentPolicy augment;                // geometric part; normalization is filled from the train split
  bool normalize = true;
  bool log_wall_clock = false;
  std::function<void(const StepLog&)> on_step;

  void validate() const;
  /// Effective k: phantom.k for phantom methods, 1 otherwise.
  std::size_t cluster_size() const;
  double dropout_rate() const { return baseline_rate.value_or(0.5); }
  double flip_prob() const { return baseline_rate.value_or(0.1); }
};

struct RunRecord {
  std::size_t epoch = 0;
  std::int64_t iteration = 0;
  double train_loss = 0.0;
  std::optional<double> main_loss;
  std::optional<double> phantom_loss;
  double test_loss = 0.0;
  double test_accuracy = 0.0;
  double lr = 0.0;
  std::optional<double> alpha_mean;
  double wall_seconds = 0.0;
};

struct RunSummary {
  double final_accuracy = 0.0;
  double mean5_accuracy = 0.0;
  double max5_accuracy = 0.0;
  double final_test_loss = 0.0;
  std::int64_t iterations = 0;
  std::size_t epochs = 0;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<RunRecord> records;
  RunSummary summary;
};

/// w <- w - lr * (g + weight_decay * w)
void sgd_step(ParameterMap& params, const GradientMap& grads, double lr, double weight_decay);

/// SGD with optional heavy-ball momentum; momentum 0 is exactly sgd_step.
class SgdOptimizer {
 public:
  SgdOptimizer(double weight_decay, double momentum) : weight_decay_(weight_decay), momentum_(momentum) {}
  void step(ParameterMap& params, const GradientMap& grads, double lr);

 private:
  double weight_decay_;
  double momentum_;
  ParameterMap velocity_;
};

/// lr0 * factor^(number of decay points <= iteration)
double lr_at(std::int64_t iteration, const TrainConfig& config);

/// Mean and max of the last (up to) five epoch accuracies plus the final one.
RunSummary summarize(const std::vector<RunRecord>& records);

EvalResult evaluate(const Model& model, const LabeledDataset& data, const AugmentPolicy& policy,
                    std::size_t batch_size = 256);
/// Uses the normalization stored in the checkpoint metadata.
EvalResult evaluate(const Checkpoint& ckpt, const LabeledDataset& data);

AugmentPolicy normalization_from(const nlohmann::json& metadata);

TrainResult run_training(const ModelSpec& spec, const LabeledDataset& train, const LabeledDataset& test,
                         const TrainConfig& config);

// Output files.
std::string metrics_csv(const std::vector<RunRecord>& records, bool include_wall_clock);
nlohmann::json summary_json(const RunSummary& summary);
/// Writes metrics.csv, summary.json and model.ckpt into `dir`.
void write_run_outputs(const std::filesystem::path& dir, const TrainResult& result, bool include_wall_clock);

}  // namespace phantom
