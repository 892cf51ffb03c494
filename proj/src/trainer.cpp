#include "phantom/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "phantom/baselines.hpp"
#include "phantom/cluster_sampler.hpp"
#include "phantom/error.hpp"

namespace phantom {

std::string to_string(Method method) {
  switch (method) {
    case Method::erm: return "erm";
    case Method::phantom: return "phantom";
    case Method::naive_phantom: return "naive_phantom";
    case Method::dropout: return "dropout";
    case Method::disturb: return "disturb";
  }
  return "unknown";
}

Method method_from_string(const std::string& name) {
  for (auto m : {Method::erm, Method::phantom, Method::naive_phantom, Method::dropout, Method::disturb}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("method", "unknown method '" + name + "' (expected erm, phantom, naive_phantom, dropout, disturb)");
}

void TrainConfig::validate() const {
  if (!(lr0 > 0.0)) throw ConfigError("train.lr0", "must be > 0");
  for (std::size_t i = 0; i < lr_decay_iters.size(); ++i) {
    if (lr_decay_iters[i] < 0 || (i > 0 && lr_decay_iters[i] <= lr_decay_iters[i - 1])) {
      throw ConfigError("train.lr_decay_iters", "must be non-negative and strictly increasing");
    }
  }
  if (!(lr_decay_factor > 0.0)) throw ConfigError("train.lr_decay_factor", "must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay", "must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train.momentum", "must be in [0, 1)");
  if (batch_size == 0) throw ConfigError("train.batch_size", "must be >= 1");
  if (max_iters && *max_iters <= 0) throw ConfigError("train.iters", "must be >= 1");
  if (max_epochs && *max_epochs == 0) throw ConfigError("train.epochs", "must be >= 1");
  if (eval_every == 0) throw ConfigError("train.eval_every", "must be >= 1");
  phantom.validate();
  if (method == Method::dropout) DropoutSpec{dropout_rate()}.validate();
  if (method == Method::disturb && !(flip_prob() >= 0.0 && flip_prob() <= 1.0)) {
    throw ConfigError("baseline.rate", "flip probability must be in [0, 1]");
  }
  try {
    augment.validate();
  } catch (const Error& e) {
    throw ConfigError("augment", e.what());
  }
}

std::size_t TrainConfig::cluster_size() const {
  return method == Method::phantom || method == Method::naive_phantom ? phantom.k : 1;
}

void sgd_step(ParameterMap& params, const GradientMap& grads, double lr, double weight_decay) {
  for (auto& [name, w] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) throw ShapeError("sgd_step: no gradient for '" + name + "'");
    const Tensor& g = it->second;
    if (g.shape() != w.shape()) {
      throw ShapeError("sgd_step: gradient for '" + name + "' has shape " + shape_to_string(g.shape()) +
                       ", parameter has " + shape_to_string(w.shape()));
    }
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * (g[i] + weight_decay * w[i]);
  }
}

void SgdOptimizer::step(ParameterMap& params, const GradientMap& grads, double lr) {
  if (momentum_ == 0.0) {
    sgd_step(params, grads, lr, weight_decay_);
    return;
  }
  for (auto& [name, w] : params) {
    auto it = grads.find(name);
    if (it == grads.end() || it->second.shape() != w.shape()) {
      throw ShapeError("sgd: missing or mis-shaped gradient for '" + name + "'");
    }
    auto [vit, inserted] = velocity_.try_emplace(name, Tensor(w.shape(), 0.0));
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = momentum_ * v[i] + it->second[i] + weight_decay_ * w[i];
      w[i] -= lr * v[i];
    }
  }
}

double lr_at(std::int64_t iteration, const TrainConfig& config) {
  // Dividing by 10 hits 0.01 and 0.001 exactly; multiplying by 0.1 does not.
  const double inverse = 1.0 / config.lr_decay_factor;
  const bool integral = inverse == std::round(inverse);
  double lr = config.lr0;
  for (auto point : config.lr_decay_iters) {
    if (point <= iteration) lr = integral ? lr / inverse : lr * config.lr_decay_factor;
  }
  return lr;
}

RunSummary summarize(const std::vector<RunRecord>& records) {
  RunSummary s;
  if (records.empty()) return s;
  const auto& last = records.back();
  s.final_accuracy = last.test_accuracy;
  s.final_test_loss = last.test_loss;
  s.iterations = last.iteration;
  s.epochs = last.epoch;
  const std::size_t n = std::min<std::size_t>(5, records.size());
  double sum = 0.0, best = 0.0;
  for (std::size_t i = records.size() - n; i < records.size(); ++i) {
    sum += records[i].test_accuracy;
    best = std::max(best, records[i].test_accuracy);
  }
  s.mean5_accuracy = sum / static_cast<double>(n);
  s.max5_accuracy = best;
  return s;
}

EvalResult evaluate(const Model& model, const LabeledDataset& data, const AugmentPolicy& policy,
                    std::size_t batch_size) {
  if (data.sample_shape() != model.spec().input_shape) {
    throw ShapeError("dataset samples " + shape_to_string(data.sample_shape()) + " do not match model input " +
                     shape_to_string(model.spec().input_shape));
  }
  if (data.size() == 0) throw Error("evaluate: empty dataset");
  const AugmentPolicy eval_policy = policy.eval_only();
  Rng unused(0);
  const std::size_t n = data.sample_size();
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, data.size() - start);
    Shape shape{count};
    const Shape sample_shape = data.sample_shape();
    shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
    Tensor x(shape);
    std::vector<Label> labels(data.labels().begin() + static_cast<std::ptrdiff_t>(start),
                              data.labels().begin() + static_cast<std::ptrdiff_t>(start + count));
    for (std::size_t i = 0; i < count; ++i) {
      augment_sample(data.sample(start + i), x.data().subspan(i * n, n), sample_shape, eval_policy, unused);
    }
    Tape tape;
    const auto bound = model.bind(tape);
    const ForwardContext ctx{false, nullptr};
    Var logits = model.predict(tape, bound, model.embed(tape, bound, tape.constant(std::move(x)), ctx), ctx);
    Var loss = ops::softmax_cross_entropy(tape, logits, labels);
    loss_sum += tape.value(loss).item() * static_cast<double>(count);
    const Tensor& z = tape.value(logits);
    const std::size_t classes = z.dim(1);
    for (std::size_t i = 0; i < count; ++i) {
      const double* row = &z[i * classes];
      const auto pred = static_cast<std::size_t>(std::max_element(row, row + classes) - row);
      if (pred == labels[i]) ++correct;
    }
  }
  return {loss_sum / static_cast<double>(data.size()),
          static_cast<double>(correct) / static_cast<double>(data.size())};
}

AugmentPolicy normalization_from(const nlohmann::json& metadata) {
  AugmentPolicy p;
  if (metadata.contains("normalize_mean")) p.normalize_mean = metadata.at("normalize_mean").get<std::vector<double>>();
  if (metadata.contains("normalize_std")) p.normalize_std = metadata.at("normalize_std").get<std::vector<double>>();
  return p;
}

EvalResult evaluate(const Checkpoint& ckpt, const LabeledDataset& data) {
  return evaluate(ckpt.model, data, normalization_from(ckpt.metadata));
}

namespace {

struct StepOutcome {
  double total = 0.0;
  std::optional<double> main_term;
  std::optional<double> phantom_term;
  std::optional<double> alpha;
};

struct RunStreams {
  Rng augment, alpha, dropout, disturb;
};

StepOutcome train_step(Model& model, SgdOptimizer& opt, const MicroClusterBatch& batch, const TrainConfig& config,
                       std::size_t num_classes, double lr, RunStreams& rngs) {
  const std::size_t b = batch.labels.size();
  const std::size_t k = batch.images.dim(1);
  Shape flat{b * k};
  flat.insert(flat.end(), batch.images.shape().begin() + 2, batch.images.shape().end());

  std::vector<Label> labels = batch.labels;
  if (config.method == Method::disturb) {
    labels = disturb_labels(labels, DisturbSpec{config.flip_prob(), num_classes}, rngs.disturb);
  }

  Tape tape;
  const auto bound = model.bind(tape);
  const ForwardContext ctx{true, &rngs.dropout};
  Var emb = model.embed(tape, bound, tape.constant(batch.images.reshaped(flat)), ctx);
  auto predictor = [&](Var e) { return model.predict(tape, bound, e, ctx); };

  StepOutcome outcome;
  Var loss;
  switch (config.method) {
    case Method::erm:
    case Method::disturb:
      loss = ops::softmax_cross_entropy(tape, predictor(emb), labels);
      break;
    case Method::dropout:
      emb = dropout_forward(tape, emb, config.dropout_rate(), true, rngs.dropout);
      loss = ops::softmax_cross_entropy(tape, predictor(emb), labels);
      break;
    case Method::phantom: {
      const std::size_t d = tape.value(emb).dim(1);
      Var members = ops::reshape(tape, emb, {b, k, d});
      const auto out = phantom_loss(tape, members, labels, predictor, config.phantom, rngs.alpha);
      loss = out.total;
      outcome.main_term = out.main_term;
      outcome.phantom_term = out.phantom_term;
      outcome.alpha = out.alpha;
      break;
    }
    case Method::naive_phantom: {
      const std::size_t d = tape.value(emb).dim(1);
      Var members = ops::reshape(tape, emb, {b, k, d});
      const auto out = naive_phantom_loss(tape, members, labels, predictor, config.phantom);
      loss = out.total;
      outcome.phantom_term = out.phantom_term;
      break;
    }
  }
  outcome.total = tape.value(loss).item();
  const GradientMap grads = tape.backward(loss);
  if (std::isfinite(outcome.total) && std::abs(outcome.total) <= 1e6) opt.step(model.parameters(), grads, lr);
  return outcome;
}

}  // namespace

TrainResult run_training(const ModelSpec& spec, const LabeledDataset& train, const LabeledDataset& test,
                         const TrainConfig& config) {
  config.validate();
  spec.validate();
  if (train.num_classes() < 2) throw ConfigError("data", "training set needs at least 2 classes");
  if (train.sample_shape() != spec.input_shape) {
    throw ShapeError("training samples " + shape_to_string(train.sample_shape()) + " do not match model input " +
                     shape_to_string(spec.input_shape));
  }
  if (spec.num_classes != train.num_classes()) {
    throw ShapeError("model has " + std::to_string(spec.num_classes) + " outputs, dataset has " +
                     std::to_string(train.num_classes()) + " classes");
  }

  const auto started = std::chrono::steady_clock::now();
  Rng init_rng = make_rng(config.seed, streams::init);
  Model model = Model::initialize(spec, init_rng);
  SgdOptimizer opt(config.weight_decay, config.momentum);
  RunStreams rngs{make_rng(config.seed, streams::augment), make_rng(config.seed, streams::alpha),
                  make_rng(config.seed, streams::dropout), make_rng(config.seed, streams::disturb)};

  AugmentPolicy policy = config.augment;
  if (config.normalize) compute_normalization(train, policy.normalize_mean, policy.normalize_std);

  EpochSampler sampler(train, config.cluster_size(), config.batch_size, make_rng(config.seed, streams::sampler));
  const std::int64_t max_iters =
      config.max_iters.value_or(config.max_epochs ? std::numeric_limits<std::int64_t>::max() : 64000);
  const std::size_t max_epochs = config.max_epochs.value_or(std::numeric_limits<std::size_t>::max());

  TrainResult result;
  std::int64_t iteration = 0;
  for (std::size_t epoch = 1; epoch <= max_epochs && iteration < max_iters; ++epoch) {
    double loss_sum = 0.0, main_sum = 0.0, phantom_sum = 0.0, alpha_sum = 0.0;
    std::size_t steps = 0;
    double lr = lr_at(iteration, config);
    StepOutcome last;
    sampler.begin_epoch();
    while (iteration < max_iters) {
      auto clusters = sampler.next();
      if (!clusters) break;
      const MicroClusterBatch batch = materialize(train, std::move(*clusters), policy, rngs.augment);
      lr = lr_at(iteration, config);
      last = train_step(model, opt, batch, config, train.num_classes(), lr, rngs);
      if (config.on_step) {
        config.on_step({iteration, epoch, lr, last.total, last.main_term, last.phantom_term, last.alpha,
                        &model.parameters()});
      }
      if (!std::isfinite(last.total) || std::abs(last.total) > 1e6) throw DivergenceError(iteration, last.total);
      ++iteration;
      ++steps;
      loss_sum += last.total;
      main_sum += last.main_term.value_or(0.0);
      phantom_sum += last.phantom_term.value_or(0.0);
      alpha_sum += last.alpha.value_or(0.0);
    }
    if (steps == 0) break;
    const bool finished = iteration >= max_iters || epoch == max_epochs;
    if (epoch % config.eval_every != 0 && !finished) continue;

    RunRecord rec;
    rec.epoch = epoch;
    rec.iteration = iteration;
    const double n = static_cast<double>(steps);
    rec.train_loss = loss_sum / n;
    if (last.main_term) rec.main_loss = main_sum / n;
    if (last.phantom_term) rec.phantom_loss = phantom_sum / n;
    if (last.alpha) rec.alpha_mean = alpha_sum / n;
    const EvalResult ev = evaluate(model, test, policy);
    rec.test_loss = ev.loss;
    rec.test_accuracy = ev.accuracy;
    rec.lr = lr;
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.records.push_back(rec);
  }

  result.summary = summarize(result.records);
  nlohmann::json meta{{"method", to_string(config.method)},
                      {"seed", config.seed},
                      {"normalize_mean", policy.normalize_mean},
                      {"normalize_std", policy.normalize_std}};
  result.checkpoint = Checkpoint{std::move(model), std::move(meta)};
  return result;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

}  // namespace

std::string metrics_csv(const std::vector<RunRecord>& records, bool include_wall_clock) {
  std::string out = "epoch,iteration,train_loss,main_loss,phantom_loss,test_loss,test_acc,lr,alpha_mean,wall_seconds\n";
  for (const auto& r : records) {
    out += std::to_string(r.epoch) + ',' + std::to_string(r.iteration) + ',' + fmt(r.train_loss) + ',' +
           fmt(r.main_loss) + ',' + fmt(r.phantom_loss) + ',' + fmt(r.test_loss) + ',' + fmt(r.test_accuracy) + ',' +
           fmt(r.lr) + ',' + fmt(r.alpha_mean) + ',' + (include_wall_clock ? fmt(r.wall_seconds) : "") + '\n';
  }
  return out;
}

nlohmann::json summary_json(const RunSummary& s) {
  return {{"final_acc", s.final_accuracy}, {"mean5_acc", s.mean5_accuracy}, {"max5_acc", s.max5_accuracy},
          {"final_test_loss", s.final_test_loss}, {"iterations", s.iterations}, {"epochs", s.epochs}};
}

void write_run_outputs(const std::filesystem::path& dir, const TrainResult& result, bool include_wall_clock) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "metrics.csv", std::ios::binary);
    out << metrics_csv(result.records, include_wall_clock);
    if (!out) throw FormatError(FormatError::Kind::io, "cannot write " + (dir / "metrics.csv").string());
  }
  {
    std::ofstream out(dir / "summary.json", std::ios::binary);
    out << summary_json(result.summary).dump(2) << '\n';
    if (!out) throw FormatError(FormatError::Kind::io, "cannot write " + (dir / "summary.json").string());
  }
  save_checkpoint(dir / "model.ckpt", result.checkpoint);
}

}  // namespace phantom
