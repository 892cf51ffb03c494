#include "config.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "phantom/error.hpp"

namespace phantom::cli {

namespace fs = std::filesystem;

void CliConfig::validate() const {
  static const char* kinds[] = {"fashion", "cifar10", "two-moons", "blobs"};
  if (std::find(std::begin(kinds), std::end(kinds), data_kind) == std::end(kinds)) {
    throw ConfigError("data.kind", "expected fashion, cifar10, two-moons or blobs, got '" + data_kind + "'");
  }
  if (preset != "mlp2" && preset != "smallcnn") throw ConfigError("model.preset", "expected mlp2 or smallcnn");
  if (!image_data() && preset == "smallcnn") throw ConfigError("model.preset", "smallcnn needs image data");
  if (n_per_class == 0) throw ConfigError("data.n_per_class", "must be >= 1");
  if (!(noise >= 0.0)) throw ConfigError("data.noise", "must be >= 0");
  if (out_dir.empty()) throw ConfigError("--out", "output directory must be set");
  train.validate();
}

AugmentPolicy default_augment(const std::string& data_kind) {
  AugmentPolicy p;
  if (data_kind == "fashion" || data_kind == "cifar10") {
    p.pad = 4;
    p.random_crop = true;
    p.hflip_prob = 0.5;
  }
  return p;
}

void resolve(CliConfig& cfg) {
  if (!cfg.augment_explicit) {
    cfg.train.augment = default_augment(cfg.data_kind);
    cfg.augment_explicit = true;
  }
}

namespace {

template <typename T>
T get_as(const nlohmann::json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(key, "wrong value type: " + v.dump());
  }
}

template <typename T>
std::optional<T> opt_as(const nlohmann::json& v, const std::string& key) {
  if (v.is_null()) return std::nullopt;
  return get_as<T>(v, key);
}

}  // namespace

void apply_json(CliConfig& cfg, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("", "config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    TrainConfig& t = cfg.train;
    if (key == "method") t.method = method_from_string(get_as<std::string>(v, key));
    else if (key == "model.preset") cfg.preset = get_as<std::string>(v, key);
    else if (key == "data.kind") cfg.data_kind = get_as<std::string>(v, key);
    else if (key == "data.dir") cfg.data_dir = get_as<std::string>(v, key);
    else if (key == "data.n_per_class") cfg.n_per_class = get_as<std::size_t>(v, key);
    else if (key == "data.test_n_per_class") cfg.test_n_per_class = opt_as<std::size_t>(v, key);
    else if (key == "data.noise") cfg.noise = get_as<double>(v, key);
    else if (key == "data.train_subset") cfg.train_subset = opt_as<std::size_t>(v, key);
    else if (key == "data.test_subset") cfg.test_subset = opt_as<std::size_t>(v, key);
    else if (key == "out") cfg.out_dir = get_as<std::string>(v, key);
    else if (key == "train.seed") t.seed = get_as<std::uint64_t>(v, key);
    else if (key == "train.lr0") t.lr0 = get_as<double>(v, key);
    else if (key == "train.lr_decay_iters") t.lr_decay_iters = get_as<std::vector<std::int64_t>>(v, key);
    else if (key == "train.lr_decay_factor") t.lr_decay_factor = get_as<double>(v, key);
    else if (key == "train.weight_decay") t.weight_decay = get_as<double>(v, key);
    else if (key == "train.momentum") t.momentum = get_as<double>(v, key);
    else if (key == "train.batch_size") t.batch_size = get_as<std::size_t>(v, key);
    else if (key == "train.epochs") t.max_epochs = opt_as<std::size_t>(v, key);
    else if (key == "train.iters") t.max_iters = opt_as<std::int64_t>(v, key);
    else if (key == "train.eval_every") t.eval_every = get_as<std::size_t>(v, key);
    else if (key == "train.log_wall_clock") t.log_wall_clock = get_as<bool>(v, key);
    else if (key == "augment.pad") { t.augment.pad = get_as<std::size_t>(v, key); cfg.augment_explicit = true; }
    else if (key == "augment.crop") { t.augment.random_crop = get_as<bool>(v, key); cfg.augment_explicit = true; }
    else if (key == "augment.hflip_prob") { t.augment.hflip_prob = get_as<double>(v, key); cfg.augment_explicit = true; }
    else if (key == "augment.normalize") t.normalize = get_as<bool>(v, key);
    else if (key == "phantom.k") t.phantom.k = get_as<std::size_t>(v, key);
    else if (key == "phantom.beta_a") t.phantom.beta_a = get_as<double>(v, key);
    else if (key == "phantom.beta_b") t.phantom.beta_b = get_as<double>(v, key);
    else if (key == "phantom.sign") t.phantom.sign = combine_sign_from_string(get_as<std::string>(v, key));
    else if (key == "phantom.alpha_override")
      t.phantom.alpha_override = opt_as<double>(v, key);
    else if (key == "baseline.method") {
      const auto m = get_as<std::string>(v, key);
      if (m == "dropout") t.method = Method::dropout;
      else if (m == "disturb") t.method = Method::disturb;
      else if (m != "none") throw ConfigError(key, "expected none, dropout or disturb");
    } else if (key == "baseline.rate")
      t.baseline_rate = opt_as<double>(v, key);
    else throw ConfigError(key, "unknown config key");
  }
}

CliConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("--config", std::string("invalid JSON: ") + e.what());
  }
  CliConfig cfg;
  apply_json(cfg, j);
  return cfg;
}

nlohmann::json to_json(const CliConfig& c) {
  const TrainConfig& t = c.train;
  auto opt = [](const auto& o) { return o ? nlohmann::json(*o) : nlohmann::json(nullptr); };
  return {{"method", to_string(t.method)},
          {"model.preset", c.preset},
          {"data.kind", c.data_kind},
          {"data.dir", c.data_dir},
          {"data.n_per_class", c.n_per_class},
          {"data.test_n_per_class", opt(c.test_n_per_class)},
          {"data.noise", c.noise},
          {"data.train_subset", opt(c.train_subset)},
          {"data.test_subset", opt(c.test_subset)},
          {"out", c.out_dir},
          {"train.seed", t.seed},
          {"train.lr0", t.lr0},
          {"train.lr_decay_iters", t.lr_decay_iters},
          {"train.lr_decay_factor", t.lr_decay_factor},
          {"train.weight_decay", t.weight_decay},
          {"train.momentum", t.momentum},
          {"train.batch_size", t.batch_size},
          {"train.epochs", opt(t.max_epochs)},
          {"train.iters", opt(t.max_iters)},
          {"train.eval_every", t.eval_every},
          {"train.log_wall_clock", t.log_wall_clock},
          {"augment.pad", t.augment.pad},
          {"augment.crop", t.augment.random_crop},
          {"augment.hflip_prob", t.augment.hflip_prob},
          {"augment.normalize", t.normalize},
          {"phantom.k", t.phantom.k},
          {"phantom.beta_a", t.phantom.beta_a},
          {"phantom.beta_b", t.phantom.beta_b},
          {"phantom.sign", to_string(t.phantom.sign)},
          {"phantom.alpha_override", opt(t.phantom.alpha_override)},
          {"baseline.rate", opt(t.baseline_rate)}};
}

namespace {

fs::path resolve_data_dir(const CliConfig& cfg) {
  std::string dir = cfg.data_dir;
  if (dir.empty()) {
    if (const char* env = std::getenv("PHANTOM_DATA_DIR")) dir = env;
  }
  if (dir.empty()) throw ConfigError("--data-dir", "data kind '" + cfg.data_kind + "' needs --data-dir or PHANTOM_DATA_DIR");
  if (!fs::is_directory(dir)) throw ConfigError("--data-dir", "'" + dir + "' is not a directory");
  return dir;
}

fs::path require_file(const fs::path& dir, const std::string& name) {
  for (const fs::path& p : {dir / name, dir / "cifar-10-batches-bin" / name}) {
    if (fs::is_regular_file(p)) return p;
  }
  throw ConfigError("--data-dir", "'" + (dir / name).string() + "' not found");
}

LabeledDataset take_subset(const LabeledDataset& ds, std::optional<std::size_t> n, std::uint64_t seed) {
  if (!n || *n >= ds.size()) return ds;
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = make_rng(seed, streams::data);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(*n);
  std::sort(idx.begin(), idx.end());
  return ds.subset(idx);
}

}  // namespace

DataPair load_data(const CliConfig& cfg) {
  DataPair pair;
  if (cfg.data_kind == "two-moons" || cfg.data_kind == "blobs") {
    const auto kind = synthetic_kind_from_string(cfg.data_kind);
    pair.train = make_synthetic_2d(kind, cfg.n_per_class, cfg.noise, cfg.train.seed);
    pair.test = make_synthetic_2d(kind, cfg.test_n_per_class.value_or(cfg.n_per_class), cfg.noise,
                                  cfg.train.seed + 1000003);
    return pair;
  }
  const fs::path dir = resolve_data_dir(cfg);
  if (cfg.data_kind == "fashion") {
    pair.train = load_idx(require_file(dir, "train-images-idx3-ubyte"), require_file(dir, "train-labels-idx1-ubyte"), 10);
    pair.test = load_idx(require_file(dir, "t10k-images-idx3-ubyte"), require_file(dir, "t10k-labels-idx1-ubyte"), 10);
  } else {
    std::vector<fs::path> train_files;
    for (int i = 1; i <= 5; ++i) train_files.push_back(require_file(dir, "data_batch_" + std::to_string(i) + ".bin"));
    const fs::path test_file = require_file(dir, "test_batch.bin");
    pair.train = load_cifar10(train_files);
    pair.test = load_cifar10(std::span(&test_file, 1));
  }
  pair.train = take_subset(pair.train, cfg.train_subset, cfg.train.seed);
  pair.test = take_subset(pair.test, cfg.test_subset, cfg.train.seed + 1);
  return pair;
}

}  // namespace phantom::cli
