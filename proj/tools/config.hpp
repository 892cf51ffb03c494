#pragma once

#include <optional>
#include <string>

#include "phantom/datasets.hpp"
#include "phantom/trainer.hpp"

#include <json.hpp>

namespace phantom::cli {

/// Everything a run needs: training knobs, data source, model preset, output.
struct CliConfig {
  TrainConfig train;
  std::string data_kind = "two-moons";  // fashion | cifar10 | two-moons | blobs
  std::string data_dir;
  std::size_t n_per_class = 2000;
  std::optional<std::size_t> test_n_per_class;
  double noise = 0.25;
  std::optional<std::size_t> train_subset;
  std::optional<std::size_t> test_subset;
  std::string preset = "mlp2";
  std::string out_dir = "runs/latest";
  bool augment_explicit = false;  // false: use default_augment(data_kind)

  bool image_data() const { return data_kind == "fashion" || data_kind == "cifar10"; }
  void validate() const;
};

/// Default augmentation for the data kind: pad-4 crop + flip for images,
/// nothing for the 2D generators.
AugmentPolicy default_augment(const std::string& data_kind);

/// Fills in data-kind dependent defaults (augmentation).
void resolve(CliConfig& cfg);

/// Applies flat dotted keys ("phantom.k", "train.lr0", ...) onto `cfg`.
/// Unknown keys and wrongly typed values raise ConfigError naming the key.
void apply_json(CliConfig& cfg, const nlohmann::json& j);
CliConfig load_config_file(const std::string& path);
/// Resolved flat form; apply_json(CliConfig{}, to_json(c)) reproduces c.
nlohmann::json to_json(const CliConfig& cfg);

struct DataPair {
  LabeledDataset train;
  LabeledDataset test;
};

/// Loads or generates the train/test split named by the config. The data
/// directory falls back to $PHANTOM_DATA_DIR.
DataPair load_data(const CliConfig& cfg);

}  // namespace phantom::cli
