#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "config.hpp"

namespace phantom::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

/// Trains one model and writes metrics.csv, summary.json, model.ckpt and the
/// resolved config.json into cfg.out_dir.
int cmd_train(CliConfig cfg, std::ostream& out, std::ostream& err);

/// Evaluates a checkpoint on the test split of the configured data.
int cmd_eval(const std::filesystem::path& checkpoint, CliConfig cfg, std::ostream& out, std::ostream& err);

/// One phantom run per k (shared seed) in <out>/k<k>/, plus <out>/ablation.csv.
int cmd_ablate_k(CliConfig cfg, const std::vector<std::size_t>& k_list, bool parallel, std::ostream& out,
                 std::ostream& err);

int cmd_plot(const std::vector<std::filesystem::path>& csv_paths, const std::vector<std::string>& labels,
             const std::filesystem::path& out_dir, std::ostream& out, std::ostream& err);

/// Parses argv-style arguments (without the program name) and dispatches.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace phantom::cli
