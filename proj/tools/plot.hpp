#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace phantom::cli {

/// One metrics.csv loaded column-wise; empty cells are NaN.
struct MetricsTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::vector<double> column(const std::string& name) const;
};

/// Parses a metrics CSV and checks its header against the training schema.
/// Throws ConfigError naming the first missing or unexpected column.
MetricsTable read_metrics_csv(const std::filesystem::path& path);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Static line chart: axes, ticks, one polyline per non-empty series, legend.
/// Output depends only on the inputs.
std::string render_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                              const std::vector<Series>& series);

/// Writes train_loss.svg, test_loss.svg and test_acc.svg into out_dir, one
/// polyline per run. Returns the written paths.
std::vector<std::filesystem::path> plot_runs(const std::vector<std::filesystem::path>& csv_paths,
                                             const std::vector<std::string>& labels,
                                             const std::filesystem::path& out_dir);

}  // namespace phantom::cli
