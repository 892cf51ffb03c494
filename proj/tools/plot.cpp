#include "plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "phantom/error.hpp"

namespace phantom::cli {

namespace {

const std::vector<std::string> kSchema{"epoch",     "iteration", "train_loss", "main_loss",  "phantom_loss",
                                       "test_loss", "test_acc",  "lr",         "alpha_mean", "wall_seconds"};

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::vector<double> MetricsTable::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw ConfigError(name, "column not present");
  const auto idx = static_cast<std::size_t>(it - columns.begin());
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[idx]);
  return out;
}

MetricsTable read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--metrics", "cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("epoch", path.string() + ": missing header");
  MetricsTable t;
  t.columns = split(line);
  for (std::size_t i = 0; i < kSchema.size(); ++i) {
    if (i >= t.columns.size() || t.columns[i] != kSchema[i]) {
      throw ConfigError(kSchema[i], path.string() + ": expected column '" + kSchema[i] + "' at position " +
                                        std::to_string(i));
    }
  }
  if (t.columns.size() > kSchema.size()) {
    throw ConfigError(t.columns[kSchema.size()], path.string() + ": unexpected extra column");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != kSchema.size()) {
      throw ConfigError(kSchema.back(), path.string() + ": row has " + std::to_string(cells.size()) + " fields");
    }
    std::vector<double> row;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].empty()) {
        row.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      try {
        row.push_back(std::stod(cells[i]));
      } catch (const std::exception&) {
        throw ConfigError(kSchema[i], path.string() + ": non-numeric value '" + cells[i] + "'");
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string render_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                              const std::vector<Series>& series) {
  constexpr double W = 640, H = 400, left = 70, right = 160, top = 40, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;

  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (std::isnan(s.x[i]) || std::isnan(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) {
    x0 = 0;
    x1 = 1;
    y0 = 0;
    y1 = 1;
  }
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + ph - (y - y0) / (y1 - y0) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
      << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << num(left + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
      << "</text>\n";
  svg << "<g class=\"axes\" stroke=\"black\" stroke-width=\"1\">\n";
  svg << "<line x1=\"" << num(left) << "\" y1=\"" << num(top + ph) << "\" x2=\"" << num(left + pw) << "\" y2=\""
      << num(top + ph) << "\"/>\n";
  svg << "<line x1=\"" << num(left) << "\" y1=\"" << num(top) << "\" x2=\"" << num(left) << "\" y2=\"" << num(top + ph)
      << "\"/>\n";
  svg << "</g>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = x0 + (x1 - x0) * i / 4.0, fy = y0 + (y1 - y0) * i / 4.0;
    svg << "<text x=\"" << num(px(fx)) << "\" y=\"" << num(top + ph + 16) << "\" text-anchor=\"middle\">" << tick(fx)
        << "</text>\n";
    svg << "<text x=\"" << num(left - 6) << "\" y=\"" << num(py(fy) + 4) << "\" text-anchor=\"end\">" << tick(fy)
        << "</text>\n";
  }
  svg << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(H - 10) << "\" text-anchor=\"middle\">"
      << escape(x_label) << "</text>\n";
  svg << "<text x=\"16\" y=\"" << num(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << num(top + ph / 2) << ")\">" << escape(y_label) << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % std::size(kPalette)];
    std::string points;
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      if (std::isnan(series[s].x[i]) || std::isnan(series[s].y[i])) continue;
      if (!points.empty()) points += ' ';
      points += num(px(series[s].x[i])) + ',' + num(py(series[s].y[i]));
    }
    if (!points.empty()) {
      svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << points << "\"/>\n";
    }
    const double ly = top + 10 + 18 * static_cast<double>(s);
    svg << "<rect x=\"" << num(left + pw + 12) << "\" y=\"" << num(ly - 8) << "\" width=\"12\" height=\"4\" fill=\""
        << color << "\"/>\n";
    svg << "<text x=\"" << num(left + pw + 30) << "\" y=\"" << num(ly - 2) << "\">" << escape(series[s].label)
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<std::filesystem::path> plot_runs(const std::vector<std::filesystem::path>& csv_paths,
                                             const std::vector<std::string>& labels,
                                             const std::filesystem::path& out_dir) {
  if (!labels.empty() && labels.size() != csv_paths.size()) {
    throw ConfigError("--labels", "expected one label per metrics file");
  }
  std::vector<MetricsTable> tables;
  for (const auto& p : csv_paths) tables.push_back(read_metrics_csv(p));

  std::filesystem::create_directories(out_dir);
  const std::pair<const char*, const char*> charts[] = {
      {"train_loss", "Train loss"}, {"test_loss", "Test loss"}, {"test_acc", "Test accuracy"}};
  std::vector<std::filesystem::path> written;
  for (const auto& [column, title] : charts) {
    std::vector<Series> series;
    for (std::size_t r = 0; r < tables.size(); ++r) {
      series.push_back({labels.empty() ? csv_paths[r].parent_path().filename().string() : labels[r],
                        tables[r].column("iteration"), tables[r].column(column)});
    }
    const auto path = out_dir / (std::string(column) + ".svg");
    std::ofstream out(path, std::ios::binary);
    out << render_line_chart(title, "iteration", column, series);
    if (!out) throw FormatError(FormatError::Kind::io, "cannot write " + path.string());
    written.push_back(path);
  }
  return written;
}

}  // namespace phantom::cli
