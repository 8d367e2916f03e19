#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace metaadamw::harness {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

/// Standalone SVG line chart. Non-finite points are skipped.
std::string render_svg(const Chart& chart, int width = 640, int height = 400);

/// Minimal reader for the harness's own CSV files (quoted fields allowed).
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

/// Writes loss.svg and metric.svg from metrics.csv, plus factors.svg when
/// meta_trace.csv has rows. Returns the files written.
std::vector<std::filesystem::path> plot_run(const std::filesystem::path& run_dir);

}  // namespace metaadamw::harness
