#include "metaadamw/harness/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "metaadamw/checkpoint.hpp"
#include "metaadamw/harness/config.hpp"

namespace metaadamw::harness {

namespace {

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string escape(std::string_view s) {
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

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::string tick_label(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

/// Round step so that [lo, hi] gets about `count` ticks.
double nice_step(double lo, double hi, int count) {
  const double raw = (hi - lo) / count;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (raw <= m * mag) return m * mag;
  }
  return 10.0 * mag;
}

}  // namespace

std::string render_svg(const Chart& chart, int width, int height) {
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : chart.series) {
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) {
    x0 = y0 = 0.0;
    x1 = y1 = 1.0;
  }
  if (x1 == x0) x1 = x0 + 1.0;
  if (y1 == y0) {
    const double pad = y0 == 0.0 ? 1.0 : std::fabs(y0) * 0.05;
    y0 -= pad;
    y1 += pad;
  }
  const double left = 70, right = 150, top = 40, bottom = 50;
  const double pw = width - left - right;
  const double ph = height - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
                    "\" height=\"" + std::to_string(height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + num(left + pw / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
         escape(chart.title) + "</text>\n";
  svg += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
         "\" fill=\"none\" stroke=\"#333\"/>\n";

  const double ys = nice_step(y0, y1, 5);
  for (double y = std::ceil(y0 / ys) * ys; y <= y1 + 1e-12 * std::fabs(y1); y += ys) {
    svg += "<line x1=\"" + num(left) + "\" x2=\"" + num(left + pw) + "\" y1=\"" + num(py(y)) + "\" y2=\"" +
           num(py(y)) + "\" stroke=\"#ddd\"/>\n";
    svg += "<text x=\"" + num(left - 6) + "\" y=\"" + num(py(y) + 4) + "\" text-anchor=\"end\">" +
           tick_label(std::fabs(y) < ys * 1e-9 ? 0.0 : y) + "</text>\n";
  }
  const double xs = nice_step(x0, x1, 6);
  for (double x = std::ceil(x0 / xs) * xs; x <= x1 + 1e-12 * std::fabs(x1); x += xs) {
    svg += "<text x=\"" + num(px(x)) + "\" y=\"" + num(top + ph + 18) + "\" text-anchor=\"middle\">" +
           tick_label(x) + "</text>\n";
  }
  svg += "<text x=\"" + num(left + pw / 2) + "\" y=\"" + num(height - 10.0) + "\" text-anchor=\"middle\">" +
         escape(chart.x_label) + "</text>\n";
  svg += "<text transform=\"translate(16," + num(top + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
         escape(chart.y_label) + "</text>\n";

  for (std::size_t k = 0; k < chart.series.size(); ++k) {
    const auto& s = chart.series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    std::string points;
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      points += num(px(s.x[i])) + "," + num(py(s.y[i])) + " ";
    }
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.8\" points=\"" +
           points + "\"/>\n";
    const double ly = top + 14 + 18 * static_cast<double>(k);
    svg += "<line x1=\"" + num(left + pw + 10) + "\" x2=\"" + num(left + pw + 30) + "\" y1=\"" + num(ly - 4) +
           "\" y2=\"" + num(ly - 4) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + num(left + pw + 34) + "\" y=\"" + num(ly) + "\">" + escape(s.name) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  if (!field.empty() || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<std::filesystem::path> plot_run(const std::filesystem::path& run_dir) {
  const auto metrics_path = run_dir / "metrics.csv";
  if (!std::filesystem::exists(metrics_path)) {
    throw std::runtime_error("no metrics.csv in " + run_dir.string());
  }
  const auto rows = parse_csv(read_file(metrics_path.string()));
  if (rows.empty() || rows[0].size() < 4 || rows[0][0] != "epoch") {
    throw std::runtime_error(metrics_path.string() + " is not a metrics file");
  }
  Series train_loss{"train", {}, {}}, val_loss{"val", {}, {}}, train_metric{"train", {}, {}},
      val_metric{"val", {}, {}};
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() < 4) continue;
    const double epoch = parse_double(r[0]);
    auto& loss = r[1] == "train" ? train_loss : val_loss;
    auto& metric = r[1] == "train" ? train_metric : val_metric;
    loss.x.push_back(epoch);
    loss.y.push_back(parse_double(r[2]));
    metric.x.push_back(epoch);
    metric.y.push_back(parse_double(r[3]));
  }
  std::string metric_name = "metric";
  std::string task;
  const auto cfg_path = run_dir / "config.txt";
  if (std::filesystem::exists(cfg_path)) {
    const auto cfg = parse_config(read_file(cfg_path.string()));
    task = cfg.task + " / " + std::string(to_string(cfg.optimizer)) + " / seed " + std::to_string(cfg.seed);
    metric_name = cfg.task == "sine" ? "MSE" : cfg.task == "charlm" ? "perplexity" : "accuracy";
  }
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::string& file, const Chart& chart) {
    const auto path = run_dir / file;
    write_file(path.string(), render_svg(chart));
    written.push_back(path);
  };
  emit("loss.svg", {"Loss " + task, "epoch", "loss", {train_loss, val_loss}});
  emit("metric.svg", {metric_name + " " + task, "epoch", metric_name, {train_metric, val_metric}});

  const auto trace_path = run_dir / "meta_trace.csv";
  if (std::filesystem::exists(trace_path)) {
    const auto trace = parse_csv(read_file(trace_path.string()));
    if (trace.size() > 1) {
      Chart factors{"Learning-rate factors " + task, "step", "alpha", {}};
      const auto& header = trace[0];
      for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c].rfind("alpha_", 0) != 0) continue;
        Series s{header[c].substr(6), {}, {}};
        for (std::size_t i = 1; i < trace.size(); ++i) {
          if (trace[i].size() <= c) continue;
          s.x.push_back(parse_double(trace[i][0]));
          s.y.push_back(parse_double(trace[i][c]));
        }
        factors.series.push_back(std::move(s));
      }
      emit("factors.svg", factors);
    }
  }
  return written;
}

}  // namespace metaadamw::harness
