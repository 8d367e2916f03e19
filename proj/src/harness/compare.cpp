#include "metaadamw/harness/compare.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <stdexcept>

#include "metaadamw/harness/training.hpp"

namespace metaadamw::harness {

double improvement_percent(double baseline, double candidate, bool higher_is_better) {
  if (baseline == 0.0) throw std::invalid_argument("improvement_percent: zero baseline");
  const double diff = higher_is_better ? candidate - baseline : baseline - candidate;
  return diff / baseline * 100.0;
}

double overhead_percent(double baseline_seconds, double candidate_seconds) {
  if (!(baseline_seconds > 0.0)) throw std::invalid_argument("overhead_percent: baseline time must be > 0");
  return (candidate_seconds - baseline_seconds) / baseline_seconds * 100.0;
}

double median(std::vector<double> values) {
  if (values.empty()) return std::nan("");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  while (true) {
    const auto p = text.find(sep);
    out.emplace_back(trim(text.substr(0, p)));
    if (p == std::string_view::npos) break;
    text.remove_prefix(p + 1);
  }
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

struct Outcome {
  double metric = std::nan("");
  double seconds = std::nan("");
  std::size_t epochs = 0;
  MetricKind kind = MetricKind::mse;
  std::string error;
};

Outcome run_one(const RunConfig& cfg, const std::filesystem::path& dir) {
  Outcome o;
  try {
    o.kind = make_task(cfg.task, cfg.seed)->metric_kind();
    RunOptions opts;
    opts.out_dir = dir;
    const auto r = run_training(cfg, opts);
    o.metric = r.best_metric;
    o.seconds = r.total_seconds;
    o.epochs = r.epochs_run;
    if (r.aborted) o.error = r.diagnostic;
  } catch (const std::exception& e) {
    o.error = e.what();
  }
  return o;
}

std::filesystem::path sub(const std::filesystem::path& root, const std::string& name) {
  return root.empty() ? root : root / name;
}

}  // namespace

ComparisonSummary run_comparison(const RunConfig& base, const std::vector<std::uint64_t>& seeds,
                                 const std::filesystem::path& out_dir) {
  if (seeds.empty()) throw std::invalid_argument("compare: at least one seed is required");
  ComparisonSummary s;
  s.task = base.task;
  s.metric = make_task(base.task, 0)->metric_kind();
  const bool higher = higher_is_better(s.metric);
  std::vector<double> am, mm, at, mt;
  for (auto seed : seeds) {
    RunConfig a = base;
    a.seed = seed;
    a.optimizer = OptimizerKind::adamw;
    RunConfig m = a;
    m.optimizer = OptimizerKind::meta_adamw;
    const std::string tag = "seed" + std::to_string(seed);
    const Outcome oa = run_one(a, sub(out_dir, tag + "/adamw"));
    const Outcome om = run_one(m, sub(out_dir, tag + "/meta_adamw"));
    ComparisonRow row;
    row.seed = seed;
    row.adamw_metric = oa.metric;
    row.meta_metric = om.metric;
    row.adamw_seconds = oa.seconds;
    row.meta_seconds = om.seconds;
    row.error = !oa.error.empty() ? "adamw: " + oa.error : (!om.error.empty() ? "meta_adamw: " + om.error : "");
    if (row.error.empty()) {
      row.improvement = improvement_percent(oa.metric, om.metric, higher);
      row.overhead = oa.seconds > 0.0 ? overhead_percent(oa.seconds, om.seconds) : std::nan("");
      am.push_back(oa.metric);
      mm.push_back(om.metric);
      at.push_back(oa.seconds);
      mt.push_back(om.seconds);
    } else {
      row.improvement = row.overhead = std::nan("");
    }
    s.rows.push_back(row);
  }
  s.median_adamw = median(am);
  s.median_meta = median(mm);
  s.median_adamw_seconds = median(at);
  s.median_meta_seconds = median(mt);
  s.improvement = am.empty() ? std::nan("") : improvement_percent(s.median_adamw, s.median_meta, higher);
  s.overhead = at.empty() || !(s.median_adamw_seconds > 0.0)
                   ? std::nan("")
                   : overhead_percent(s.median_adamw_seconds, s.median_meta_seconds);
  return s;
}

std::string comparison_csv(const ComparisonSummary& s) {
  const std::string metric(to_string(s.metric));
  std::string out = "seed,adamw_" + metric + ",meta_adamw_" + metric +
                    ",adamw_seconds,meta_adamw_seconds,improvement_percent,overhead_percent,error\n";
  for (const auto& r : s.rows) {
    out += std::to_string(r.seed) + "," + format_double(r.adamw_metric) + "," + format_double(r.meta_metric) +
           "," + format_double(r.adamw_seconds) + "," + format_double(r.meta_seconds) + "," +
           format_double(r.improvement) + "," + format_double(r.overhead) + "," + csv_field(r.error) + "\n";
  }
  out += "median," + format_double(s.median_adamw) + "," + format_double(s.median_meta) + "," +
         format_double(s.median_adamw_seconds) + "," + format_double(s.median_meta_seconds) + "," +
         format_double(s.improvement) + "," + format_double(s.overhead) + ",\n";
  return out;
}

const std::vector<std::string>& ablation_axes() {
  static const std::vector<std::string> axes{"optimizer",  "grouping",   "features",   "objective",
                                             "priorities", "gating",     "k_meta",     "attn_layers",
                                             "attn_heads", "attn_ff"};
  return axes;
}

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  std::vector<std::uint64_t> seeds;
  for (const auto& part : split(text, ',')) {
    std::uint64_t x = 0;
    const auto res = std::from_chars(part.data(), part.data() + part.size(), x);
    if (part.empty() || res.ec != std::errc{} || res.ptr != part.data() + part.size()) {
      throw std::invalid_argument("bad seed '" + part + "'");
    }
    seeds.push_back(x);
  }
  return seeds;
}

GridSpec parse_grid(std::string_view text) {
  GridSpec g;
  std::string base_text;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("grid line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key == "seeds") {
      g.seeds = parse_seed_list(value);
    } else if (key.rfind("grid.", 0) == 0) {
      const std::string axis = key.substr(5);
      const auto& allowed = ablation_axes();
      if (std::find(allowed.begin(), allowed.end(), axis) == allowed.end()) {
        throw std::invalid_argument("'" + axis + "' is not an ablation axis");
      }
      auto values = split(value, '|');
      values.erase(std::remove(values.begin(), values.end(), std::string()), values.end());
      if (values.empty()) throw std::invalid_argument("axis '" + axis + "' has no values");
      g.axes.emplace_back(axis, std::move(values));
    } else {
      base_text += std::string(line) + "\n";
    }
  }
  if (g.axes.empty()) throw std::invalid_argument("empty grid: no grid.<axis> lines");
  if (g.seeds.empty()) throw std::invalid_argument("grid: no seeds");
  g.base = parse_config(base_text);
  // Surface bad axis values before any run starts.
  for (const auto& [axis, values] : g.axes) {
    for (const auto& v : values) {
      RunConfig probe = g.base;
      set_key(probe, axis, v);
    }
  }
  return g;
}

AblationResult run_ablation(const GridSpec& grid, const std::filesystem::path& out_dir) {
  if (grid.axes.empty()) throw std::invalid_argument("empty grid");
  AblationResult res;
  for (const auto& [axis, values] : grid.axes) res.axis_names.push_back(axis);
  res.metric = make_task(grid.base.task, 0)->metric_kind();
  const bool higher = higher_is_better(res.metric);

  std::size_t cells = 1;
  for (const auto& a : grid.axes) cells *= a.second.size();

  for (auto seed : grid.seeds) {
    RunConfig base = grid.base;
    base.seed = seed;
    const Outcome ob = run_one(base, sub(out_dir, "baseline-seed" + std::to_string(seed)));
    for (std::size_t c = 0; c < cells; ++c) {
      AblationRow row;
      row.cell = c;
      row.seed = seed;
      RunConfig cfg = base;
      std::size_t rest = c;
      for (auto it = grid.axes.rbegin(); it != grid.axes.rend(); ++it) {
        const auto& values = it->second;
        row.values.insert(row.values.begin(), values[rest % values.size()]);
        rest /= values.size();
      }
      for (std::size_t a = 0; a < grid.axes.size(); ++a) set_key(cfg, grid.axes[a].first, row.values[a]);
      Outcome o;
      if (cfg == base) {
        o = ob;
      } else {
        o = run_one(cfg, sub(out_dir, "cell" + std::to_string(c) + "-seed" + std::to_string(seed)));
      }
      row.metric = o.metric;
      row.baseline_metric = ob.metric;
      row.epochs = o.epochs;
      row.seconds = o.seconds;
      row.error = !ob.error.empty() ? "baseline: " + ob.error : o.error;
      row.delta_percent = row.error.empty() ? improvement_percent(ob.metric, o.metric, higher) : std::nan("");
      res.rows.push_back(std::move(row));
    }
  }
  return res;
}

std::string ablation_csv(const AblationResult& r) {
  std::string out = "cell";
  for (const auto& a : r.axis_names) out += "," + a;
  out += ",seed," + std::string(to_string(r.metric)) + ",baseline_" + std::string(to_string(r.metric)) +
         ",delta_percent,epochs,seconds,error\n";
  for (const auto& row : r.rows) {
    out += std::to_string(row.cell);
    for (const auto& v : row.values) {
      out += "," + csv_field(v);
    }
    out += "," + std::to_string(row.seed) + "," + format_double(row.metric) + "," +
           format_double(row.baseline_metric) + "," + format_double(row.delta_percent) + "," +
           std::to_string(row.epochs) + "," + format_double(row.seconds) + "," + csv_field(row.error) + "\n";
  }
  return out;
}

}  // namespace metaadamw::harness
