// Command-line front end for training, comparison, ablation, gradient
// checks and plotting.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "metaadamw/checkpoint.hpp"
#include "metaadamw/harness/compare.hpp"
#include "metaadamw/harness/config.hpp"
#include "metaadamw/harness/gradcheck.hpp"
#include "metaadamw/harness/plot.hpp"
#include "metaadamw/harness/training.hpp"

namespace fs = std::filesystem;
using namespace metaadamw;
using namespace metaadamw::harness;

namespace {

int cmd_train(const std::string& config_path, const std::optional<std::uint64_t>& seed,
              const std::string& out) {
  RunConfig cfg = load_config(config_path);
  if (seed) cfg.seed = *seed;
  const fs::path dir = !out.empty() ? fs::path(out)
                                    : output_root() / (cfg.task + "-" + std::string(to_string(cfg.optimizer)) +
                                                       "-seed" + std::to_string(cfg.seed));
  RunOptions opts;
  opts.out_dir = dir;
  const auto r = run_training(cfg, opts);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
  for (std::size_t i = 0; i + 1 < r.epochs.size(); i += 2) {
    const auto& tr = r.epochs[i];
    const auto& va = r.epochs[i + 1];
    std::printf("epoch %3zu  train_loss %.6g  val_loss %.6g  val_metric %.6g\n", tr.epoch, tr.loss, va.loss,
                va.metric);
  }
  std::printf("best epoch %zu  best %s %.6g  steps %zu  meta-updates %zu (%zu skipped)  %.2f s\n", r.best_epoch,
              std::string(to_string(make_task(cfg.task, cfg.seed)->metric_kind())).c_str(), r.best_metric,
              r.steps, r.meta.size(), r.meta_skipped, r.total_seconds);
  std::printf("artifacts in %s\n", dir.string().c_str());
  if (r.aborted) {
    std::fprintf(stderr, "run aborted: %s\n", r.diagnostic.c_str());
    return 3;
  }
  return 0;
}

int cmd_compare(const std::string& task, const std::string& seeds, const std::string& config_path,
                const std::string& out) {
  RunConfig base = config_path.empty() ? config_for(task) : load_config(config_path);
  if (!config_path.empty() && !task.empty() && base.task != task && base.preset != task) {
    throw std::invalid_argument("--task " + task + " disagrees with the config's task " + base.task);
  }
  const fs::path dir = !out.empty() ? fs::path(out) : output_root() / ("compare-" + (task.empty() ? base.task : task));
  const auto s = run_comparison(base, parse_seed_list(seeds), dir);
  const std::string csv = comparison_csv(s);
  fs::create_directories(dir);
  write_file((dir / "comparison.csv").string(), csv);
  std::cout << csv;
  std::printf("improvement %.3f%%  overhead %.3f%%  (%s, medians over %zu seeds)\n", s.improvement, s.overhead,
              std::string(to_string(s.metric)).c_str(), s.rows.size());
  for (const auto& r : s.rows) {
    if (!r.error.empty()) return 3;
  }
  return 0;
}

int cmd_ablate(const std::string& grid_path, const std::string& out) {
  const GridSpec grid = parse_grid(read_file(grid_path));
  const fs::path dir = !out.empty() ? fs::path(out) : output_root() / ("ablate-" + fs::path(grid_path).stem().string());
  const auto res = run_ablation(grid, dir);
  const std::string csv = ablation_csv(res);
  fs::create_directories(dir);
  write_file((dir / "ablation.csv").string(), csv);
  std::cout << csv;
  for (const auto& r : res.rows) {
    if (!r.error.empty()) return 3;
  }
  return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
  bool ok = true;
  for (const auto& report : {run_primitive_suite(seed), run_random_graph_suite(50, seed),
                             run_second_order_suite(seed), run_meta_gradient_suite(seed)}) {
    std::cout << format_report(report);
    ok = ok && report.passed();
  }
  std::cout << (ok ? "all suites passed\n" : "gradient check FAILED\n");
  return ok ? 0 : 1;
}

int cmd_plot(const std::string& run) {
  for (const auto& p : plot_run(run)) std::cout << p.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MetaAdamW optimizer toolkit"};
  app.require_subcommand(1);

  std::string config_path, out, task, seeds, grid, run;
  std::optional<std::uint64_t> seed;
  std::uint64_t check_seed = 7;

  auto* train = app.add_subcommand("train", "Train one configuration");
  train->add_option("--config", config_path, "Flat key = value config file")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", seed, "Override the config's seed");
  train->add_option("--out", out, "Output directory");

  auto* compare = app.add_subcommand("compare", "AdamW vs MetaAdamW over seeds");
  compare->add_option("--task", task, "Task id or preset name");
  compare->add_option("--seeds", seeds, "Comma-separated seeds")->required();
  compare->add_option("--config", config_path, "Base config instead of task defaults")->check(CLI::ExistingFile);
  compare->add_option("--out", out, "Output directory");

  auto* ablate = app.add_subcommand("ablate", "Run an ablation grid");
  ablate->add_option("--grid", grid, "Grid file")->required()->check(CLI::ExistingFile);
  ablate->add_option("--out", out, "Output directory");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suites");
  gradcheck->add_option("--seed", check_seed, "Seed for the random inputs");

  auto* plot = app.add_subcommand("plot", "SVG charts for a finished run");
  plot->add_option("--run", run, "Run directory")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*train) return cmd_train(config_path, seed, out);
    if (*compare) {
      if (task.empty() && config_path.empty()) throw std::invalid_argument("compare needs --task or --config");
      return cmd_compare(task, seeds, config_path, out);
    }
    if (*ablate) return cmd_ablate(grid, out);
    if (*gradcheck) return cmd_gradcheck(check_seed);
    if (*plot) return cmd_plot(run);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
