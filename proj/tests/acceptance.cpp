// Acceptance criteria, one PASS/FAIL line each. Exit status is the number of
// failing criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "metaadamw/autodiff.hpp"
#include "metaadamw/checkpoint.hpp"
#include "metaadamw/harness/compare.hpp"
#include "metaadamw/harness/gradcheck.hpp"
#include "metaadamw/harness/plot.hpp"
#include "metaadamw/harness/tasks.hpp"
#include "metaadamw/harness/training.hpp"
#include "metaadamw/meta_update.hpp"

using namespace metaadamw;
using namespace metaadamw::harness;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::vector<std::vector<double>> snapshot(const Model& m) {
  std::vector<std::vector<double>> out;
  for (const auto& p : m.parameters()) out.push_back(p.value.to_vector());
  return out;
}

bool same_bits(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size()) return false;
    if (std::memcmp(a[i].data(), b[i].data(), a[i].size() * sizeof(double)) != 0) return false;
  }
  return true;
}

Verdict adamw_equivalence() {
  const auto task = make_task("spirals", 11);
  auto a = task->make_model(11);
  auto b = a->clone();
  const auto groups = build_groups(*b, GroupingStrategy::fine_grained);
  const FeatureOptions features;
  const ModulationNetwork net(modulation_config_for(features, groups.size()), 12);
  OptConfig opt;
  AdamState sa = AdamState::zeros_like(*a);
  AdamState sb = AdamState::zeros_like(*b);
  Rng rng(13);
  std::vector<std::size_t> idx(32);
  for (int step = 0; step < 200; ++step) {
    for (auto& i : idx) i = static_cast<std::size_t>(rng.below(task->size(Split::train)));
    const Batch batch = task->make_batch(Split::train, idx);
    adamw_step(*a, grad(a->loss(batch), a->values()), sa, opt);
    meta_adamw_step(*b, grad(b->loss(batch), b->values()), sb, opt, net, groups, features);
  }
  double worst = 0.0;
  const auto pa = snapshot(*a);
  const auto pb = snapshot(*b);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    for (std::size_t j = 0; j < pa[i].size(); ++j) {
      const double scale = std::max({std::fabs(pa[i][j]), std::fabs(pb[i][j]), 1e-300});
      worst = std::max(worst, std::fabs(pa[i][j] - pb[i][j]) / scale);
    }
  }
  return {worst < 1e-12, "200 steps, " + std::to_string(a->weight_count()) + " weights, " +
                             std::to_string(groups.size()) + " groups, max rel deviation " + fmt("%.3g", worst)};
}

Verdict first_order_suite() {
  const auto report = run_random_graph_suite(50, 21);
  const auto prims = primitive_names();
  const bool covers = prims.size() <= 50;
  std::string detail = "50 graphs over " + std::to_string(prims.size()) + " primitives, worst " +
                       fmt("%.3g", report.worst()) + " (< 1e-5)";
  if (!report.passed()) {
    detail += "; failing:";
    for (const auto& n : report.failing_names()) detail += " " + n;
  }
  return {report.passed() && covers && report.worst() < 1e-5, detail};
}

Verdict meta_gradient_suite() {
  const auto report = run_meta_gradient_suite(31);
  std::string detail = std::to_string(report.checks.size()) + " checks, worst " + fmt("%.3g", report.worst()) +
                       " (< 1e-3)";
  for (const auto& c : report.checks) {
    if (c.name == "combined_second_order") detail += "; combined: " + fmt("%.3g", c.max_rel_error) + ", " + c.detail;
  }
  return {report.passed() && report.worst() < 1e-3, detail};
}

Verdict huw_stationarity() {
  const std::array<double, 3> losses{0.5, 2.0, 1.0};
  double worst = 0.0;
  for (const auto& prio : {std::array<double, 3>{1.0, 1.0, 1.0}, std::array<double, 3>{2.0, 5.0, 1.0}}) {
    HuwState h(prio);
    for (int k = 0; k < 2000; ++k) huw_step(losses, h, 0.05, 6.0);
    for (int i = 0; i < 3; ++i) worst = std::max(worst, std::fabs(std::exp(h.s[i]) - losses[i] / prio[i]));
  }
  return {worst < 1e-3, "max |sigma^2 - L/p| = " + fmt("%.3g", worst) + " over priorities [1,1,1] and [2,5,1]"};
}

Verdict bounds_and_equivariance() {
  std::size_t bad_bounds = 0;
  std::size_t bad_perm = 0;
  double lo = INFINITY, hi = -INFINITY;
  ModulationConfig mc;
  mc.feature_dim = 6;
  std::unique_ptr<ModulationNetwork> net;
  Rng rng(41);
  for (int trial = 0; trial < 10000; ++trial) {
    if (trial % 100 == 0) {
      net = std::make_unique<ModulationNetwork>(mc, 1000 + trial);
      net->randomize_head(2000 + trial, 0.5 + 4.0 * rng.uniform());
    }
    const std::size_t g = 1 + rng.below(8);
    const double scale = std::pow(10.0, rng.uniform(-2.0, 3.0));
    std::vector<double> f(g * 6);
    for (auto& x : f) x = scale * rng.normal();
    const Tensor F({g, 6}, f);
    const auto out = net->modulate(F);
    for (std::size_t i = 0; i < g; ++i) {
      const double a = out.alpha[i], b = out.beta[i], l1 = out.lambda1[i], l2 = out.lambda2[i];
      lo = std::min({lo, a, b});
      hi = std::max({hi, a, b});
      if (!(a > 0.5 && a < 1.5 && b > 0.5 && b < 1.5 && l1 > 0.0 && l1 < 1.0 && l2 > 0.0 && l2 < 1.0)) {
        ++bad_bounds;
      }
    }
    std::vector<std::size_t> perm(g);
    for (std::size_t i = 0; i < g; ++i) perm[i] = i;
    rng.shuffle(perm);
    std::vector<double> fp(g * 6);
    for (std::size_t i = 0; i < g; ++i) std::copy_n(f.begin() + perm[i] * 6, 6, fp.begin() + i * 6);
    const auto outp = net->modulate(Tensor({g, 6}, fp));
    for (std::size_t i = 0; i < g; ++i) {
      const std::size_t src = perm[i];
      const bool same = outp.alpha[i] == out.alpha[src] && outp.beta[i] == out.beta[src] &&
                        outp.lambda1[i] == out.lambda1[src] && outp.lambda2[i] == out.lambda2[src];
      bad_perm += same ? 0 : 1;
    }
  }
  return {bad_bounds == 0 && bad_perm == 0,
          "10^4 matrices; alpha/beta span [" + fmt("%.15g", lo) + ", " + fmt("%.15g", hi) + "]; " +
              std::to_string(bad_bounds) + " bound violations, " + std::to_string(bad_perm) +
              " permutation mismatches"};
}

Verdict feature_dimensions() {
  FeatureOptions basic;
  FeatureOptions plus;
  plus.version = FeatureVersion::basic_plus;
  auto model = build_mlp({2, 4, 4, 1}, 1);
  const auto groups = build_groups(*model, GroupingStrategy::fine_grained);
  const AdamState state = AdamState::zeros_like(*model);
  std::vector<Tensor> grads;
  for (const auto& p : model->parameters()) grads.push_back(Tensor::zeros(p.value.shape()));
  const auto fb = extract_features(*model, groups, grads, state, 0, basic);
  const auto fp = extract_features(*model, groups, grads, state, 0, plus);
  const bool ok = feature_dim(basic) == 6 && feature_dim(plus) == 11 && fb.values.dim(1) == 6 &&
                  fp.values.dim(1) == 11;
  return {ok, "basic " + std::to_string(fb.values.dim(1)) + " columns, basic_plus " +
                  std::to_string(fp.values.dim(1)) + " columns"};
}

Batch regression(Rng& rng, std::size_t n, std::size_t in) {
  std::vector<double> x(n * in), y(n);
  for (auto& v : x) v = rng.uniform(-2, 2);
  for (std::size_t i = 0; i < n; ++i) y[i] = std::sin(x[i * in]) + 0.1 * rng.normal();
  Batch b;
  b.inputs = Tensor({n, in}, std::move(x));
  b.targets = Tensor({n, 1}, std::move(y));
  return b;
}

Verdict restoration() {
  std::size_t broken = 0;
  std::size_t skipped = 0;
  Rng rng(51);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t in = 1 + rng.below(3);
    auto model = build_mlp({in, 2 + rng.below(6), 1 + rng.below(4), 1}, 600 + trial);
    const auto groups = build_groups(*model, GroupingStrategy::fine_grained);
    OptConfig opt;
    opt.lr = rng.uniform(1e-3, 0.1);
    MetaConfig meta;
    meta.objective = static_cast<Objective>(rng.below(4));
    meta.first_order = rng.below(2) == 1;
    meta.meta_lr = rng.uniform(1e-3, 0.5);
    FeatureOptions features;
    ModulationConfig base;
    switch (rng.below(3)) {
      case 0: base.n_heads = 2; break;
      case 1: features.version = FeatureVersion::basic_plus; base.n_heads = 1; break;
      default: features.version = FeatureVersion::enhanced; base.n_heads = 3; break;
    }
    features.normalized = rng.below(2) == 1;
    base.gating = rng.below(2) == 1;
    base.n_layers = 1 + rng.below(2);
    ModulationNetwork net(modulation_config_for(features, groups.size(), base), 700 + trial);
    net.randomize_head(800 + trial, rng.uniform(0.0, 1.0));
    HuwState huw;
    AdamState state = AdamState::zeros_like(*model);
    const std::size_t warm = rng.below(4);
    for (std::size_t k = 0; k < warm; ++k) {
      adamw_step(*model, grad(model->loss(regression(rng, 8, in)), model->values()), state, opt);
    }
    const auto theta = snapshot(*model);
    const AdamState before = state.copy();
    const MetaContext ctx{&opt, &meta, &groups, &features};
    const auto rec = meta_update(*model, net, state, ctx, regression(rng, 8, in), regression(rng, 8, in),
                                 regression(rng, 8, in), huw);
    skipped += rec.skipped ? 1 : 0;
    if (!same_bits(snapshot(*model), theta) || !state.identical(before)) ++broken;
  }

  // Gap-only objective: no gradient reaches the encoder or head.
  auto model = build_mlp({2, 6, 6, 1}, 5);
  const auto groups = build_groups(*model, GroupingStrategy::fine_grained);
  OptConfig opt;
  MetaConfig meta;
  meta.objective = Objective::gap;
  FeatureOptions features;
  ModulationNetwork net(modulation_config_for(features, groups.size()), 6);
  net.randomize_head(7, 0.5);
  AdamState state = AdamState::zeros_like(*model);
  adamw_step(*model, grad(model->loss(regression(rng, 8, 2)), model->values()), state, opt);
  HuwState huw;
  const MetaContext ctx{&opt, &meta, &groups, &features};
  const auto ml = meta_loss(*model, net, state, ctx, regression(rng, 8, 2), regression(rng, 8, 2),
                            regression(rng, 8, 2), huw);
  std::size_t nonzero = 0;
  std::size_t total = 0;
  for (const auto& g : grad(ml.total, net.weight_values())) {
    for (double v : g.data()) {
      nonzero += v != 0.0 ? 1 : 0;
      ++total;
    }
  }
  return {broken == 0 && nonzero == 0,
          "100 invocations, " + std::to_string(broken) + " changed theta/m/v/t (" + std::to_string(skipped) +
              " skipped as non-finite); gap-only: " + std::to_string(nonzero) + " of " + std::to_string(total) +
              " network gradients nonzero"};
}

Verdict early_stopping() {
  EarlyStopping s(2, false);
  std::size_t stopped_at = 0;
  for (double v : {1.0, 0.9, 0.95, 0.97}) {
    if (s.update(v)) {
      stopped_at = s.epochs();
      break;
    }
  }
  return {stopped_at == 4 && s.best_epoch() == 2 && s.best() == 0.9,
          "stopped after epoch " + std::to_string(stopped_at) + ", best epoch " + std::to_string(s.best_epoch()) +
              " (" + fmt("%g", s.best()) + ")"};
}

/// Rows of metrics.csv without the timing columns.
std::string untimed(const std::string& csv) {
  std::string out;
  for (const auto& row : parse_csv(csv)) {
    for (std::size_t i = 0; i < std::min<std::size_t>(row.size(), 4); ++i) out += row[i] + ",";
    out += "\n";
  }
  return out;
}

Verdict determinism() {
  RunConfig c = config_for("sine");
  c.seed = 5;
  c.max_epochs = 3;
  c.meta.k_meta = 5;
  c.clock = Clock::off;
  const fs::path root = fs::temp_directory_path() / "metaadamw_acceptance_det";
  fs::remove_all(root);
  run_training(c, {root / "a", false});
  run_training(c, {root / "b", false});
  auto bytes = [&](const char* run, const char* f) { return read_file((root / run / f).string()); };
  const bool metrics = bytes("a", "metrics.csv") == bytes("b", "metrics.csv");
  const bool trace = bytes("a", "meta_trace.csv") == bytes("b", "meta_trace.csv");
  const std::size_t trace_rows = parse_csv(bytes("a", "meta_trace.csv")).size() - 1;

  c.clock = Clock::wall;
  run_training(c, {root / "c", false});
  run_training(c, {root / "d", false});
  const bool wall_values = untimed(bytes("c", "metrics.csv")) == untimed(bytes("d", "metrics.csv")) &&
                           bytes("c", "meta_trace.csv") == bytes("d", "meta_trace.csv");
  fs::remove_all(root);
  return {metrics && trace && wall_values,
          std::string("clock=off: metrics.csv ") + (metrics ? "identical" : "DIFFERENT") + ", meta_trace.csv (" +
              std::to_string(trace_rows) + " rows) " + (trace ? "identical" : "DIFFERENT") +
              "; clock=wall: non-timing columns " + (wall_values ? "identical" : "DIFFERENT")};
}

Verdict desk_scale_direction() {
  const RunConfig base = config_for("sine");
  const auto s = run_comparison(base, {1, 2, 3, 4, 5});
  bool errors = false;
  for (const auto& r : s.rows) errors = errors || !r.error.empty();
  const double ratio = s.median_meta / s.median_adamw;
  return {!errors && ratio <= 1.02,
          "median best val MSE: AdamW " + fmt("%.6g", s.median_adamw) + ", MetaAdamW " + fmt("%.6g", s.median_meta) +
              ", ratio " + fmt("%.4f", ratio) + " (<= 1.02), improvement " + fmt("%+.2f%%", s.improvement)};
}

Verdict overhead_accounting() {
  auto per_step = [](std::size_t k) {
    RunConfig c = config_for("sine");
    c.seed = 3;
    c.max_epochs = 10;
    c.patience = 100;
    c.meta.warmup_epochs = 0;
    c.meta.k_meta = k;
    double best = INFINITY;
    std::size_t updates = 0;
    for (int rep = 0; rep < 3; ++rep) {
      const auto r = run_training(c);
      best = std::min(best, r.total_t_meta / static_cast<double>(r.steps));
      updates = r.meta.size();
    }
    return std::pair{best, updates};
  };
  const auto [t5, n5] = per_step(5);
  const auto [t10, n10] = per_step(10);
  const double ratio = t10 / t5;
  return {ratio >= 0.4 && ratio <= 0.6,
          "K=5: " + std::to_string(n5) + " updates, " + fmt("%.3g", t5 * 1e3) + " ms/step; K=10: " +
              std::to_string(n10) + " updates, " + fmt("%.3g", t10 * 1e3) + " ms/step; ratio " + fmt("%.3f", ratio) +
              " (0.5 within 20%)"};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_seconds;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "AdamW equivalence", 10.0, adamw_equivalence},
      {2, "first-order gradient suite", 30.0, first_order_suite},
      {3, "meta-gradient suite", 60.0, meta_gradient_suite},
      {4, "HUW stationarity", 0.0, huw_stationarity},
      {5, "bounds and permutation equivariance", 0.0, bounds_and_equivariance},
      {6, "feature dimensions", 0.0, feature_dimensions},
      {7, "restoration", 0.0, restoration},
      {8, "early stopping", 0.0, early_stopping},
      {9, "determinism", 0.0, determinism},
      {10, "desk-scale directional check", 600.0, desk_scale_direction},
      {11, "overhead accounting", 0.0, overhead_accounting},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    bool pass = v.pass;
    std::string timing = fmt("%.2f s", secs);
    if (c.budget_seconds > 0.0) {
      timing += fmt(" of %.0f s budget", c.budget_seconds);
      if (secs >= c.budget_seconds) {
        pass = false;
        timing += ", OVER BUDGET";
      }
    }
    failures += pass ? 0 : 1;
    std::printf("%s  [%2d] %s: %s (%s)\n", pass ? "PASS" : "FAIL", c.id, c.name, v.detail.c_str(), timing.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures;
}
