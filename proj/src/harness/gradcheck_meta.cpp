#include <chrono>
#include <cmath>
#include <memory>

#include "metaadamw/autodiff.hpp"
#include "metaadamw/harness/gradcheck.hpp"
#include "metaadamw/meta_update.hpp"
#include "metaadamw/numeric.hpp"

namespace metaadamw::harness {

namespace {

Batch regression_batch(Rng& rng, std::size_t n) {
  std::vector<double> x(2 * n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[2 * i] = rng.uniform(-2, 2);
    x[2 * i + 1] = rng.uniform(-2, 2);
    y[i] = std::sin(x[2 * i]) * std::cos(0.5 * x[2 * i + 1]) + 0.05 * rng.normal();
  }
  Batch b;
  b.inputs = Tensor({n, 2}, std::move(x));
  b.targets = Tensor({n, 1}, std::move(y));
  return b;
}

struct Fixture {
  std::unique_ptr<Model> model;
  AdamState state;
  std::vector<ParamGroup> groups;
  FeatureOptions features;
  OptConfig opt;
  MetaConfig meta;
  std::unique_ptr<ModulationNetwork> net;
  HuwState huw;
  Batch b1, b2, val;

  MetaContext context() const { return {&opt, &meta, &groups, &features}; }
  Tensor loss() const { return meta_loss(*model, *net, state, context(), b1, b2, val, huw).total; }
};

struct FixtureSpec {
  std::vector<std::size_t> layers{2, 8, 8, 1};
  Objective objective = Objective::combined;
  FeatureVersion version = FeatureVersion::basic;
  bool normalized = false;
  bool gating = false;
  std::size_t heads = 2;
  double head_scale = 0.3;
};

Fixture make_fixture(std::uint64_t seed, const FixtureSpec& spec) {
  Fixture f;
  Rng rng(seed);
  f.model = build_mlp(spec.layers, seed + 1);
  f.groups = build_groups(*f.model, GroupingStrategy::fine_grained);
  f.features.version = spec.version;
  f.features.normalized = spec.normalized;
  f.opt.lr = 0.05;
  f.meta.objective = spec.objective;

  // A few real steps so the moments are not zero.
  f.state = AdamState::zeros_like(*f.model);
  for (int i = 0; i < 3; ++i) {
    const Batch b = regression_batch(rng, 16);
    const auto g = grad(f.model->loss(b), f.model->values());
    adamw_step(*f.model, g, f.state, f.opt);
  }
  f.b1 = regression_batch(rng, 16);
  f.b2 = regression_batch(rng, 16);
  f.val = regression_batch(rng, 16);

  ModulationConfig base;
  base.n_layers = 1;
  base.n_heads = spec.heads;
  base.d_ff = 8;
  base.gating = spec.gating;
  base.gate_l1 = 1e-2;
  f.net = std::make_unique<ModulationNetwork>(
      modulation_config_for(f.features, f.groups.size(), base), seed + 2);
  if (spec.head_scale > 0.0) f.net->randomize_head(seed + 3, spec.head_scale);
  if (spec.gating) {
    auto& gate = f.net->weights().back().value;
    std::vector<double> logits(gate.size());
    for (auto& x : logits) x = rng.uniform(-1.0, 2.0);
    gate.assign(std::move(logits));
  }
  f.huw.s.assign(std::vector<double>{0.3, -0.2, 0.1});
  return f;
}

/// Autodiff vs central differences of the meta-loss over `targets`, taken
/// together as one vector.
double meta_error(Fixture& f, const std::vector<Tensor>& targets) {
  const auto analytic = grad(f.loss(), targets);
  std::vector<double> a, n;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    Tensor target = targets[k];
    const auto saved = target.to_vector();
    const Tensor numeric = finite_difference_gradient(
        [&](const Tensor& x) {
          target.assign(x.data());
          const double v = f.loss().item();
          target.assign(saved);
          return v;
        },
        target.detach());
    for (double v : analytic[k].data()) a.push_back(v);
    for (double v : numeric.data()) n.push_back(v);
  }
  return max_relative_error(Tensor({a.size()}, a), Tensor({n.size()}, n));
}

std::vector<Tensor> all_meta_weights(const Fixture& f) {
  auto w = f.net->weight_values();
  w.push_back(f.huw.s);
  return w;
}

}  // namespace

SuiteReport run_meta_gradient_suite(std::uint64_t seed, double threshold) {
  const auto start = std::chrono::steady_clock::now();
  SuiteReport report{"meta-gradient", {}, 0.0};

  auto check = [&](const std::string& name, const FixtureSpec& spec, bool head_only) {
    CheckResult r{name, INFINITY, threshold, false, {}};
    try {
      Fixture f = make_fixture(seed, spec);
      const auto targets = head_only ? std::vector<Tensor>{f.net->head_weight()} : all_meta_weights(f);
      r.max_rel_error = meta_error(f, targets);
      r.passed = r.max_rel_error < threshold;
      r.detail = std::to_string(f.model->weight_count()) + " model weights, " +
                 std::to_string(f.groups.size()) + " groups, " +
                 std::to_string(f.net->weight_count()) + " network weights";
    } catch (const std::exception& e) {
      r.detail = e.what();
    }
    report.checks.push_back(std::move(r));
  };

  check("combined_second_order", {}, false);
  check("gradient_objective", {.objective = Objective::gradient}, false);
  check("loss_objective", {.objective = Objective::loss}, false);
  check("basic_plus_normalized",
        {.version = FeatureVersion::basic_plus, .normalized = true, .heads = 11}, false);
  check("enhanced_gated",
        {.version = FeatureVersion::enhanced, .gating = true, .heads = 3}, false);
  check("loss_zero_head_small_model",
        {.layers = {2, 6, 1}, .objective = Objective::loss, .head_scale = 0.0}, true);

  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace metaadamw::harness
