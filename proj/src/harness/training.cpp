#include "metaadamw/harness/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

#include "metaadamw/autodiff.hpp"
#include "metaadamw/checkpoint.hpp"
#include "json.hpp"

namespace metaadamw::harness {

EarlyStopping::EarlyStopping(std::size_t patience, bool higher_is_better)
    : patience_(patience),
      higher_(higher_is_better),
      best_(higher_is_better ? -INFINITY : INFINITY) {
  if (patience == 0) throw std::invalid_argument("early stopping: patience must be >= 1");
}

bool EarlyStopping::update(double value) {
  ++epochs_;
  const bool better = higher_ ? value > best_ : value < best_;
  if (better) {
    best_ = value;
    best_epoch_ = epochs_;
    stale_ = 0;
    return false;
  }
  return ++stale_ >= patience_;
}

std::filesystem::path output_root() {
  const char* env = std::getenv("METAADAMW_OUT");
  return env && *env ? std::filesystem::path(env) : std::filesystem::path("runs");
}

namespace {

using Clock_ = std::chrono::steady_clock;

double since(Clock_::time_point t0) {
  return std::chrono::duration<double>(Clock_::now() - t0).count();
}

Batch draw(const Task& task, Split split, std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = static_cast<std::size_t>(rng.below(task.size(split)));
  return task.make_batch(split, idx);
}

Checkpoint model_checkpoint(const Model& model, std::uint64_t step) {
  Checkpoint c;
  c.kind = "model";
  c.step = step;
  for (const auto& p : model.parameters()) {
    c.arrays.push_back({p.meta.name, p.value.shape(), p.value.to_vector()});
  }
  return c;
}

void write_artifacts(const TrainingResult& r, const RunOptions& options, const Model& model,
                     const AdamState& state, const ModulationNetwork* net, const HuwState& huw) {
  const auto& dir = options.out_dir;
  std::filesystem::create_directories(dir);
  write_file((dir / "metrics.csv").string(), metrics_csv(r));
  write_file((dir / "meta_trace.csv").string(), meta_trace_csv(r));
  write_file((dir / "manifest.json").string(), manifest_json(r));
  write_file((dir / "config.txt").string(), to_text(r.config));
  if (!options.write_checkpoints) return;
  const auto step = static_cast<std::uint64_t>(state.t);
  write_file((dir / "model.ckpt").string(), encode_checkpoint(model_checkpoint(model, step)));
  write_file((dir / "optimizer.ckpt").string(), encode_adam_state(state));
  if (net) {
    write_file((dir / "modulation.ckpt").string(), net->serialize(step));
    Checkpoint h;
    h.kind = "huw";
    h.step = step;
    h.arrays.push_back({"s", {3}, huw.s.to_vector()});
    h.arrays.push_back({"priorities", {3}, {huw.priorities.begin(), huw.priorities.end()}});
    write_file((dir / "huw.ckpt").string(), encode_checkpoint(h));
  }
}

}  // namespace

TrainingResult run_training(const RunConfig& cfg, const RunOptions& options) {
  cfg.validate();
  TrainingResult r;
  r.config = cfg;
  const auto task = make_task(cfg.task, cfg.seed);
  auto model = task->make_model(cfg.seed);
  const auto groups = build_groups(*model, cfg.grouping);
  for (const auto& g : groups) r.group_labels.push_back(g.label);
  AdamState state = AdamState::zeros_like(*model);

  const bool meta = cfg.optimizer == OptimizerKind::meta_adamw;
  std::unique_ptr<ModulationNetwork> net;
  HuwState huw(cfg.priorities);
  if (meta) {
    const auto mc = modulation_config_for(cfg.features, groups.size(), cfg.modulation);
    r.warnings = mc.warnings();
    net = std::make_unique<ModulationNetwork>(mc, cfg.seed + 1);
  }
  const MetaContext ctx{&cfg.opt, &cfg.meta, &groups, &cfg.features};

  // Shuffling has its own stream so that both optimizers see the same
  // minibatch order; meta batches come from a second stream.
  Rng order_rng(cfg.seed * 2 + 11);
  Rng meta_rng(cfg.seed * 3 + 17);
  const std::size_t n_train = task->size(Split::train);
  const std::size_t steps_per_epoch = std::max<std::size_t>(1, n_train / cfg.batch_size);
  const std::size_t batch = std::min(cfg.batch_size, n_train);
  const auto warmup_steps = static_cast<std::int64_t>(cfg.meta.warmup_epochs * steps_per_epoch);
  const MetricKind kind = task->metric_kind();
  EarlyStopping stopper(cfg.patience, higher_is_better(kind));

  double cum = 0.0;
  std::vector<std::size_t> order(n_train);
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs && !r.aborted; ++epoch) {
    for (std::size_t i = 0; i < n_train; ++i) order[i] = i;
    order_rng.shuffle(order);
    Batch val_batch;
    if (meta && cfg.meta_updates) val_batch = draw(*task, Split::validation, cfg.val_batch_size, meta_rng);

    EpochRecord tr;
    tr.epoch = epoch;
    double loss_sum = 0.0;
    std::size_t rows = 0;
    std::size_t hits = 0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const auto t0 = Clock_::now();
      const std::span<const std::size_t> idx(order.data() + s * batch, batch);
      const Batch b = task->make_batch(Split::train, idx);
      StepTimings timing;
      Tensor out;
      double lv = 0.0;
      try {
        const auto params = model->values();
        out = model->forward(params, b);
        const Tensor loss = model->loss_kind() == LossKind::cross_entropy
                                ? cross_entropy(out, model->class_labels(b))
                                : mse_loss(out, b.targets);
        lv = loss.item();
        if (!std::isfinite(lv)) throw NumericError("non-finite training loss");
        const auto g = grad(loss, params);
        if (meta) {
          meta_adamw_step(*model, g, state, cfg.opt, *net, groups, cfg.features, &timing);
        } else {
          adamw_step(*model, g, state, cfg.opt);
        }
      } catch (const NumericError& e) {
        r.aborted = true;
        r.diagnostic = std::string(e.what()) + " at step " + std::to_string(state.t + 1) + " (epoch " +
                       std::to_string(epoch) + ")";
        break;
      }
      const double base = since(t0);
      tr.t_base += base - timing.features - timing.modulation;
      tr.t_feat += timing.features;
      tr.t_attn += timing.modulation;
      ++r.steps;
      loss_sum += lv * static_cast<double>(idx.size());
      rows += idx.size();
      if (kind == MetricKind::accuracy) hits += task->correct(out, b);

      if (meta && cfg.meta_updates && meta_update_due(state.t, cfg.meta.k_meta, warmup_steps)) {
        const auto tm = Clock_::now();
        const Batch b1 = draw(*task, Split::train, cfg.meta_batch_size, meta_rng);
        const Batch b2 = draw(*task, Split::train, cfg.meta_batch_size, meta_rng);
        auto rec = meta_update(*model, *net, state, ctx, b1, b2, val_batch, huw);
        const double dt = since(tm);
        tr.t_meta += dt;
        r.meta_skipped += rec.skipped ? 1 : 0;
        r.meta.push_back(std::move(rec));
      }
      tr.step_seconds += since(t0);
    }
    if (rows == 0 || r.aborted) break;

    const auto te = Clock_::now();
    Evaluation ev;
    try {
      ev = task->evaluate(*model, Split::validation);
    } catch (const NumericError& e) {
      ev.loss = ev.metric = std::nan("");
      r.aborted = true;
      r.diagnostic = std::string(e.what()) + " during validation (epoch " + std::to_string(epoch) + ")";
    }
    cum += tr.step_seconds + since(te);
    tr.loss = loss_sum / static_cast<double>(rows);
    tr.metric = kind == MetricKind::accuracy ? static_cast<double>(hits) / static_cast<double>(rows)
                                             : task->metric_from_loss(tr.loss);
    tr.cum_seconds = cum;
    r.total_t_meta += tr.t_meta;
    EpochRecord va;
    va.epoch = epoch;
    va.split = Split::validation;
    va.loss = ev.loss;
    va.metric = ev.metric;
    va.cum_seconds = cum;
    r.epochs.push_back(tr);
    r.epochs.push_back(va);
    r.epochs_run = epoch;

    const bool stop = stopper.update(kind == MetricKind::accuracy ? ev.metric : ev.loss);
    if (stopper.best_epoch() == epoch) {
      r.best_epoch = epoch;
      r.best_metric = ev.metric;
      r.best_loss = ev.loss;
    }
    if (stop || r.aborted) break;
  }
  r.total_seconds = cum;
  if (!options.out_dir.empty()) write_artifacts(r, options, *model, state, net.get(), huw);
  return r;
}

std::string metrics_csv(const TrainingResult& r) {
  const bool wall = r.config.clock == Clock::wall;
  auto t = [&](double x) { return wall ? format_double(x) : std::string("0"); };
  std::string out = "epoch,split,loss,metric,cum_seconds,t_base,t_feat,t_attn,t_meta\n";
  for (const auto& e : r.epochs) {
    out += std::to_string(e.epoch) + "," + (e.split == Split::train ? "train" : "val") + "," +
           format_double(e.loss) + "," + format_double(e.metric) + "," + t(e.cum_seconds) + "," +
           t(e.t_base) + "," + t(e.t_feat) + "," + t(e.t_attn) + "," + t(e.t_meta) + "\n";
  }
  return out;
}

std::string meta_trace_csv(const TrainingResult& r) {
  std::string out = "t,L_grad,L_loss,L_gap,L_meta,s1,s2,s3";
  for (const auto& label : r.group_labels) out += ",alpha_" + label + ",beta_" + label;
  out += "\n";
  const double nan = std::nan("");
  for (const auto& m : r.meta) {
    out += std::to_string(m.t);
    for (double x : {m.l_grad, m.l_loss, m.l_gap, m.l_meta}) out += "," + format_double(m.skipped ? nan : x);
    for (double s : m.s) out += "," + format_double(s);
    for (std::size_t g = 0; g < r.group_labels.size(); ++g) {
      out += "," + format_double(g < m.alpha.size() ? m.alpha[g] : nan);
      out += "," + format_double(g < m.beta.size() ? m.beta[g] : nan);
    }
    out += "\n";
  }
  return out;
}

std::string manifest_json(const TrainingResult& r) {
  using nlohmann::ordered_json;
  auto num = [](double x) -> ordered_json {
    if (std::isfinite(x)) return x;
    return nullptr;
  };
  ordered_json config = ordered_json::object();
  const std::string text = to_text(r.config);
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string line = text.substr(pos, nl - pos);
    const auto eq = line.find(" = ");
    config[line.substr(0, eq)] = line.substr(eq + 3);
    pos = nl + 1;
  }
  ordered_json j;
  j["format"] = 1;
  j["status"] = r.aborted ? "aborted" : "completed";
  if (r.aborted) j["diagnostic"] = r.diagnostic;
  j["task"] = r.config.task;
  j["optimizer"] = std::string(to_string(r.config.optimizer));
  j["seed"] = r.config.seed;
  j["config"] = config;
  j["groups"] = r.group_labels;
  j["steps"] = r.steps;
  j["epochs_run"] = r.epochs_run;
  j["best_epoch"] = r.best_epoch;
  j["best_metric"] = num(r.best_metric);
  j["best_loss"] = num(r.best_loss);
  j["meta_updates"] = r.meta.size();
  j["meta_skipped"] = r.meta_skipped;
  if (r.config.clock == Clock::wall) {
    j["total_seconds"] = r.total_seconds;
    j["meta_seconds"] = r.total_t_meta;
  }
  j["warnings"] = r.warnings;
  j["files"] = {"metrics.csv", "meta_trace.csv", "manifest.json", "config.txt"};
  return j.dump(2) + "\n";
}

}  // namespace metaadamw::harness
