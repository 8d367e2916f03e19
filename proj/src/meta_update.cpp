#include "metaadamw/meta_update.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "metaadamw/autodiff.hpp"

namespace metaadamw {

std::string_view to_string(Objective objective) {
  switch (objective) {
    case Objective::gradient: return "gradient";
    case Objective::loss: return "loss";
    case Objective::gap: return "gap";
    case Objective::combined: return "combined";
  }
  return "combined";
}

Objective parse_objective(std::string_view text) {
  if (text == "gradient") return Objective::gradient;
  if (text == "loss") return Objective::loss;
  if (text == "gap") return Objective::gap;
  if (text == "combined") return Objective::combined;
  throw std::invalid_argument("unknown objective '" + std::string(text) + "'");
}

void MetaConfig::validate() const {
  if (k_meta < 1) throw std::invalid_argument("meta: k_meta must be >= 1");
  if (!(meta_lr > 0.0)) throw std::invalid_argument("meta: meta_lr must be > 0");
  if (!(s_clamp > 0.0)) throw std::invalid_argument("meta: s_clamp must be > 0");
}

HuwState::HuwState(std::array<double, 3> p) : priorities(p) {
  for (double x : p) {
    if (!(x > 0.0)) throw std::invalid_argument("huw: priorities must be positive");
  }
}

std::array<double, 3> HuwState::values() const { return {s[0], s[1], s[2]}; }

void HuwState::clamp(double bound) {
  auto v = s.to_vector();
  for (auto& x : v) x = std::clamp(x, -bound, bound);
  s.assign(std::move(v));
}

Tensor grad_alignment_loss(const std::vector<Tensor>& g, const std::vector<Tensor>& g_new,
                           const Tensor& lambda1, const Tensor& lambda2) {
  const std::size_t n = g.size();
  if (n == 0 || g_new.size() != n || lambda1.size() != n || lambda2.size() != n) {
    throw std::invalid_argument("grad_alignment_loss: group count mismatch");
  }
  Tensor total;
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor term = element(lambda1, i) * sum(square(g_new[i])) -
                        element(lambda2, i) * cosine_similarity(g[i], g_new[i]);
    total = i == 0 ? term : total + term;
  }
  return total / static_cast<double>(n);
}

namespace {

Tensor checked_loss(const Model& model, std::span<const Tensor> params, const Batch& batch) {
  if (batch.size() == 0) throw std::invalid_argument("meta-update: empty batch");
  Tensor l = model.loss_with(params, batch);
  if (!std::isfinite(l.item())) throw NumericError("meta-update: non-finite loss");
  return l;
}

}  // namespace

Tensor loss_decrease(const Model& model, std::span<const Tensor> theta,
                     std::span<const Tensor> theta_new, const Batch& val) {
  Tensor before;
  {
    NoGradGuard no_grad;
    before = checked_loss(model, theta, val);
  }
  return checked_loss(model, theta_new, val) - before;
}

Tensor generalization_gap(const Model& model, std::span<const Tensor> theta, const Batch& train,
                          const Batch& val) {
  return abs(checked_loss(model, theta, train) - checked_loss(model, theta, val));
}

Tensor huw_combine(const std::array<Tensor, 3>& losses, const HuwState& huw) {
  Tensor total;
  for (std::size_t i = 0; i < 3; ++i) {
    const Tensor s = element(huw.s, i);
    const Tensor term = 0.5 * exp(-s) * losses[i] + huw.priorities[i] * 0.5 * s;
    total = i == 0 ? term : total + term;
  }
  return total;
}

void huw_step(const std::array<double, 3>& losses, HuwState& huw, double lr, double clamp_bound) {
  const Tensor total = huw_combine(
      {Tensor::scalar(losses[0]), Tensor::scalar(losses[1]), Tensor::scalar(losses[2])}, huw);
  const Tensor g = grad(total, {huw.s})[0];
  std::vector<double> s = huw.s.to_vector();
  for (std::size_t i = 0; i < 3; ++i) s[i] -= lr * g[i];
  huw.s.assign(std::move(s));
  huw.clamp(clamp_bound);
}

MetaLoss meta_loss(const Model& model, const ModulationNetwork& net, const AdamState& state,
                   const MetaContext& ctx, const Batch& b1, const Batch& b2, const Batch& val,
                   const HuwState& huw) {
  if (!ctx.opt || !ctx.meta || !ctx.groups || !ctx.features) {
    throw std::invalid_argument("meta-update: incomplete context");
  }
  const auto& groups = *ctx.groups;
  const auto theta = model.values();

  // Gradients on B1 are plain data.
  const Tensor l_train = checked_loss(model, theta, b1);
  const auto g = grad(l_train, theta);

  const auto out = net.run(model, groups, g, state, state.t, *ctx.features);
  const auto theta_new = hypothetical_step(model, g, state, *ctx.opt, groups, out.factors);

  const Tensor l_b2 = checked_loss(model, theta_new, b2);
  auto g_new = grad(l_b2, theta_new, {.create_graph = !ctx.meta->first_order, .retain_graph = true});
  if (ctx.meta->first_order) {
    for (auto& x : g_new) x = x.detach();
  }
  std::vector<Tensor> per_group, per_group_new;
  for (const auto& grp : groups) {
    per_group.push_back(group_gradient(grp, g));
    per_group_new.push_back(group_gradient(grp, g_new));
  }

  MetaLoss ml;
  ml.factors = out.factors;
  ml.l_grad = grad_alignment_loss(per_group, per_group_new, out.factors.lambda1, out.factors.lambda2);
  ml.l_loss = loss_decrease(model, theta, theta_new, val);
  {
    NoGradGuard no_grad;
    ml.l_gap = abs(l_train.detach() - checked_loss(model, theta, val));
  }
  switch (ctx.meta->objective) {
    case Objective::gradient: ml.total = ml.l_grad; break;
    case Objective::loss: ml.total = ml.l_loss; break;
    case Objective::gap: ml.total = ml.l_gap; break;
    case Objective::combined: ml.total = huw_combine({ml.l_grad, ml.l_loss, ml.l_gap}, huw); break;
  }
  if (net.config().gating) ml.total = ml.total + out.gate_penalty;
  return ml;
}

MetaRecord meta_update(Model& model, ModulationNetwork& net, const AdamState& state,
                       const MetaContext& ctx, const Batch& b1, const Batch& b2, const Batch& val,
                       HuwState& huw) {
  const auto start = std::chrono::steady_clock::now();
  ctx.meta->validate();
  MetaRecord rec;
  rec.t = state.t;

  std::vector<std::vector<double>> snapshot;
  for (const auto& p : model.parameters()) snapshot.push_back(p.value.to_vector());

  auto finish = [&] {
    auto& params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i].value.assign(snapshot[i]);
    rec.s = huw.values();
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rec;
  };

  MetaLoss ml;
  try {
    ml = meta_loss(model, net, state, ctx, b1, b2, val, huw);
  } catch (const NumericError& e) {
    rec.skipped = true;
    rec.note = e.what();
    return finish();
  }
  rec.l_grad = ml.l_grad.item();
  rec.l_loss = ml.l_loss.item();
  rec.l_gap = ml.l_gap.item();
  rec.l_meta = ml.total.item();
  rec.alpha = ml.factors.alpha.to_vector();
  rec.beta = ml.factors.beta.to_vector();

  std::vector<Tensor> wrt = net.weight_values();
  wrt.push_back(huw.s);
  std::vector<Tensor> grads;
  try {
    grads = grad(ml.total, wrt);
  } catch (const NumericError& e) {
    rec.skipped = true;
    rec.note = e.what();
    return finish();
  }
  for (const auto& gt : grads) {
    for (double v : gt.data()) {
      if (!std::isfinite(v)) {
        rec.skipped = true;
        rec.note = "non-finite meta-gradient";
        return finish();
      }
    }
  }
  const double lr = ctx.meta->meta_lr;
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    auto w = wrt[k].to_vector();
    const auto gk = grads[k].data();
    for (std::size_t j = 0; j < w.size(); ++j) w[j] -= lr * gk[j];
    wrt[k].assign(std::move(w));
  }
  huw.clamp(ctx.meta->s_clamp);
  return finish();
}

bool meta_update_due(std::int64_t t, std::size_t k_meta, std::int64_t warmup_steps) {
  if (k_meta == 0) return false;
  return t > 0 && t % static_cast<std::int64_t>(k_meta) == 0 && t >= warmup_steps;
}

}  // namespace metaadamw
