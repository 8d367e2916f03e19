#include "metaadamw/optimizer.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "metaadamw/checkpoint.hpp"

namespace metaadamw {

void OptConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("optimizer: lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("optimizer: betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("optimizer: eps must be > 0");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("optimizer: weight_decay must be >= 0");
}

AdamState AdamState::zeros_like(const Model& model) {
  AdamState s;
  for (const auto& p : model.parameters()) {
    s.m.push_back(Tensor::zeros(p.value.shape()));
    s.v.push_back(Tensor::zeros(p.value.shape()));
  }
  return s;
}

namespace {

bool same_bits(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  const auto x = a.data();
  const auto y = b.data();
  return x.empty() || std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
}

}  // namespace

bool AdamState::identical(const AdamState& other) const {
  if (t != other.t || m.size() != other.m.size() || v.size() != other.v.size()) return false;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!same_bits(m[i], other.m[i]) || !same_bits(v[i], other.v[i])) return false;
  }
  return true;
}

AdamState AdamState::copy() const {
  AdamState s;
  s.t = t;
  for (const auto& x : m) s.m.push_back(x.detach());
  for (const auto& x : v) s.v.push_back(x.detach());
  return s;
}

namespace {

struct Moments {
  std::vector<std::vector<double>> m, v;
  /// m_hat / (sqrt(v_hat) + eps) per parameter.
  std::vector<std::vector<double>> direction;
  std::int64_t t = 0;
};

/// Moment recursions and the adaptive direction, without touching anything.
Moments advance(const Model& model, std::span<const Tensor> grads, const AdamState& state,
                const OptConfig& cfg) {
  cfg.validate();
  const auto& params = model.parameters();
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw std::invalid_argument("optimizer: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::size_t n = params[i].value.size();
    if (grads[i].size() != n || state.m[i].size() != n || state.v[i].size() != n) {
      throw ShapeError("optimizer: size mismatch for " + params[i].meta.name);
    }
    for (double g : grads[i].data()) {
      if (!std::isfinite(g)) {
        throw NumericError("optimizer: non-finite gradient for " + params[i].meta.name +
                           "; step refused");
      }
    }
  }
  Moments out;
  out.t = state.t + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(out.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(out.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto g = grads[i].data();
    const auto m0 = state.m[i].data();
    const auto v0 = state.v[i].data();
    std::vector<double> m(g.size()), v(g.size()), dir(g.size());
    for (std::size_t j = 0; j < g.size(); ++j) {
      m[j] = cfg.beta1 * m0[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v0[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      dir[j] = m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
    out.m.push_back(std::move(m));
    out.v.push_back(std::move(v));
    out.direction.push_back(std::move(dir));
  }
  return out;
}

/// alpha/beta per parameter from per-group values.
void expand_factors(const std::vector<ParamGroup>& groups, std::size_t n_params,
                    std::span<const double> alpha, std::span<const double> beta,
                    std::vector<double>& a_out, std::vector<double>& b_out) {
  if (alpha.size() != groups.size() || beta.size() != groups.size()) {
    throw std::invalid_argument("optimizer: one factor per group expected");
  }
  a_out.assign(n_params, 0.0);
  b_out.assign(n_params, 0.0);
  std::vector<int> seen(n_params, 0);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (auto i : groups[g].members) {
      if (i >= n_params || seen[i]++) throw std::invalid_argument("optimizer: groups do not partition the parameters");
      a_out[i] = alpha[g];
      b_out[i] = beta[g];
    }
  }
  for (int s : seen) {
    if (!s) throw std::invalid_argument("optimizer: groups do not cover every parameter");
  }
}

void apply(Model& model, AdamState& state, const OptConfig& cfg, Moments&& mo,
           const std::vector<double>& alpha, const std::vector<double>& beta) {
  auto& params = model.parameters();
  std::vector<std::vector<double>> next(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto p = params[i].value.data();
    const double coef = alpha[i] * cfg.lr;
    const double decay = beta[i] * cfg.weight_decay;
    next[i].resize(p.size());
    for (std::size_t j = 0; j < p.size(); ++j) {
      next[i][j] = p[j] - coef * (mo.direction[i][j] + decay * p[j]);
      if (!std::isfinite(next[i][j])) {
        throw NumericError("optimizer: step would make " + params[i].meta.name + " non-finite");
      }
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i].value.assign(std::move(next[i]));
    state.m[i] = Tensor(params[i].value.shape(), std::move(mo.m[i]));
    state.v[i] = Tensor(params[i].value.shape(), std::move(mo.v[i]));
  }
  state.t = mo.t;
}

}  // namespace

void adamw_step(Model& model, std::span<const Tensor> grads, AdamState& state, const OptConfig& cfg) {
  auto mo = advance(model, grads, state, cfg);
  const std::vector<double> ones(model.parameters().size(), 1.0);
  apply(model, state, cfg, std::move(mo), ones, ones);
}

void modulated_step(Model& model, std::span<const Tensor> grads, AdamState& state,
                    const OptConfig& cfg, const std::vector<ParamGroup>& groups,
                    std::span<const double> alpha, std::span<const double> beta) {
  std::vector<double> a, b;
  expand_factors(groups, model.parameters().size(), alpha, beta, a, b);
  auto mo = advance(model, grads, state, cfg);
  apply(model, state, cfg, std::move(mo), a, b);
}

ModulationFactors meta_adamw_step(Model& model, std::span<const Tensor> grads, AdamState& state,
                                  const OptConfig& cfg, const ModulationNetwork& net,
                                  const std::vector<ParamGroup>& groups,
                                  const FeatureOptions& features, StepTimings* timings) {
  using clock = std::chrono::steady_clock;
  NoGradGuard no_grad;
  const auto t0 = clock::now();
  auto out = net.gated_features(model, groups, grads, state, state.t, features);
  const auto t1 = clock::now();
  out.factors = net.modulate(out.features);
  const auto t2 = clock::now();
  if (out.factors.groups() != groups.size()) {
    throw std::invalid_argument("meta_adamw_step: factor count does not match group count");
  }
  modulated_step(model, grads, state, cfg, groups, out.factors.alpha.data(), out.factors.beta.data());
  if (timings) {
    const auto t3 = clock::now();
    timings->features = std::chrono::duration<double>(t1 - t0).count();
    timings->modulation = std::chrono::duration<double>(t2 - t1).count();
    timings->update = std::chrono::duration<double>(t3 - t2).count();
  }
  return out.factors;
}

std::vector<Tensor> hypothetical_step(const Model& model, std::span<const Tensor> grads,
                                      const AdamState& state, const OptConfig& cfg,
                                      const std::vector<ParamGroup>& groups,
                                      const ModulationFactors& factors) {
  if (factors.groups() != groups.size()) {
    throw std::invalid_argument("hypothetical_step: factor count does not match group count");
  }
  const auto& params = model.parameters();
  {
    std::vector<double> a, b;
    const std::vector<double> unit(groups.size(), 1.0);
    expand_factors(groups, params.size(), unit, unit, a, b);
  }
  auto mo = advance(model, grads, state, cfg);
  std::vector<std::size_t> owner(params.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (auto i : groups[g].members) owner[i] = g;
  }
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor p = params[i].value.detach();
    const Tensor dir(p.shape(), std::move(mo.direction[i]));
    const Tensor coef = element(factors.alpha, owner[i]) * cfg.lr;
    const Tensor decay = element(factors.beta, owner[i]) * cfg.weight_decay;
    out.push_back(p - coef * (dir + decay * p));
  }
  return out;
}

std::string encode_adam_state(const AdamState& state) {
  Checkpoint ckpt;
  ckpt.kind = "adam_state";
  ckpt.step = static_cast<std::uint64_t>(state.t);
  for (std::size_t i = 0; i < state.m.size(); ++i) {
    ckpt.arrays.push_back({"m" + std::to_string(i), state.m[i].shape(), state.m[i].to_vector()});
  }
  for (std::size_t i = 0; i < state.v.size(); ++i) {
    ckpt.arrays.push_back({"v" + std::to_string(i), state.v[i].shape(), state.v[i].to_vector()});
  }
  return encode_checkpoint(ckpt);
}

AdamState decode_adam_state(std::string_view blob) {
  const Checkpoint ckpt = decode_checkpoint(blob);
  if (ckpt.kind != "adam_state") throw CheckpointError("checkpoint holds '" + ckpt.kind + "', not optimizer state");
  if (ckpt.arrays.size() % 2 != 0) throw CheckpointError("optimizer checkpoint: unpaired moments");
  AdamState s;
  s.t = static_cast<std::int64_t>(ckpt.step);
  const std::size_t n = ckpt.arrays.size() / 2;
  for (std::size_t i = 0; i < n; ++i) {
    s.m.push_back(Tensor(ckpt.arrays[i].shape, ckpt.arrays[i].data));
    s.v.push_back(Tensor(ckpt.arrays[n + i].shape, ckpt.arrays[n + i].data));
  }
  return s;
}

}  // namespace metaadamw
