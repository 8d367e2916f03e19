#include "metaadamw/modulation.hpp"

#include <cmath>
#include <stdexcept>

#include "metaadamw/checkpoint.hpp"
#include "metaadamw/numeric.hpp"
#include "metaadamw/optimizer.hpp"

namespace metaadamw {

void ModulationConfig::validate() const {
  if (feature_dim == 0) throw std::invalid_argument("modulation: feature_dim must be positive");
  if (n_heads == 0 || feature_dim % n_heads != 0) {
    throw std::invalid_argument("modulation: feature_dim " + std::to_string(feature_dim) +
                                " not divisible by " + std::to_string(n_heads) + " heads");
  }
  if (d_ff == 0) throw std::invalid_argument("modulation: d_ff must be positive");
  if (!(range_alpha > 0.0) || !(range_beta > 0.0) || range_alpha > 2.0 || range_beta > 2.0) {
    throw std::invalid_argument("modulation: ranges must lie in (0, 2]");
  }
  if (gate_l1 < 0.0) throw std::invalid_argument("modulation: gate_l1 must be >= 0");
  if (embedding_width > 0 && groups == 0) {
    throw std::invalid_argument("modulation: group embedding needs a group count");
  }
}

std::vector<std::string> ModulationConfig::warnings() const {
  std::vector<std::string> out;
  if (n_layers > 16) {
    out.push_back("modulation encoder has " + std::to_string(n_layers) +
                  " layers; expect a slow meta-update");
  }
  return out;
}

ModulationNetwork::ModulationNetwork(const ModulationConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const std::size_t d = cfg_.feature_dim;
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    for (auto& s : make_encoder_block("encoder" + std::to_string(l), d, cfg_.d_ff, rng)) {
      weights_.push_back({std::move(s.name), Tensor(std::move(s.shape), std::move(s.data), true)});
    }
  }
  head_index_ = weights_.size();
  weights_.push_back({"head.weight", Tensor({d, 4}, std::vector<double>(d * 4, 0.0), true)});
  weights_.push_back({"head.bias", Tensor({4}, std::vector<double>(4, 0.0), true)});
  if (cfg_.embedding_width > 0) {
    embedding_index_ = weights_.size();
    std::vector<double> table(cfg_.groups * cfg_.embedding_width);
    for (auto& x : table) x = 0.1 * rng.normal();
    weights_.push_back({"group_embedding", Tensor({cfg_.groups, cfg_.embedding_width}, std::move(table), true)});
  }
  if (cfg_.gating) {
    gate_index_ = weights_.size();
    // sigmoid(4) ~ 0.98: gates start nearly open.
    weights_.push_back({"gate.logits", Tensor({d}, std::vector<double>(d, 4.0), true)});
  }
}

std::vector<Tensor> ModulationNetwork::weight_values() const {
  std::vector<Tensor> out;
  out.reserve(weights_.size());
  for (const auto& w : weights_) out.push_back(w.value);
  return out;
}

std::size_t ModulationNetwork::weight_count() const {
  std::size_t n = 0;
  for (const auto& w : weights_) n += w.value.size();
  return n;
}

Tensor ModulationNetwork::group_embedding() const {
  return cfg_.embedding_width > 0 ? weights_[embedding_index_].value : Tensor();
}

Tensor ModulationNetwork::gate_logits() const {
  return cfg_.gating ? weights_[gate_index_].value : Tensor();
}

void ModulationNetwork::randomize_head(std::uint64_t seed, double scale) {
  Rng rng(seed);
  for (std::size_t k = head_index_; k < head_index_ + 2; ++k) {
    std::vector<double> v(weights_[k].value.size());
    for (auto& x : v) x = scale * rng.normal();
    weights_[k].value.assign(std::move(v));
  }
}

ModulationFactors ModulationNetwork::modulate(const Tensor& features) const {
  if (features.rank() != 2 || features.dim(1) != cfg_.feature_dim) {
    throw ShapeError("modulate: features " + to_string(features.shape()) + " do not have " +
                     std::to_string(cfg_.feature_dim) + " columns");
  }
  const std::size_t g = features.dim(0);
  if (g == 0) throw ShapeError("modulate: no groups");
  const auto w = weight_values();
  Tensor h = reshape(features, {1, g, cfg_.feature_dim});
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    // Exact accumulation over tokens keeps the output independent of row
    // order, bit for bit.
    h = encoder_block(h, encoder_block_at(w, l * kEncoderBlockTensors), cfg_.n_heads, Tensor(),
                      Accumulation::exact);
  }
  const Tensor z = reshape(h, {g, cfg_.feature_dim});
  ModulationFactors f;
  f.raw = clamp(matmul(z, head_weight()) + head_bias(), -kRawLimit, kRawLimit);
  auto column = [&](std::size_t j) { return sigmoid(reshape(slice(f.raw, 1, j, 1), {g})); };
  f.alpha = 1.0 + cfg_.range_alpha * (column(0) - 0.5);
  f.beta = 1.0 + cfg_.range_beta * (column(1) - 0.5);
  f.lambda1 = column(2);
  f.lambda2 = column(3);
  return f;
}

ModulationNetwork::Output ModulationNetwork::gated_features(const Model& model,
                                                            const std::vector<ParamGroup>& groups,
                                                            std::span<const Tensor> grads,
                                                            const AdamState& state, std::int64_t t,
                                                            const FeatureOptions& options) const {
  Output out;
  out.features = extract_features(model, groups, grads, state, t, options, group_embedding());
  if (cfg_.gating) {
    auto [gated, penalty] = apply_gate(out.features, gate_logits(), cfg_.gate_l1);
    out.features = std::move(gated);
    out.gate_penalty = penalty;
  } else {
    out.gate_penalty = Tensor::scalar(0.0);
  }
  return out;
}

ModulationNetwork::Output ModulationNetwork::run(const Model& model, const std::vector<ParamGroup>& groups,
                                                 std::span<const Tensor> grads, const AdamState& state,
                                                 std::int64_t t, const FeatureOptions& options) const {
  Output out = gated_features(model, groups, grads, state, t, options);
  out.factors = modulate(out.features);
  return out;
}

namespace {

std::vector<double> config_row(const ModulationConfig& c) {
  return {static_cast<double>(c.feature_dim), static_cast<double>(c.n_layers),
          static_cast<double>(c.n_heads),     static_cast<double>(c.d_ff),
          c.range_alpha,                       c.range_beta,
          c.gating ? 1.0 : 0.0,                c.gate_l1,
          static_cast<double>(c.groups),       static_cast<double>(c.embedding_width)};
}

}  // namespace

std::string ModulationNetwork::serialize(std::uint64_t step) const {
  Checkpoint ckpt;
  ckpt.kind = "modulation";
  ckpt.step = step;
  auto row = config_row(cfg_);
  ckpt.arrays.push_back({"config", {row.size()}, row});
  for (const auto& w : weights_) ckpt.arrays.push_back({w.name, w.value.shape(), w.value.to_vector()});
  return encode_checkpoint(ckpt);
}

ModulationNetwork ModulationNetwork::deserialize(std::string_view blob) {
  const Checkpoint ckpt = decode_checkpoint(blob);
  if (ckpt.kind != "modulation") throw CheckpointError("checkpoint holds '" + ckpt.kind + "', not a modulation network");
  if (ckpt.arrays.empty() || ckpt.arrays[0].name != "config" || ckpt.arrays[0].data.size() != 10) {
    throw CheckpointError("modulation checkpoint: missing config record");
  }
  const auto& c = ckpt.arrays[0].data;
  ModulationConfig cfg;
  cfg.feature_dim = static_cast<std::size_t>(c[0]);
  cfg.n_layers = static_cast<std::size_t>(c[1]);
  cfg.n_heads = static_cast<std::size_t>(c[2]);
  cfg.d_ff = static_cast<std::size_t>(c[3]);
  cfg.range_alpha = c[4];
  cfg.range_beta = c[5];
  cfg.gating = c[6] != 0.0;
  cfg.gate_l1 = c[7];
  cfg.groups = static_cast<std::size_t>(c[8]);
  cfg.embedding_width = static_cast<std::size_t>(c[9]);
  ModulationNetwork net(cfg, 0);
  if (ckpt.arrays.size() != net.weights_.size() + 1) {
    throw CheckpointError("modulation checkpoint: tensor count does not match its config");
  }
  for (std::size_t i = 0; i < net.weights_.size(); ++i) {
    const auto& a = ckpt.arrays[i + 1];
    auto& w = net.weights_[i];
    if (a.name != w.name || a.shape != w.value.shape()) {
      throw CheckpointError("modulation checkpoint: unexpected tensor " + a.name + " " + to_string(a.shape));
    }
    w.value.assign(a.data);
  }
  return net;
}

ModulationConfig modulation_config_for(const FeatureOptions& options, std::size_t groups,
                                       ModulationConfig base) {
  base.feature_dim = feature_dim(options);
  base.groups = groups;
  base.embedding_width = options.version == FeatureVersion::enhanced ? options.embedding_width : 0;
  return base;
}

}  // namespace metaadamw
