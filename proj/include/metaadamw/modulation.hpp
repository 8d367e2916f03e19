#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "metaadamw/features.hpp"
#include "metaadamw/grouping.hpp"
#include "metaadamw/model.hpp"

namespace metaadamw {

struct AdamState;

struct ModulationConfig {
  /// Token width; must equal the feature column count.
  std::size_t feature_dim = 6;
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  std::size_t d_ff = 16;
  double range_alpha = 1.0;
  double range_beta = 1.0;
  bool gating = false;
  double gate_l1 = 1e-3;
  /// Rows of the learnable group embedding (enhanced features only).
  std::size_t groups = 0;
  std::size_t embedding_width = 0;

  void validate() const;
  /// Non-fatal oddities worth reporting, such as very deep encoders.
  std::vector<std::string> warnings() const;
};

/// Raw head outputs are clamped to this magnitude before squashing, which
/// keeps every factor strictly inside its open interval.
constexpr double kRawLimit = 30.0;

struct ModulationFactors {
  /// (G, 4) head outputs after clamping.
  Tensor raw;
  /// (G) each.
  Tensor alpha, beta, lambda1, lambda2;

  std::size_t groups() const { return alpha.defined() ? alpha.size() : 0; }
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

class ModulationNetwork {
 public:
  ModulationNetwork(const ModulationConfig& cfg, std::uint64_t seed);

  const ModulationConfig& config() const { return cfg_; }
  /// Every trainable tensor: encoder blocks, head, then the optional group
  /// embedding and gate logits.
  const std::vector<NamedTensor>& weights() const { return weights_; }
  std::vector<NamedTensor>& weights() { return weights_; }
  std::vector<Tensor> weight_values() const;
  std::size_t weight_count() const;

  const Tensor& head_weight() const { return weights_[head_index_].value; }
  const Tensor& head_bias() const { return weights_[head_index_ + 1].value; }
  /// Undefined unless enabled.
  Tensor group_embedding() const;
  Tensor gate_logits() const;

  /// Overwrites the zero head with small random values (tests and
  /// diagnostics; a fresh network always starts from a zero head).
  void randomize_head(std::uint64_t seed, double scale);

  /// Encoder over the G rows of F (no positions, no mask), linear head,
  /// squashing.
  ModulationFactors modulate(const Tensor& features) const;
  ModulationFactors modulate(const FeatureMatrix& features) const { return modulate(features.values); }

  struct Output {
    FeatureMatrix features;
    ModulationFactors factors;
    /// Gate L1 penalty; zero when gating is off.
    Tensor gate_penalty;
  };

  /// extract_features -> optional gate. `factors` is left empty.
  Output gated_features(const Model& model, const std::vector<ParamGroup>& groups,
                        std::span<const Tensor> grads, const AdamState& state, std::int64_t t,
                        const FeatureOptions& options) const;

  /// gated_features -> modulate.
  Output run(const Model& model, const std::vector<ParamGroup>& groups, std::span<const Tensor> grads,
             const AdamState& state, std::int64_t t, const FeatureOptions& options) const;

  std::string serialize(std::uint64_t step = 0) const;
  static ModulationNetwork deserialize(std::string_view blob);

 private:
  ModulationNetwork() = default;

  ModulationConfig cfg_;
  std::vector<NamedTensor> weights_;
  std::size_t head_index_ = 0;
  std::size_t embedding_index_ = 0;
  std::size_t gate_index_ = 0;
};

/// The network configuration implied by feature options, with the group
/// embedding sized for `groups`.
ModulationConfig modulation_config_for(const FeatureOptions& options, std::size_t groups,
                                       ModulationConfig base = {});

}  // namespace metaadamw
