#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "metaadamw/features.hpp"
#include "metaadamw/grouping.hpp"
#include "metaadamw/model.hpp"
#include "metaadamw/modulation.hpp"
#include "metaadamw/optimizer.hpp"

namespace metaadamw {

enum class Objective { gradient, loss, gap, combined };

std::string_view to_string(Objective objective);
Objective parse_objective(std::string_view text);

struct MetaConfig {
  Objective objective = Objective::combined;
  std::size_t k_meta = 10;
  std::size_t warmup_epochs = 1;
  double meta_lr = 1e-3;
  /// Treat the post-step gradients g' as constants.
  bool first_order = false;
  double s_clamp = 6.0;

  void validate() const;
};

/// Learnable log-variances s_i = log sigma_i^2 for the gradient-alignment,
/// loss-decrease and generalization-gap terms, with fixed priorities.
struct HuwState {
  Tensor s = Tensor::vector({0.0, 0.0, 0.0}, true);
  std::array<double, 3> priorities{1.0, 1.0, 1.0};

  explicit HuwState(std::array<double, 3> p = {1.0, 1.0, 1.0});
  std::array<double, 3> values() const;
  void clamp(double bound);
};

struct MetaRecord {
  std::int64_t t = 0;
  double l_grad = 0.0;
  double l_loss = 0.0;
  double l_gap = 0.0;
  double l_meta = 0.0;
  std::array<double, 3> s{};
  std::vector<double> alpha;
  std::vector<double> beta;
  double seconds = 0.0;
  /// Set when the meta-loss was not finite and no weights changed.
  bool skipped = false;
  std::string note;
};

/// (1/G) sum_g lambda1_g ||g'_g||^2 - lambda2_g cos(g_g, g'_g).
Tensor grad_alignment_loss(const std::vector<Tensor>& g, const std::vector<Tensor>& g_new,
                           const Tensor& lambda1, const Tensor& lambda2);

/// L_val(theta') - L_val(theta).
Tensor loss_decrease(const Model& model, std::span<const Tensor> theta,
                     std::span<const Tensor> theta_new, const Batch& val);

/// |L_train(theta, B1) - L_val(theta)|.
Tensor generalization_gap(const Model& model, std::span<const Tensor> theta, const Batch& train,
                          const Batch& val);

/// sum_i 0.5 exp(-s_i) L_i + p_i 0.5 s_i.
Tensor huw_combine(const std::array<Tensor, 3>& losses, const HuwState& huw);

/// One gradient-descent step on s alone with the losses held fixed.
void huw_step(const std::array<double, 3>& losses, HuwState& huw, double lr, double clamp_bound);

/// Everything the meta-update adjusts besides the network weights.
struct MetaContext {
  const OptConfig* opt = nullptr;
  const MetaConfig* meta = nullptr;
  const std::vector<ParamGroup>* groups = nullptr;
  const FeatureOptions* features = nullptr;
};

/// Builds the meta-loss for the current parameters without changing
/// anything. Exposed for gradient checking.
struct MetaLoss {
  Tensor total;
  Tensor l_grad, l_loss, l_gap;
  ModulationFactors factors;
};

MetaLoss meta_loss(const Model& model, const ModulationNetwork& net, const AdamState& state,
                   const MetaContext& ctx, const Batch& b1, const Batch& b2, const Batch& val,
                   const HuwState& huw);

/// One meta-update: snapshot, hypothetical step, meta-loss, gradient descent
/// on the network weights and s, clamp, restore. The model parameters and
/// optimizer state are unchanged afterwards.
MetaRecord meta_update(Model& model, ModulationNetwork& net, const AdamState& state,
                       const MetaContext& ctx, const Batch& b1, const Batch& b2, const Batch& val,
                       HuwState& huw);

/// True when the loop should call meta_update after completing step t.
bool meta_update_due(std::int64_t t, std::size_t k_meta, std::int64_t warmup_steps);

}  // namespace metaadamw
