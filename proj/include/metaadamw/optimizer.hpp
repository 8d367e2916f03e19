#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "metaadamw/features.hpp"
#include "metaadamw/grouping.hpp"
#include "metaadamw/model.hpp"
#include "metaadamw/modulation.hpp"

namespace metaadamw {

struct OptConfig {
  double lr = 5e-4;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  /// Throws std::invalid_argument on out-of-range values.
  void validate() const;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t t = 0;

  static AdamState zeros_like(const Model& model);
  /// Bitwise comparison of m, v and t.
  bool identical(const AdamState& other) const;
  AdamState copy() const;
};

/// One decoupled-weight-decay Adam step on the model's parameters, in place.
void adamw_step(Model& model, std::span<const Tensor> grads, AdamState& state, const OptConfig& cfg);

/// Seconds spent in each phase of one meta_adamw_step.
struct StepTimings {
  double features = 0.0;
  double modulation = 0.0;
  double update = 0.0;
};

/// Features -> modulation -> per-group step. Moments are updated exactly as
/// in adamw_step; the factors only scale the displacement. Returns the
/// factors used.
ModulationFactors meta_adamw_step(Model& model, std::span<const Tensor> grads, AdamState& state,
                                  const OptConfig& cfg, const ModulationNetwork& net,
                                  const std::vector<ParamGroup>& groups, const FeatureOptions& features,
                                  StepTimings* timings = nullptr);

/// Applies caller-supplied per-group factors (no network involved).
void modulated_step(Model& model, std::span<const Tensor> grads, AdamState& state,
                    const OptConfig& cfg, const std::vector<ParamGroup>& groups,
                    std::span<const double> alpha, std::span<const double> beta);

/// The parameters one modulated step would produce, as new tensors that stay
/// connected to factors.alpha and factors.beta. Neither the model nor the
/// state is touched.
std::vector<Tensor> hypothetical_step(const Model& model, std::span<const Tensor> grads,
                                      const AdamState& state, const OptConfig& cfg,
                                      const std::vector<ParamGroup>& groups,
                                      const ModulationFactors& factors);

std::string encode_adam_state(const AdamState& state);
AdamState decode_adam_state(std::string_view blob);

}  // namespace metaadamw
