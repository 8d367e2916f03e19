#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "metaadamw/numeric.hpp"
#include "metaadamw/ops.hpp"
#include "metaadamw/tensor.hpp"

namespace metaadamw {

enum class LayerType { embedding, attention, feed_forward, layer_norm, other };

std::string_view to_string(LayerType type);

struct ParamMeta {
  std::string name;
  LayerType layer_type = LayerType::other;
  std::size_t depth_index = 0;
  bool is_bias = false;
};

struct Parameter {
  Tensor value;
  ParamMeta meta;
};

/// One minibatch. Which fields are used depends on the model:
///   forecasting transformer: inputs (B, T, F), targets (B, 1)
///   language model: tokens and labels, rows x cols, row-major
///   MLP: inputs (B, in), and targets (B, out) or labels (B)
struct Batch {
  Tensor inputs;
  Tensor targets;
  std::vector<std::size_t> tokens;
  std::vector<std::size_t> labels;
  std::size_t rows = 0;
  std::size_t cols = 0;

  /// Number of examples (sequences for token batches).
  std::size_t size() const;
};

enum class LossKind { mse, cross_entropy };

Tensor mse_loss(const Tensor& prediction, const Tensor& target);
/// Mean over rows of -log softmax(logits)[label]; logits are (N, V).
Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels);

class Model {
 public:
  virtual ~Model() = default;

  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<Parameter>& parameters() { return params_; }
  std::vector<Tensor> values() const;
  std::size_t depth_count() const { return depth_count_; }
  /// Total number of scalar weights.
  std::size_t weight_count() const;
  LossKind loss_kind() const { return loss_kind_; }

  /// Predictions (regression) or logits (classification) computed from an
  /// explicit parameter list, so hypothetical parameters can be evaluated.
  virtual Tensor forward(std::span<const Tensor> params, const Batch& batch) const = 0;

  Tensor loss(const Batch& batch) const;
  Tensor loss_with(std::span<const Tensor> params, const Batch& batch) const;
  /// Targets aligned with forward()'s rows for cross-entropy models.
  virtual const std::vector<std::size_t>& class_labels(const Batch& batch) const;

  /// Independent copy: parameters are new leaves with the same values.
  std::unique_ptr<Model> clone() const;

 protected:
  Model(std::size_t depth_count, LossKind loss_kind) : depth_count_(depth_count), loss_kind_(loss_kind) {}
  Model(const Model&) = default;

  void add_parameter(std::string name, Shape shape, std::vector<double> data, LayerType type,
                     std::size_t depth, bool is_bias);
  void check_params(std::span<const Tensor> params) const;
  virtual std::unique_ptr<Model> copy() const = 0;

 private:
  std::vector<Parameter> params_;
  std::size_t depth_count_;
  LossKind loss_kind_;
};

/// Fully connected network with tanh hidden activations. Layer i holds
/// fc{i}.weight (in x out) and fc{i}.bias at depth i.
std::unique_ptr<Model> build_mlp(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed,
                                 LossKind loss = LossKind::mse);

enum class TransformerMode {
  /// Real-valued feature sequences; the last position predicts `outputs`
  /// values.
  forecasting,
  /// Token sequences with a causal mask; every position predicts the next
  /// token.
  language_model,
};

struct TransformerConfig {
  std::size_t d_model = 8;
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  /// Feed-forward width; 0 means 2 * d_model.
  std::size_t d_ff = 0;
  /// Feature count (forecasting) or vocabulary size (language model).
  std::size_t vocab_or_features = 1;
  std::size_t outputs = 1;
  TransformerMode mode = TransformerMode::forecasting;
};

std::unique_ptr<Model> build_tiny_transformer(const TransformerConfig& cfg, std::uint64_t seed);

std::unique_ptr<Model> build_tiny_transformer(std::size_t d_model, std::size_t n_layers,
                                              std::size_t n_heads, std::size_t vocab_or_features,
                                              std::uint64_t seed,
                                              TransformerMode mode = TransformerMode::forecasting);

Tensor model_loss(const Model& model, const Batch& batch);

/// Fixed sinusoidal position table (T, d).
Tensor sinusoidal_positions(std::size_t length, std::size_t d_model);

/// Weights of one pre-norm encoder block, in the order they are stored.
struct EncoderBlock {
  Tensor ln1_gain, ln1_shift;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gain, ln2_shift;
  Tensor w1, b1, w2, b2;
};

constexpr std::size_t kEncoderBlockTensors = 16;

/// Name, shape and initial values of one trainable tensor.
struct ParamSpec {
  std::string name;
  Shape shape;
  std::vector<double> data;
  LayerType layer_type = LayerType::other;
  bool is_bias = false;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weight of shape (fan_in, fan_out).
std::vector<double> init_weight(Rng& rng, std::size_t fan_in, std::size_t fan_out);

/// Freshly initialized block weights named `prefix`.*, in EncoderBlock order.
std::vector<ParamSpec> make_encoder_block(const std::string& prefix, std::size_t d_model,
                                          std::size_t d_ff, Rng& rng);

/// Reads a block from 16 consecutive tensors.
EncoderBlock encoder_block_at(std::span<const Tensor> params, std::size_t offset);

/// h (B, T, d) -> (B, T, d). `mask` is an additive (T, T) score mask or
/// undefined. The attention-weighted sum over positions uses `acc`.
Tensor encoder_block(const Tensor& h, const EncoderBlock& w, std::size_t n_heads,
                     const Tensor& mask, Accumulation acc = Accumulation::fast);

}  // namespace metaadamw
