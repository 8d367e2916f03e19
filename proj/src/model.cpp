#include "metaadamw/model.hpp"

#include <cmath>

namespace metaadamw {

std::string_view to_string(LayerType type) {
  switch (type) {
    case LayerType::embedding: return "embedding";
    case LayerType::attention: return "attention";
    case LayerType::feed_forward: return "feed_forward";
    case LayerType::layer_norm: return "layer_norm";
    case LayerType::other: return "other";
  }
  return "other";
}

std::size_t Batch::size() const {
  if (rows > 0) return rows;
  if (inputs.defined()) return inputs.dim(0);
  return labels.size();
}

Tensor mse_loss(const Tensor& prediction, const Tensor& target) {
  if (prediction.shape() != target.shape()) {
    throw ShapeError("mse_loss: prediction " + to_string(prediction.shape()) + " vs target " +
                     to_string(target.shape()));
  }
  return mean(square(prediction - target));
}

Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw ShapeError("cross_entropy: logits " + to_string(logits.shape()) + " for " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = logits.dim(0);
  const std::size_t v = logits.dim(1);
  std::vector<double> onehot(n * v, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= v) throw ShapeError("cross_entropy: label out of range");
    onehot[i * v + labels[i]] = 1.0;
  }
  const Tensor picked = sum(log_softmax(logits) * Tensor({n, v}, std::move(onehot)));
  return -picked / static_cast<double>(n);
}

std::vector<Tensor> Model::values() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.value);
  return out;
}

std::size_t Model::weight_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

Tensor Model::loss(const Batch& batch) const {
  const auto v = values();
  return loss_with(v, batch);
}

Tensor Model::loss_with(std::span<const Tensor> params, const Batch& batch) const {
  check_params(params);
  const Tensor out = forward(params, batch);
  if (loss_kind_ == LossKind::cross_entropy) return cross_entropy(out, class_labels(batch));
  if (!batch.targets.defined()) throw ShapeError("model loss: batch has no regression targets");
  return mse_loss(out, batch.targets);
}

const std::vector<std::size_t>& Model::class_labels(const Batch& batch) const {
  return batch.labels;
}

std::unique_ptr<Model> Model::clone() const {
  auto out = copy();
  for (auto& p : out->params_) p.value = p.value.detach().set_requires_grad(true);
  return out;
}

void Model::add_parameter(std::string name, Shape shape, std::vector<double> data, LayerType type,
                          std::size_t depth, bool is_bias) {
  if (depth >= depth_count_) throw std::logic_error("parameter depth beyond model depth");
  params_.push_back({Tensor(std::move(shape), std::move(data), true),
                     {std::move(name), type, depth, is_bias}});
}

void Model::check_params(std::span<const Tensor> params) const {
  if (params.size() != params_.size()) {
    throw ShapeError("model: expected " + std::to_string(params_.size()) + " parameter tensors, got " +
                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != params_[i].value.shape()) {
      throw ShapeError("model: parameter " + params_[i].meta.name + " has shape " +
                       to_string(params[i].shape()) + ", expected " +
                       to_string(params_[i].value.shape()));
    }
  }
}

Tensor model_loss(const Model& model, const Batch& batch) { return model.loss(batch); }

std::vector<double> init_weight(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> w(fan_in * fan_out);
  for (auto& x : w) x = rng.uniform(-bound, bound);
  return w;
}

// ---------------------------------------------------------------- MLP

namespace {

class Mlp final : public Model {
 public:
  Mlp(const std::vector<std::size_t>& sizes, std::uint64_t seed, LossKind loss)
      : Model(sizes.size() - 1, loss), sizes_(sizes) {
    Rng rng(seed);
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
      const std::string prefix = "fc" + std::to_string(i);
      add_parameter(prefix + ".weight", {sizes[i], sizes[i + 1]},
                    init_weight(rng, sizes[i], sizes[i + 1]), LayerType::feed_forward, i, false);
      // uniform biases; zero biases keep the net odd and stall on symmetric data
      std::vector<double> bias(sizes[i + 1]);
      const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[i]));
      for (auto& x : bias) x = rng.uniform(-bound, bound);
      add_parameter(prefix + ".bias", {sizes[i + 1]}, std::move(bias), LayerType::feed_forward, i, true);
    }
  }

  Tensor forward(std::span<const Tensor> params, const Batch& batch) const override {
    check_params(params);
    if (!batch.inputs.defined() || batch.inputs.rank() != 2 || batch.inputs.dim(1) != sizes_.front()) {
      throw ShapeError("mlp: inputs must be (B, " + std::to_string(sizes_.front()) + ")");
    }
    Tensor h = batch.inputs;
    const std::size_t layers = sizes_.size() - 1;
    for (std::size_t i = 0; i < layers; ++i) {
      h = matmul(h, params[2 * i]) + params[2 * i + 1];
      if (i + 1 < layers) h = tanh(h);
    }
    return h;
  }

 protected:
  std::unique_ptr<Model> copy() const override { return std::make_unique<Mlp>(*this); }

 private:
  std::vector<std::size_t> sizes_;
};

}  // namespace

std::unique_ptr<Model> build_mlp(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed,
                                 LossKind loss) {
  if (layer_sizes.size() < 2) throw std::invalid_argument("build_mlp: need at least 2 layer sizes");
  for (auto s : layer_sizes) {
    if (s == 0) throw std::invalid_argument("build_mlp: layer sizes must be positive");
  }
  return std::make_unique<Mlp>(layer_sizes, seed, loss);
}

// ------------------------------------------------------ encoder block

std::vector<ParamSpec> make_encoder_block(const std::string& prefix, std::size_t d, std::size_t d_ff,
                                          Rng& rng) {
  std::vector<ParamSpec> out;
  auto ones = [](std::size_t n) { return std::vector<double>(n, 1.0); };
  auto zeros = [](std::size_t n) { return std::vector<double>(n, 0.0); };
  out.push_back({prefix + ".ln1.gain", {d}, ones(d), LayerType::layer_norm, false});
  out.push_back({prefix + ".ln1.shift", {d}, zeros(d), LayerType::layer_norm, true});
  for (const char* proj : {"q", "k", "v", "o"}) {
    const std::string base = prefix + ".attn.w" + proj;
    out.push_back({base, {d, d}, init_weight(rng, d, d), LayerType::attention, false});
    out.push_back({prefix + ".attn.b" + proj, {d}, zeros(d), LayerType::attention, true});
  }
  out.push_back({prefix + ".ln2.gain", {d}, ones(d), LayerType::layer_norm, false});
  out.push_back({prefix + ".ln2.shift", {d}, zeros(d), LayerType::layer_norm, true});
  out.push_back({prefix + ".ff.w1", {d, d_ff}, init_weight(rng, d, d_ff), LayerType::feed_forward, false});
  out.push_back({prefix + ".ff.b1", {d_ff}, zeros(d_ff), LayerType::feed_forward, true});
  out.push_back({prefix + ".ff.w2", {d_ff, d}, init_weight(rng, d_ff, d), LayerType::feed_forward, false});
  out.push_back({prefix + ".ff.b2", {d}, zeros(d), LayerType::feed_forward, true});
  return out;
}

EncoderBlock encoder_block_at(std::span<const Tensor> p, std::size_t o) {
  if (o + kEncoderBlockTensors > p.size()) throw ShapeError("encoder block: not enough tensors");
  return {p[o],      p[o + 1],  p[o + 2],  p[o + 3],  p[o + 4],  p[o + 5],
          p[o + 6],  p[o + 7],  p[o + 8],  p[o + 9],  p[o + 10], p[o + 11],
          p[o + 12], p[o + 13], p[o + 14], p[o + 15]};
}

Tensor encoder_block(const Tensor& h, const EncoderBlock& w, std::size_t n_heads, const Tensor& mask,
                     Accumulation acc) {
  if (h.rank() != 3) throw ShapeError("encoder block: input must be (B, T, d)");
  const std::size_t d = h.dim(2);
  if (n_heads == 0 || d % n_heads != 0) {
    throw ShapeError("encoder block: width " + std::to_string(d) + " not divisible by " +
                     std::to_string(n_heads) + " heads");
  }
  const std::size_t dh = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  const Tensor a = layer_norm(h, w.ln1_gain, w.ln1_shift);
  const Tensor q = matmul(a, w.wq) + w.bq;
  const Tensor k = matmul(a, w.wk) + w.bk;
  const Tensor v = matmul(a, w.wv) + w.bv;
  std::vector<Tensor> heads;
  heads.reserve(n_heads);
  for (std::size_t i = 0; i < n_heads; ++i) {
    const Tensor qh = slice(q, 2, i * dh, dh);
    const Tensor kh = slice(k, 2, i * dh, dh);
    const Tensor vh = slice(v, 2, i * dh, dh);
    Tensor scores = matmul(qh, transpose(kh)) * scale;
    if (mask.defined()) scores = scores + mask;
    heads.push_back(matmul(softmax(scores), vh, acc));
  }
  const Tensor attended = n_heads == 1 ? heads.front() : concat(heads, 2);
  const Tensor x = h + (matmul(attended, w.wo) + w.bo);

  const Tensor b = layer_norm(x, w.ln2_gain, w.ln2_shift);
  return x + (matmul(relu(matmul(b, w.w1) + w.b1), w.w2) + w.b2);
}

Tensor sinusoidal_positions(std::size_t length, std::size_t d) {
  std::vector<double> pe(length * d);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      const double angle = static_cast<double>(pos) * rate;
      pe[pos * d + i] = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor({length, d}, std::move(pe));
}

// ------------------------------------------------------- transformer

namespace {

class TinyTransformer final : public Model {
 public:
  TinyTransformer(const TransformerConfig& cfg, std::uint64_t seed)
      : Model(cfg.n_layers + 2, cfg.mode == TransformerMode::language_model ? LossKind::cross_entropy
                                                                            : LossKind::mse),
        cfg_(cfg) {
    if (cfg_.d_ff == 0) cfg_.d_ff = 2 * cfg_.d_model;
    const std::size_t d = cfg_.d_model;
    Rng rng(seed);
    if (cfg_.mode == TransformerMode::language_model) {
      std::vector<double> table(cfg_.vocab_or_features * d);
      for (auto& x : table) x = 0.1 * rng.normal();
      add_parameter("embed.table", {cfg_.vocab_or_features, d}, std::move(table),
                    LayerType::embedding, 0, false);
    } else {
      add_parameter("embed.weight", {cfg_.vocab_or_features, d},
                    init_weight(rng, cfg_.vocab_or_features, d), LayerType::embedding, 0, false);
      add_parameter("embed.bias", {d}, std::vector<double>(d, 0.0), LayerType::embedding, 0, true);
    }
    embed_count_ = parameters().size();
    for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
      for (auto& s : make_encoder_block("layer" + std::to_string(l), d, cfg_.d_ff, rng)) {
        add_parameter(std::move(s.name), std::move(s.shape), std::move(s.data), s.layer_type, l + 1,
                      s.is_bias);
      }
    }
    const std::size_t top = cfg_.n_layers + 1;
    const std::size_t out = cfg_.mode == TransformerMode::language_model ? cfg_.vocab_or_features
                                                                         : cfg_.outputs;
    add_parameter("final_ln.gain", {d}, std::vector<double>(d, 1.0), LayerType::layer_norm, top, false);
    add_parameter("final_ln.shift", {d}, std::vector<double>(d, 0.0), LayerType::layer_norm, top, true);
    add_parameter("head.weight", {d, out}, init_weight(rng, d, out), LayerType::other, top, false);
    add_parameter("head.bias", {out}, std::vector<double>(out, 0.0), LayerType::other, top, true);
  }

  Tensor forward(std::span<const Tensor> params, const Batch& batch) const override {
    check_params(params);
    const std::size_t d = cfg_.d_model;
    const bool lm = cfg_.mode == TransformerMode::language_model;
    std::size_t bsz = 0;
    std::size_t len = 0;
    Tensor h;
    Tensor mask;
    if (lm) {
      bsz = batch.rows;
      len = batch.cols;
      if (bsz == 0 || len == 0 || batch.tokens.size() != bsz * len) {
        throw ShapeError("transformer: token batch must hold rows x cols ids");
      }
      for (auto t : batch.tokens) {
        if (t >= cfg_.vocab_or_features) throw ShapeError("transformer: token id out of range");
      }
      h = reshape(embedding(params[0], batch.tokens), {bsz, len, d});
      std::vector<double> m(len * len, 0.0);
      for (std::size_t i = 0; i < len; ++i) {
        for (std::size_t j = i + 1; j < len; ++j) m[i * len + j] = -1e9;
      }
      mask = Tensor({len, len}, std::move(m));
    } else {
      const Tensor& x = batch.inputs;
      if (!x.defined() || x.rank() != 3 || x.dim(2) != cfg_.vocab_or_features) {
        throw ShapeError("transformer: inputs must be (B, T, " +
                         std::to_string(cfg_.vocab_or_features) + ")");
      }
      bsz = x.dim(0);
      len = x.dim(1);
      h = matmul(x, params[0]) + params[1];
    }
    h = h + sinusoidal_positions(len, d);
    for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
      h = encoder_block(h, encoder_block_at(params, embed_count_ + l * kEncoderBlockTensors),
                        cfg_.n_heads, mask);
    }
    const std::size_t top = embed_count_ + cfg_.n_layers * kEncoderBlockTensors;
    h = layer_norm(h, params[top], params[top + 1]);
    if (lm) return matmul(reshape(h, {bsz * len, d}), params[top + 2]) + params[top + 3];
    const Tensor last = reshape(slice(h, 1, len - 1, 1), {bsz, d});
    return matmul(last, params[top + 2]) + params[top + 3];
  }

 protected:
  std::unique_ptr<Model> copy() const override { return std::make_unique<TinyTransformer>(*this); }

 private:
  TransformerConfig cfg_;
  std::size_t embed_count_ = 0;
};

}  // namespace

std::unique_ptr<Model> build_tiny_transformer(const TransformerConfig& cfg, std::uint64_t seed) {
  if (cfg.d_model == 0 || cfg.n_heads == 0 || cfg.d_model % cfg.n_heads != 0) {
    throw std::invalid_argument("build_tiny_transformer: d_model " + std::to_string(cfg.d_model) +
                                " not divisible by n_heads " + std::to_string(cfg.n_heads));
  }
  if (cfg.vocab_or_features == 0 || cfg.outputs == 0) {
    throw std::invalid_argument("build_tiny_transformer: empty input or output width");
  }
  return std::make_unique<TinyTransformer>(cfg, seed);
}

std::unique_ptr<Model> build_tiny_transformer(std::size_t d_model, std::size_t n_layers,
                                              std::size_t n_heads, std::size_t vocab_or_features,
                                              std::uint64_t seed, TransformerMode mode) {
  TransformerConfig cfg;
  cfg.d_model = d_model;
  cfg.n_layers = n_layers;
  cfg.n_heads = n_heads;
  cfg.vocab_or_features = vocab_or_features;
  cfg.mode = mode;
  return build_tiny_transformer(cfg, seed);
}

}  // namespace metaadamw
