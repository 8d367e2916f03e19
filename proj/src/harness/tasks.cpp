#include "metaadamw/harness/tasks.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>

#include "metaadamw/autodiff.hpp"

namespace metaadamw::harness {

extern const std::string_view kCorpusText;

std::string_view to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::mse: return "mse";
    case MetricKind::perplexity: return "perplexity";
    case MetricKind::accuracy: return "accuracy";
  }
  return "mse";
}

bool higher_is_better(MetricKind kind) { return kind == MetricKind::accuracy; }

double Task::metric_from_loss(double loss) const {
  return metric_kind() == MetricKind::perplexity ? std::exp(loss) : loss;
}

std::size_t Task::correct(const Tensor& logits, const Batch& batch) const {
  const std::size_t rows = logits.dim(0);
  const std::size_t cols = logits.dim(1);
  if (batch.labels.size() != rows) throw ShapeError("correct: label count does not match logits");
  const auto v = logits.data();
  std::size_t hits = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = v.subspan(r * cols, cols);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    hits += best == batch.labels[r] ? 1 : 0;
  }
  return hits;
}

Evaluation Task::evaluate(const Model& model, Split split, std::size_t chunk) const {
  NoGradGuard no_grad;
  const std::size_t n = size(split);
  if (n == 0) throw std::invalid_argument("evaluate: empty split");
  const auto params = model.values();
  double loss_sum = 0.0;
  std::size_t hits = 0;
  std::size_t rows = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += chunk) {
    idx.clear();
    for (std::size_t i = start; i < std::min(n, start + chunk); ++i) idx.push_back(i);
    const Batch b = make_batch(split, idx);
    const Tensor out = model.forward(params, b);
    const double l = model.loss_kind() == LossKind::cross_entropy
                         ? cross_entropy(out, model.class_labels(b)).item()
                         : mse_loss(out, b.targets).item();
    loss_sum += l * static_cast<double>(idx.size());
    if (metric_kind() == MetricKind::accuracy) hits += correct(out, b);
    rows += idx.size();
  }
  Evaluation e;
  e.loss = loss_sum / static_cast<double>(rows);
  e.metric = metric_kind() == MetricKind::accuracy ? static_cast<double>(hits) / static_cast<double>(rows)
                                                   : metric_from_loss(e.loss);
  return e;
}

namespace {

/// Next-value forecasting on a mixture of three sinusoids with noise.
class SineTask final : public Task {
 public:
  static constexpr std::size_t kWindow = 16;
  static constexpr std::size_t kTrain = 512;
  static constexpr std::size_t kVal = 128;

  explicit SineTask(std::uint64_t seed) {
    Rng rng(seed * 7919 + 1);
    double amp[3], period[3], phase[3];
    for (int k = 0; k < 3; ++k) {
      amp[k] = rng.uniform(0.5, 1.0);
      period[k] = rng.uniform(6.0, 40.0);
      phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    series_.resize(kTrain + kVal + 2 * kWindow);
    for (std::size_t t = 0; t < series_.size(); ++t) {
      double x = 0.1 * rng.normal();
      for (int k = 0; k < 3; ++k) {
        x += amp[k] * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / period[k] + phase[k]);
      }
      series_[t] = x / 2.0;
    }
  }

  std::string_view id() const override { return "sine"; }
  MetricKind metric_kind() const override { return MetricKind::mse; }

  std::unique_ptr<Model> make_model(std::uint64_t seed) const override {
    TransformerConfig cfg;
    cfg.d_model = 8;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.d_ff = 16;
    cfg.vocab_or_features = 1;
    cfg.outputs = 1;
    return build_tiny_transformer(cfg, seed);
  }

  std::size_t size(Split split) const override { return split == Split::train ? kTrain : kVal; }

  Batch make_batch(Split split, std::span<const std::size_t> indices) const override {
    const std::size_t base = split == Split::train ? 0 : kTrain + kWindow;
    std::vector<double> x, y;
    x.reserve(indices.size() * kWindow);
    for (auto i : indices) {
      if (i >= size(split)) throw std::out_of_range("sine: example index out of range");
      const std::size_t s = base + i;
      x.insert(x.end(), series_.begin() + static_cast<std::ptrdiff_t>(s),
               series_.begin() + static_cast<std::ptrdiff_t>(s + kWindow));
      y.push_back(series_[s + kWindow]);
    }
    Batch b;
    b.inputs = Tensor({indices.size(), kWindow, 1}, std::move(x));
    b.targets = Tensor({indices.size(), 1}, std::move(y));
    return b;
  }

 private:
  std::vector<double> series_;
};

/// Next-character prediction on the embedded public-domain text. The first
/// 90% of the text feeds training windows, the rest validation windows.
class CharLmTask final : public Task {
 public:
  static constexpr std::size_t kLength = 16;
  static constexpr std::size_t kTrain = 512;
  static constexpr std::size_t kVal = 128;

  explicit CharLmTask(std::uint64_t seed) {
    const std::string alphabet = corpus_alphabet();
    std::array<std::size_t, 256> code{};
    for (std::size_t i = 0; i < alphabet.size(); ++i) code[static_cast<unsigned char>(alphabet[i])] = i;
    vocab_ = alphabet.size();
    ids_.reserve(kCorpusText.size());
    for (char c : kCorpusText) ids_.push_back(code[static_cast<unsigned char>(c)]);
    const std::size_t cut = ids_.size() * 9 / 10;
    // Training windows start at a seeded random offset on an even grid.
    Rng rng(seed * 104729 + 3);
    const std::size_t span = cut - kLength - 1;
    const std::size_t stride = span / kTrain;
    const std::size_t shift = static_cast<std::size_t>(rng.below(stride));
    for (std::size_t i = 0; i < kTrain; ++i) train_.push_back(shift + i * stride);
    const std::size_t vspan = ids_.size() - cut - kLength - 1;
    for (std::size_t i = 0; i < kVal; ++i) val_.push_back(cut + i * (vspan / kVal));
  }

  std::string_view id() const override { return "charlm"; }
  MetricKind metric_kind() const override { return MetricKind::perplexity; }

  std::unique_ptr<Model> make_model(std::uint64_t seed) const override {
    TransformerConfig cfg;
    cfg.d_model = 16;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.d_ff = 32;
    cfg.vocab_or_features = vocab_;
    cfg.mode = TransformerMode::language_model;
    return build_tiny_transformer(cfg, seed);
  }

  std::size_t size(Split split) const override { return split == Split::train ? kTrain : kVal; }

  Batch make_batch(Split split, std::span<const std::size_t> indices) const override {
    const auto& starts = split == Split::train ? train_ : val_;
    Batch b;
    b.rows = indices.size();
    b.cols = kLength;
    for (auto i : indices) {
      const std::size_t s = starts.at(i);
      for (std::size_t k = 0; k < kLength; ++k) {
        b.tokens.push_back(ids_[s + k]);
        b.labels.push_back(ids_[s + k + 1]);
      }
    }
    return b;
  }

 private:
  std::size_t vocab_ = 0;
  std::vector<std::size_t> ids_;
  std::vector<std::size_t> train_, val_;
};

/// Two interleaved spirals, one per class.
class SpiralsTask final : public Task {
 public:
  static constexpr std::size_t kTrain = 400;
  static constexpr std::size_t kVal = 200;

  explicit SpiralsTask(std::uint64_t seed) {
    Rng rng(seed * 15485863 + 5);
    auto fill = [&](std::size_t n, std::vector<double>& xy, std::vector<std::size_t>& label) {
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t cls = i % 2;
        const double turn = std::sqrt(rng.uniform()) * 3.0 * std::numbers::pi;
        const double sign = cls == 0 ? 1.0 : -1.0;
        const double r = turn / (3.0 * std::numbers::pi);
        xy.push_back(sign * r * std::cos(turn) + 0.04 * rng.normal());
        xy.push_back(sign * r * std::sin(turn) + 0.04 * rng.normal());
        label.push_back(cls);
      }
    };
    fill(kTrain, train_xy_, train_label_);
    fill(kVal, val_xy_, val_label_);
  }

  std::string_view id() const override { return "spirals"; }
  MetricKind metric_kind() const override { return MetricKind::accuracy; }

  std::unique_ptr<Model> make_model(std::uint64_t seed) const override {
    return build_mlp({2, 32, 32, 2}, seed, LossKind::cross_entropy);
  }

  std::size_t size(Split split) const override { return split == Split::train ? kTrain : kVal; }

  Batch make_batch(Split split, std::span<const std::size_t> indices) const override {
    const auto& xy = split == Split::train ? train_xy_ : val_xy_;
    const auto& label = split == Split::train ? train_label_ : val_label_;
    Batch b;
    std::vector<double> x;
    for (auto i : indices) {
      if (i >= label.size()) throw std::out_of_range("spirals: example index out of range");
      x.push_back(xy[2 * i]);
      x.push_back(xy[2 * i + 1]);
      b.labels.push_back(label[i]);
    }
    b.inputs = Tensor({indices.size(), 2}, std::move(x));
    return b;
  }

 private:
  std::vector<double> train_xy_, val_xy_;
  std::vector<std::size_t> train_label_, val_label_;
};

}  // namespace

std::string corpus_alphabet() {
  std::set<unsigned char> seen(kCorpusText.begin(), kCorpusText.end());
  return std::string(seen.begin(), seen.end());
}

std::unique_ptr<Task> make_task(std::string_view id, std::uint64_t seed) {
  if (id == "sine") return std::make_unique<SineTask>(seed);
  if (id == "charlm") return std::make_unique<CharLmTask>(seed);
  if (id == "spirals") return std::make_unique<SpiralsTask>(seed);
  throw std::invalid_argument("unknown task '" + std::string(id) + "'");
}

std::vector<std::string> task_ids() { return {"sine", "charlm", "spirals"}; }

}  // namespace metaadamw::harness
