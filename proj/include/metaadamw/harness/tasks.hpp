#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "metaadamw/model.hpp"

namespace metaadamw::harness {

enum class MetricKind { mse, perplexity, accuracy };

std::string_view to_string(MetricKind kind);
bool higher_is_better(MetricKind kind);

enum class Split { train, validation };

struct Evaluation {
  double loss = 0.0;
  double metric = 0.0;
};

/// Desk-scale benchmark. Data is generated once from the seed; examples are
/// addressed by index within a split.
class Task {
 public:
  virtual ~Task() = default;

  virtual std::string_view id() const = 0;
  virtual MetricKind metric_kind() const = 0;
  virtual std::unique_ptr<Model> make_model(std::uint64_t seed) const = 0;
  virtual std::size_t size(Split split) const = 0;
  virtual Batch make_batch(Split split, std::span<const std::size_t> indices) const = 0;

  /// MSE and perplexity follow from the mean loss; accuracy needs logits.
  double metric_from_loss(double loss) const;
  /// Rows of `logits` whose argmax equals the batch label.
  std::size_t correct(const Tensor& logits, const Batch& batch) const;

  /// Loss and metric over a whole split, evaluated in chunks without a graph.
  Evaluation evaluate(const Model& model, Split split, std::size_t chunk = 128) const;
};

/// "sine", "charlm" or "spirals".
std::unique_ptr<Task> make_task(std::string_view id, std::uint64_t seed);
std::vector<std::string> task_ids();

/// Vocabulary of the embedded char-LM text, sorted by byte value.
std::string corpus_alphabet();

}  // namespace metaadamw::harness
