#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace metaadamw {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an operation would produce or consume a non-finite value
/// (log of a non-positive input, division by zero, overflow, ...).
class NumericError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class Tensor;

namespace detail {

/// Maps the gradient of a node's output to the gradients of its inputs.
/// Implemented with differentiable ops so that a recorded backward pass is
/// itself a graph (reverse-over-reverse).
using BackwardFn = std::function<std::vector<Tensor>(const Tensor& grad_out)>;

struct Node;

}  // namespace detail

/// Dense row-major f64 array with an optional link into the computation graph.
///
/// A Tensor is a shared handle: copies alias the same node. Values produced
/// by operations are immutable; only leaves may be overwritten via assign().
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values, bool requires_grad = false);
  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, double value);

  bool defined() const noexcept { return static_cast<bool>(node_); }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  /// Extent of `axis`; negative values count from the back.
  std::size_t dim(int axis) const;

  std::span<const double> data() const;
  std::vector<double> to_vector() const;
  double operator[](std::size_t flat_index) const;
  /// Value of a single-element tensor.
  double item() const;

  bool requires_grad() const;
  /// Marks a leaf as trainable. Throws GraphError on interior nodes.
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const;
  const char* op_name() const;
  std::uint64_t id() const;

  /// Leaf copy of the current values, cut from any graph.
  Tensor detach() const;
  /// Overwrites the values of a leaf in place; the shape must be preserved.
  void assign(std::vector<double> values);
  void assign(std::span<const double> values);

  bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }

  // Graph internals, used by the op and grad implementations.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const noexcept { return node_; }

 private:
  detail::Node& checked() const;

  std::shared_ptr<detail::Node> node_;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::uint64_t id = 0;
  const char* op = "leaf";
  std::vector<Tensor> inputs;
  BackwardFn backward;
  bool released = false;
};

std::uint64_t next_node_id();

/// Wraps a freshly computed value as a graph node. Inputs and the backward
/// closure are kept only when grad mode is on and some input requires grad.
/// Throws NumericError if `data` holds a non-finite entry.
Tensor make_result(const char* op, Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs, BackwardFn backward);

}  // namespace detail

/// True when newly created op results record their inputs.
bool grad_enabled() noexcept;

/// RAII switch for graph recording on the current thread.
class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled);
  ~GradModeGuard();
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool previous_;
};

class NoGradGuard : public GradModeGuard {
 public:
  NoGradGuard() : GradModeGuard(false) {}
};

}  // namespace metaadamw
