#include "metaadamw/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

namespace metaadamw {

namespace {

thread_local bool t_grad_enabled = true;

std::atomic<std::uint64_t> g_node_counter{0};

}  // namespace

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

bool grad_enabled() noexcept { return t_grad_enabled; }

GradModeGuard::GradModeGuard(bool enabled) : previous_(t_grad_enabled) {
  t_grad_enabled = enabled;
}

GradModeGuard::~GradModeGuard() { t_grad_enabled = previous_; }

namespace detail {

std::uint64_t next_node_id() { return ++g_node_counter; }

Tensor make_result(const char* op, Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs, BackwardFn backward) {
  if (element_count(shape) != data.size()) {
    throw ShapeError(std::string(op) + ": produced " + std::to_string(data.size()) +
                     " values for shape " + to_string(shape));
  }
  for (double x : data) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string(op) + ": non-finite result");
    }
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->id = next_node_id();
  node->op = op;
  if (t_grad_enabled) {
    bool any = false;
    for (const auto& in : inputs) any = any || (in.defined() && in.requires_grad());
    if (any) {
      node->requires_grad = true;
      node->inputs = std::move(inputs);
      node->backward = std::move(backward);
    }
  }
  return Tensor(std::move(node));
}

}  // namespace detail

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (element_count(shape) != data.size()) {
    throw ShapeError("tensor: " + std::to_string(data.size()) +
                     " values do not fill shape " + to_string(shape));
  }
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
  node_->id = detail::next_node_id();
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({}, {value}, requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  Shape shape{values.size()};
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                      bool requires_grad) {
  return Tensor({rows, cols}, std::move(values), requires_grad);
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(Shape shape, double value) {
  std::vector<double> data(element_count(shape), value);
  return Tensor(std::move(shape), std::move(data));
}

detail::Node& Tensor::checked() const {
  if (!node_) throw GraphError("use of an undefined tensor");
  return *node_;
}

const Shape& Tensor::shape() const { return checked().shape; }

std::size_t Tensor::size() const { return checked().data.size(); }

std::size_t Tensor::dim(int axis) const {
  const auto& s = shape();
  const int r = static_cast<int>(s.size());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     to_string(s));
  }
  return s[static_cast<std::size_t>(a)];
}

std::span<const double> Tensor::data() const { return checked().data; }

std::vector<double> Tensor::to_vector() const { return checked().data; }

double Tensor::operator[](std::size_t flat_index) const { return checked().data.at(flat_index); }

double Tensor::item() const {
  const auto& n = checked();
  if (n.data.size() != 1) {
    throw ShapeError("item() on tensor of shape " + to_string(n.shape));
  }
  return n.data[0];
}

bool Tensor::requires_grad() const { return checked().requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) throw GraphError("set_requires_grad on a non-leaf tensor");
  node_->requires_grad = flag;
  return *this;
}

bool Tensor::is_leaf() const {
  const auto& n = checked();
  return n.inputs.empty() && !n.backward && !n.released;
}

const char* Tensor::op_name() const { return checked().op; }

std::uint64_t Tensor::id() const { return checked().id; }

Tensor Tensor::detach() const {
  const auto& n = checked();
  return Tensor(n.shape, n.data, false);
}

void Tensor::assign(std::vector<double> values) {
  auto& n = checked();
  if (!is_leaf()) throw GraphError("assign() on a non-leaf tensor");
  if (values.size() != n.data.size()) {
    throw ShapeError("assign(): expected " + std::to_string(n.data.size()) + " values, got " +
                     std::to_string(values.size()));
  }
  n.data = std::move(values);
}

void Tensor::assign(std::span<const double> values) {
  assign(std::vector<double>(values.begin(), values.end()));
}

}  // namespace metaadamw
