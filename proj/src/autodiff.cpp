#include "metaadamw/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "metaadamw/ops.hpp"

namespace metaadamw {

namespace {

thread_local std::set<std::string> t_faulty_ops;

using NodePtr = detail::Node*;

}  // namespace

namespace debug {

void inject_backward_fault(const std::string& op) { t_faulty_ops.insert(op); }

void clear_backward_faults() { t_faulty_ops.clear(); }

}  // namespace debug

std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& wrt,
                         GradOptions options) {
  if (!output.defined()) throw GraphError("grad: undefined output");
  if (output.size() != 1) {
    throw GraphError("grad: output must be a single element, got shape " +
                     to_string(output.shape()));
  }
  const bool retain = options.retain_graph.value_or(options.create_graph);

  std::vector<Tensor> result;
  result.reserve(wrt.size());
  if (!output.requires_grad()) {
    for (const auto& w : wrt) result.push_back(Tensor::zeros(w.shape()));
    return result;
  }

  // Every node reachable from the output through grad-requiring links.
  std::vector<NodePtr> order;
  std::unordered_set<NodePtr> seen;
  std::vector<NodePtr> stack{output.node().get()};
  while (!stack.empty()) {
    NodePtr n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    if (n->released) {
      throw GraphError(std::string("grad: graph already released at op '") + n->op + "'");
    }
    order.push_back(n);
    for (const auto& in : n->inputs) {
      if (in.requires_grad()) stack.push_back(in.node().get());
    }
  }
  // Ids grow with creation, so ascending id is a topological order.
  std::sort(order.begin(), order.end(), [](NodePtr a, NodePtr b) { return a->id < b->id; });

  std::unordered_set<NodePtr> targets;
  for (const auto& w : wrt) targets.insert(w.node().get());

  // A node needs a gradient only if some target lies beneath it.
  std::unordered_set<NodePtr> needed;
  for (NodePtr n : order) {
    bool need = targets.count(n) > 0;
    for (const auto& in : n->inputs) {
      need = need || needed.count(in.node().get()) > 0;
    }
    if (need) needed.insert(n);
  }

  std::unordered_map<NodePtr, Tensor> grads;
  {
    GradModeGuard mode(options.create_graph);
    grads.emplace(output.node().get(), Tensor::ones(output.shape()));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      NodePtr n = *it;
      if (!n->backward || !needed.count(n)) continue;
      auto found = grads.find(n);
      if (found == grads.end()) continue;
      auto input_grads = n->backward(found->second);
      const bool faulty = !t_faulty_ops.empty() && t_faulty_ops.count(n->op) > 0;
      for (std::size_t i = 0; i < n->inputs.size(); ++i) {
        const Tensor& in = n->inputs[i];
        if (!in.requires_grad() || !needed.count(in.node().get())) continue;
        if (i >= input_grads.size() || !input_grads[i].defined()) continue;
        Tensor g = faulty ? neg(input_grads[i]) : input_grads[i];
        if (g.shape() != in.shape()) {
          throw GraphError(std::string("grad: backward of '") + n->op + "' returned shape " +
                           to_string(g.shape()) + " for input of shape " + to_string(in.shape()));
        }
        auto slot = grads.find(in.node().get());
        if (slot == grads.end()) {
          grads.emplace(in.node().get(), std::move(g));
        } else {
          slot->second = add(slot->second, g);
        }
      }
    }
  }

  for (const auto& w : wrt) {
    auto found = grads.find(w.node().get());
    result.push_back(found == grads.end() ? Tensor::zeros(w.shape()) : found->second);
  }

  if (!retain) {
    for (NodePtr n : order) {
      if (n->inputs.empty() && !n->backward) continue;
      n->inputs.clear();
      n->backward = nullptr;
      n->released = true;
    }
  }
  return result;
}

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                  double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_difference_gradient: eps must be > 0");
  const auto base = x.to_vector();
  std::vector<double> out(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    auto plus = base;
    auto minus = base;
    plus[i] += eps;
    minus[i] -= eps;
    const double fp = f(Tensor(x.shape(), std::move(plus)));
    const double fm = f(Tensor(x.shape(), std::move(minus)));
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_difference_gradient: non-finite function value");
    }
    out[i] = (fp - fm) / (2.0 * eps);
  }
  return Tensor(x.shape(), std::move(out));
}

double max_relative_error(const Tensor& analytic, const Tensor& numeric, double floor) {
  if (analytic.size() != numeric.size()) {
    throw ShapeError("max_relative_error: size mismatch");
  }
  auto a = analytic.data();
  auto n = numeric.data();
  double scale = floor;
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    scale = std::max({scale, std::fabs(a[i]), std::fabs(n[i])});
    worst = std::max(worst, std::fabs(a[i] - n[i]));
  }
  return worst / scale;
}

}  // namespace metaadamw
