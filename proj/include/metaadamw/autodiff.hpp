#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "metaadamw/tensor.hpp"

namespace metaadamw {

struct GradOptions {
  /// Record the backward pass so the returned gradients are differentiable.
  bool create_graph = false;
  /// Keep the traversed graph usable for another pass. Defaults to
  /// create_graph.
  std::optional<bool> retain_graph;
};

/// Reverse-mode gradients of a single-element `output` with respect to each
/// tensor in `wrt`. Tensors that do not influence the output get zeros.
///
/// Without retain_graph the traversed interior nodes are released, and a
/// later pass through them throws GraphError.
std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& wrt,
                         GradOptions options = {});

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / 2 eps.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                  double eps = 1e-5);

/// max_i |a_i - n_i| / max(|a|_inf, |n|_inf, floor). Scaling by the whole
/// tensor keeps exact-zero entries from turning finite-difference rounding
/// (about ulp(f) / eps) into a large ratio.
double max_relative_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-6);

namespace debug {

/// Negates the gradients produced by every backward rule of `op` on the
/// current thread. Used to confirm the gradient checks catch broken rules.
void inject_backward_fault(const std::string& op);
void clear_backward_faults();

}  // namespace debug

}  // namespace metaadamw
