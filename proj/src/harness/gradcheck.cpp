#include "metaadamw/harness/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <sstream>

#include "metaadamw/autodiff.hpp"
#include "metaadamw/numeric.hpp"
#include "metaadamw/ops.hpp"

namespace metaadamw::harness {

namespace {

using Inputs = std::vector<Tensor>;
using Fn = std::function<Tensor(const Inputs&)>;

struct Case {
  std::string name;
  Inputs inputs;
  Fn fn;
};

Tensor uniform_tensor(Rng& rng, Shape shape, double lo, double hi) {
  std::vector<double> v(element_count(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v), true);
}

Tensor normal_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  std::vector<double> v(element_count(shape));
  for (auto& x : v) x = scale * rng.normal();
  return Tensor(std::move(shape), std::move(v), true);
}

/// Entries with magnitude in [0.2, 1.5] and random sign: no kinks nearby.
Tensor away_from_zero(Rng& rng, Shape shape) {
  std::vector<double> v(element_count(shape));
  for (auto& x : v) x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.2, 1.5);
  return Tensor(std::move(shape), std::move(v), true);
}

/// Fixed random weights turning any output into a scalar with a
/// non-degenerate gradient.
Tensor scalarize(const Tensor& out, std::uint64_t salt) {
  Rng rng(0x5eed ^ (salt * 7919) ^ out.size());
  std::vector<double> w(out.size());
  for (auto& x : w) x = rng.uniform(0.5, 1.5);
  return sum(mul(out, Tensor(out.shape(), std::move(w))));
}

Inputs with_replaced(const Inputs& inputs, std::size_t index, const Tensor& value) {
  Inputs copy;
  for (std::size_t j = 0; j < inputs.size(); ++j) {
    copy.push_back(j == index ? value : inputs[j].detach());
  }
  return copy;
}

std::vector<Case> make_primitive_cases(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Case> cases;
  auto add_case = [&](std::string name, Inputs in, Fn fn) {
    cases.push_back({std::move(name), std::move(in), std::move(fn)});
  };
  add_case("add", {normal_tensor(rng, {3, 4}), normal_tensor(rng, {4})},
           [](const Inputs& x) { return add(x[0], x[1]); });
  add_case("sub", {normal_tensor(rng, {3, 4}), normal_tensor(rng, {3, 1})},
           [](const Inputs& x) { return sub(x[0], x[1]); });
  add_case("mul", {normal_tensor(rng, {3, 4}), normal_tensor(rng, {3, 4})},
           [](const Inputs& x) { return mul(x[0], x[1]); });
  add_case("div", {normal_tensor(rng, {3, 4}), uniform_tensor(rng, {3, 4}, 0.5, 1.5)},
           [](const Inputs& x) { return div(x[0], x[1]); });
  add_case("neg", {normal_tensor(rng, {5})}, [](const Inputs& x) { return neg(x[0]); });
  add_case("pow", {normal_tensor(rng, {2, 3})}, [](const Inputs& x) { return pow(x[0], 3.0); });
  add_case("pow_half", {uniform_tensor(rng, {2, 3}, 0.5, 2.0)},
           [](const Inputs& x) { return pow(x[0], 0.5); });
  add_case("exp", {normal_tensor(rng, {2, 3})}, [](const Inputs& x) { return exp(x[0]); });
  add_case("log", {uniform_tensor(rng, {2, 3}, 0.3, 3.0)},
           [](const Inputs& x) { return log(x[0]); });
  add_case("abs", {away_from_zero(rng, {2, 3})}, [](const Inputs& x) { return abs(x[0]); });
  add_case("sigmoid", {normal_tensor(rng, {2, 3}, 2.0)},
           [](const Inputs& x) { return sigmoid(x[0]); });
  add_case("tanh", {normal_tensor(rng, {2, 3})}, [](const Inputs& x) { return tanh(x[0]); });
  add_case("relu", {away_from_zero(rng, {2, 3})}, [](const Inputs& x) { return relu(x[0]); });
  add_case("clamp", {away_from_zero(rng, {2, 3})},
           [](const Inputs& x) { return clamp(x[0], -0.1, 0.1) + 0.5 * x[0]; });
  add_case("matmul", {normal_tensor(rng, {3, 4}), normal_tensor(rng, {4, 2})},
           [](const Inputs& x) { return matmul(x[0], x[1]); });
  add_case("matmul_batched", {normal_tensor(rng, {2, 3, 4}), normal_tensor(rng, {2, 4, 3})},
           [](const Inputs& x) { return matmul(x[0], x[1]); });
  add_case("matmul_rows", {normal_tensor(rng, {2, 3, 4}), normal_tensor(rng, {4, 2})},
           [](const Inputs& x) { return matmul(x[0], x[1]); });
  add_case("matmul_exact", {normal_tensor(rng, {3, 4}), normal_tensor(rng, {4, 2})},
           [](const Inputs& x) { return matmul(x[0], x[1], Accumulation::exact); });
  add_case("transpose", {normal_tensor(rng, {2, 3, 4})},
           [](const Inputs& x) { return transpose(x[0]); });
  add_case("reshape", {normal_tensor(rng, {3, 4})},
           [](const Inputs& x) { return reshape(x[0], {2, 6}); });
  add_case("concat", {normal_tensor(rng, {3, 2}), normal_tensor(rng, {3, 3})},
           [](const Inputs& x) { return concat({x[0], x[1]}, 1); });
  add_case("slice", {normal_tensor(rng, {3, 5})},
           [](const Inputs& x) { return slice(x[0], 1, 1, 3); });
  add_case("element", {normal_tensor(rng, {5})}, [](const Inputs& x) { return element(x[0], 3); });
  add_case("broadcast_to", {normal_tensor(rng, {4})},
           [](const Inputs& x) { return broadcast_to(x[0], {3, 4}); });
  add_case("sum_to", {normal_tensor(rng, {3, 4})},
           [](const Inputs& x) { return sum_to(x[0], {1, 4}); });
  add_case("sum", {normal_tensor(rng, {3, 4})}, [](const Inputs& x) { return sum(x[0]); });
  add_case("sum_axis", {normal_tensor(rng, {3, 4})},
           [](const Inputs& x) { return sum(x[0], 0, false); });
  add_case("mean", {normal_tensor(rng, {3, 4})}, [](const Inputs& x) { return mean(x[0]); });
  add_case("mean_axis", {normal_tensor(rng, {3, 4})},
           [](const Inputs& x) { return mean(x[0], -1, true); });
  add_case("variance", {normal_tensor(rng, {3, 4})},
           [](const Inputs& x) { return variance(x[0]); });
  add_case("variance_axis", {normal_tensor(rng, {3, 4})},
           [](const Inputs& x) { return variance(x[0], -1, false); });
  add_case("dot", {normal_tensor(rng, {6}), normal_tensor(rng, {6})},
           [](const Inputs& x) { return dot(x[0], x[1]); });
  add_case("l2_norm", {normal_tensor(rng, {2, 3})},
           [](const Inputs& x) { return l2_norm(x[0]); });
  add_case("cosine_similarity", {normal_tensor(rng, {6}), normal_tensor(rng, {6})},
           [](const Inputs& x) { return cosine_similarity(x[0], x[1]); });
  add_case("softmax", {normal_tensor(rng, {3, 5})},
           [](const Inputs& x) { return softmax(x[0]); });
  add_case("log_softmax", {normal_tensor(rng, {3, 5})},
           [](const Inputs& x) { return log_softmax(x[0]); });
  add_case("layer_norm",
           {normal_tensor(rng, {3, 5}), normal_tensor(rng, {5}), normal_tensor(rng, {5})},
           [](const Inputs& x) { return layer_norm(x[0], x[1], x[2]); });
  add_case("embedding", {normal_tensor(rng, {6, 3})},
           [](const Inputs& x) { return embedding(x[0], {0, 2, 2, 5}); });
  add_case("scatter_rows", {normal_tensor(rng, {4, 3})},
           [](const Inputs& x) { return scatter_rows(x[0], {1, 3, 1, 0}, 5); });
  return cases;
}

/// Error over the gradient w.r.t. all inputs taken as one flat vector.
double joint_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  return max_relative_error(Tensor({analytic.size()}, analytic), Tensor({numeric.size()}, numeric));
}

void append(std::vector<double>& dst, const Tensor& t) {
  const auto d = t.data();
  dst.insert(dst.end(), d.begin(), d.end());
}

double first_order_error(const Case& c, std::uint64_t salt) {
  std::vector<double> all_a, all_n;
  for (std::size_t i = 0; i < c.inputs.size(); ++i) {
    const Tensor out = scalarize(c.fn(c.inputs), salt);
    const Tensor analytic = grad(out, {c.inputs[i]})[0];
    const Tensor numeric = finite_difference_gradient(
        [&](const Tensor& x) {
          NoGradGuard no_grad;
          return scalarize(c.fn(with_replaced(c.inputs, i, x)), salt).item();
        },
        c.inputs[i]);
    append(all_a, analytic);
    append(all_n, numeric);
  }
  return joint_error(all_a, all_n);
}

/// ||grad h||^2 with the inner gradient taken by first-order autodiff.
double squared_grad_norm(const Fn& fn, const Inputs& inputs, std::uint64_t salt) {
  Inputs leaves;
  for (const auto& t : inputs) leaves.push_back(t.detach().set_requires_grad(true));
  const auto grads = grad(scalarize(fn(leaves), salt), leaves);
  double total = 0.0;
  for (const auto& g : grads) {
    for (double v : g.data()) total += v * v;
  }
  return total;
}

double second_order_error(const Case& c, std::uint64_t salt) {
  std::vector<double> all_a, all_n;
  for (std::size_t i = 0; i < c.inputs.size(); ++i) {
    const auto inner = grad(scalarize(c.fn(c.inputs), salt), c.inputs, {.create_graph = true});
    Tensor total = Tensor::scalar(0.0);
    for (const auto& g : inner) total = total + sum(square(g));
    const Tensor analytic = grad(total, {c.inputs[i]})[0];
    const Tensor numeric = finite_difference_gradient(
        [&](const Tensor& x) {
          return squared_grad_norm(c.fn, with_replaced(c.inputs, i, x), salt);
        },
        c.inputs[i]);
    append(all_a, analytic);
    append(all_n, numeric);
  }
  return joint_error(all_a, all_n);
}

CheckResult make_result(std::string name, double err, double threshold, std::string detail = {}) {
  return {std::move(name), err, threshold, err < threshold, std::move(detail)};
}

template <typename F>
CheckResult guarded(const std::string& name, double threshold, F&& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    return {name, INFINITY, threshold, false, e.what()};
  }
}

// Random graph construction ------------------------------------------------

struct GraphBuilder {
  Rng& rng;

  Tensor pick(const std::vector<Tensor>& pool) {
    return pool[static_cast<std::size_t>(rng.below(pool.size()))];
  }

  static bool clear_of(const Tensor& t, double point, double margin) {
    for (double v : t.data()) {
      if (std::fabs(v - point) < margin) return false;
    }
    return true;
  }

  /// Applies primitive `op` to operands drawn from `pool`; every result keeps
  /// the (3, 4) working shape so nodes compose freely.
  Tensor apply(const std::string& op, const std::vector<Tensor>& pool, const Inputs& p) {
    const Tensor a = pick(pool);
    const Tensor b = pick(pool);
    const Tensor& w = p[0];      // (4, 4)
    const Tensor& table = p[1];  // (6, 4)
    const Tensor& gain = p[2];   // (4)
    const Tensor& shift = p[3];  // (4)
    if (op == "add") return add(a, b);
    if (op == "sub") return sub(a, b);
    if (op == "mul") return mul(tanh(a), b);
    if (op == "div") return div(a, sigmoid(b) + 0.5);
    if (op == "neg") return neg(a);
    if (op == "pow") return pow(tanh(a), 3.0);
    if (op == "pow_half") return pow(square(a) + 0.5, 0.5);
    if (op == "exp") return exp(tanh(a));
    if (op == "log") return log(square(a) + 0.5);
    if (op == "abs") return clear_of(a, 0.0, 1e-3) ? abs(a) : tanh(a);
    if (op == "sigmoid") return sigmoid(a);
    if (op == "tanh") return tanh(a);
    if (op == "relu") return clear_of(a, 0.0, 1e-3) ? relu(a) : tanh(a);
    if (op == "clamp") {
      return clear_of(a, -0.5, 1e-3) && clear_of(a, 0.5, 1e-3) ? clamp(a, -0.5, 0.5) : tanh(a);
    }
    if (op == "matmul") return matmul(a, tanh(w));
    if (op == "matmul_batched") {
      return reshape(matmul(reshape(a, {3, 1, 4}), reshape(tanh(b), {3, 4, 1})), {3, 1}) * a;
    }
    if (op == "matmul_rows") return reshape(matmul(reshape(a, {1, 3, 4}), tanh(w)), {3, 4});
    if (op == "matmul_exact") return matmul(a, tanh(w), Accumulation::exact);
    if (op == "transpose") return transpose(matmul(tanh(w) * 0.5, transpose(a)));
    if (op == "reshape") return reshape(reshape(a, {2, 6}) * 1.5, {3, 4});
    if (op == "concat" || op == "slice") return slice(concat({a, b}, 1), 1, 2, 4);
    if (op == "element") return a * element(flatten(b), 5);
    if (op == "broadcast_to") return a + broadcast_to(shift, {3, 4});
    if (op == "sum_to") return a + broadcast_to(sum_to(b, {1, 4}), {3, 4});
    if (op == "sum" || op == "mean") return a * tanh(mean(b));
    if (op == "sum_axis" || op == "mean_axis") return a - mean(b, -1, true);
    if (op == "variance" || op == "variance_axis") return a * (variance(b, -1, true) + 0.5);
    if (op == "dot") return a * tanh(dot(a, b));
    if (op == "l2_norm") return a / (l2_norm(b) + 0.5);
    if (op == "cosine_similarity") return a * cosine_similarity(a, b);
    if (op == "softmax") return softmax(a);
    if (op == "log_softmax") return log_softmax(a);
    if (op == "layer_norm") return layer_norm(a, gain, shift);
    if (op == "embedding") return a + embedding(table, {1, 4, 1});
    if (op == "scatter_rows") return a + slice(scatter_rows(b, {0, 2, 2}, 4), 0, 1, 3);
    throw std::invalid_argument("unknown primitive " + op);
  }
};

}  // namespace

bool SuiteReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

double SuiteReport::worst() const {
  double w = 0.0;
  for (const auto& c : checks) w = std::max(w, c.max_rel_error);
  return w;
}

std::vector<std::string> SuiteReport::failing_names() const {
  std::vector<std::string> names;
  for (const auto& c : checks) {
    if (!c.passed) names.push_back(c.name);
  }
  return names;
}

std::vector<std::string> primitive_names() {
  std::vector<std::string> names;
  for (const auto& c : make_primitive_cases(1)) names.push_back(c.name);
  return names;
}

SuiteReport run_primitive_suite(std::uint64_t seed, double threshold) {
  const auto start = std::chrono::steady_clock::now();
  SuiteReport report{"first-order primitives", {}, 0.0};
  std::uint64_t salt = 0;
  for (const auto& c : make_primitive_cases(seed)) {
    ++salt;
    report.checks.push_back(guarded(c.name, threshold, [&] {
      return make_result(c.name, first_order_error(c, salt), threshold);
    }));
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

SuiteReport run_random_graph_suite(std::size_t count, std::uint64_t seed,
                                   std::size_t nodes_per_graph, double threshold) {
  const auto start = std::chrono::steady_clock::now();
  SuiteReport report{"first-order random graphs", {}, 0.0};
  const auto names = primitive_names();
  for (std::size_t gi = 0; gi < count; ++gi) {
    Rng rng(seed * 1000003 + gi);
    Inputs inputs{normal_tensor(rng, {3, 4}), normal_tensor(rng, {3, 4}),
                  normal_tensor(rng, {4, 4}, 0.5), normal_tensor(rng, {6, 4}),
                  normal_tensor(rng, {4}), normal_tensor(rng, {4})};
    std::vector<std::string> plan{names[gi % names.size()]};
    while (plan.size() < nodes_per_graph) plan.push_back(names[rng.below(names.size())]);

    // The graph is replayed for every evaluation, so the op sequence and
    // operand choices are drawn from a fixed per-graph seed.
    const std::uint64_t replay_seed = rng.next_u64();
    Fn fn = [plan, replay_seed](const Inputs& x) {
      Rng replay(replay_seed);
      GraphBuilder b{replay};
      std::vector<Tensor> pool{x[0], x[1]};
      const Inputs params{x[2], x[3], x[4], x[5]};
      for (const auto& op : plan) pool.push_back(b.apply(op, pool, params));
      Tensor total = sum(pool.back());
      for (std::size_t i = 2; i + 1 < pool.size(); ++i) total = total + 0.1 * sum(pool[i]);
      return total;
    };
    Case c{"graph_" + std::to_string(gi) + "(" + plan.front() + ")", inputs, fn};
    report.checks.push_back(guarded(c.name, threshold, [&] {
      return make_result(c.name, first_order_error(c, gi), threshold);
    }));
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

SuiteReport run_second_order_suite(std::uint64_t seed, double threshold) {
  const auto start = std::chrono::steady_clock::now();
  SuiteReport report{"second-order", {}, 0.0};

  // Closed-form oracle: g(x) = sum c_i x_i^3 + d_i x_i x_{i+1} + e_i x_i^2
  // (cyclic), whose gradient is written out by hand.
  {
    Rng rng(seed);
    const std::size_t n = 5;
    std::vector<double> c(n), d(n), e(n), x0(n);
    for (std::size_t i = 0; i < n; ++i) {
      c[i] = rng.uniform(-1, 1);
      d[i] = rng.uniform(-1, 1);
      e[i] = rng.uniform(-1, 1);
      x0[i] = rng.uniform(-1.5, 1.5);
    }
    auto closed_form = [&](const Tensor& xt) {
      auto x = xt.data();
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t next = (i + 1) % n;
        const std::size_t prev = (i + n - 1) % n;
        const double gi = 3 * c[i] * x[i] * x[i] + d[i] * x[next] + d[prev] * x[prev] + 2 * e[i] * x[i];
        total += gi * gi;
      }
      return total;
    };
    report.checks.push_back(guarded("polynomial_closed_form", threshold, [&] {
      Tensor x = Tensor::vector(x0, true);
      const Tensor rolled = concat({slice(x, 0, 1, n - 1), slice(x, 0, 0, 1)}, 0);
      const Tensor g = sum(Tensor::vector(c) * pow(x, 3.0)) + sum(Tensor::vector(d) * x * rolled) +
                       sum(Tensor::vector(e) * square(x));
      const Tensor gx = grad(g, {x}, {.create_graph = true})[0];
      const Tensor analytic = grad(sum(square(gx)), {x})[0];
      const Tensor numeric = finite_difference_gradient(closed_form, x);
      return make_result("polynomial_closed_form", max_relative_error(analytic, numeric),
                         threshold);
    }));
  }

  std::uint64_t salt = 100;
  for (const auto& c : make_primitive_cases(seed + 1)) {
    ++salt;
    report.checks.push_back(guarded(c.name, threshold, [&] {
      return make_result(c.name, second_order_error(c, salt), threshold);
    }));
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::string format_report(const SuiteReport& report) {
  std::ostringstream os;
  os << "== " << report.suite << " (" << report.checks.size() << " checks, " << std::fixed
     << std::setprecision(2) << report.seconds << " s)\n";
  for (const auto& c : report.checks) {
    os << (c.passed ? "  ok   " : "  FAIL ") << std::left << std::setw(34) << c.name
       << " max_rel_err=" << std::scientific << std::setprecision(3) << c.max_rel_error
       << " threshold=" << c.threshold;
    if (!c.detail.empty()) os << " (" << c.detail << ")";
    os << '\n' << std::defaultfloat;
  }
  os << (report.passed() ? "PASS " : "FAIL ") << report.suite << " worst=" << std::scientific
     << std::setprecision(3) << report.worst() << '\n';
  return os.str();
}

}  // namespace metaadamw::harness
