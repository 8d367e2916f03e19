#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace metaadamw::harness {

struct CheckResult {
  std::string name;
  double max_rel_error = 0.0;
  double threshold = 0.0;
  bool passed = false;
  std::string detail;
};

struct SuiteReport {
  std::string suite;
  std::vector<CheckResult> checks;
  double seconds = 0.0;

  bool passed() const;
  double worst() const;
  std::vector<std::string> failing_names() const;
};

/// Names of the primitives covered by the first-order suite.
std::vector<std::string> primitive_names();

/// One finite-difference check per primitive on random inputs.
SuiteReport run_primitive_suite(std::uint64_t seed, double threshold = 1e-5);

/// Random compositions of primitives; graph i is seeded with primitive
/// i mod P so every primitive is exercised once count >= P.
SuiteReport run_random_graph_suite(std::size_t count, std::uint64_t seed,
                                   std::size_t nodes_per_graph = 10, double threshold = 1e-5);

/// d/dx ||grad h(x)||^2 through a recorded backward pass, against finite
/// differences of the squared gradient norm. Covers a closed-form
/// polynomial oracle and every primitive.
SuiteReport run_second_order_suite(std::uint64_t seed, double threshold = 1e-4);

/// d L_meta / d phi through the full second-order meta path on a small MLP,
/// combined objective, against finite differences over every trainable
/// weight of the modulation network and the HUW log-variances.
SuiteReport run_meta_gradient_suite(std::uint64_t seed, double threshold = 1e-3);

std::string format_report(const SuiteReport& report);

}  // namespace metaadamw::harness
