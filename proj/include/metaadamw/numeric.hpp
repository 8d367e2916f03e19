#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace metaadamw {

/// Correctly rounded sum of `values` (Shewchuk partials). The result does not
/// depend on the order of the inputs.
double exact_sum(std::span<const double> values);

/// Seeded generator with platform-independent streams: mt19937_64 bits are
/// mapped to doubles here rather than through the implementation-defined
/// <random> distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller.
  double normal();
  /// Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace metaadamw
