#include "metaadamw/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "metaadamw/numeric.hpp"

namespace metaadamw {

namespace {

using detail::make_result;

std::size_t normalize_axis(int axis, std::size_t rank, const char* op) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

/// For every flat index of `out`, the flat index of the broadcast source.
std::vector<std::size_t> broadcast_map(const Shape& in, const Shape& out) {
  const std::size_t n = element_count(out);
  std::vector<std::size_t> map(n, 0);
  if (element_count(in) == 1) return map;
  const std::size_t offset = out.size() - in.size();
  const auto in_strides = strides_of(in);
  std::vector<std::size_t> eff(out.size(), 0);
  for (std::size_t d = 0; d < in.size(); ++d) {
    eff[d + offset] = in[d] == 1 ? 0 : in_strides[d];
  }
  std::vector<std::size_t> index(out.size(), 0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < n; ++i) {
    map[i] = src;
    for (std::size_t d = out.size(); d-- > 0;) {
      ++index[d];
      src += eff[d];
      if (index[d] < out[d]) break;
      src -= eff[d] * index[d];
      index[d] = 0;
    }
  }
  return map;
}

Tensor constant(Shape shape, std::vector<double> data) {
  return Tensor(std::move(shape), std::move(data), false);
}

template <typename F>
std::vector<double> map_values(const Tensor& x, F f) {
  auto in = x.data();
  std::vector<double> out(in.size());
  std::transform(in.begin(), in.end(), out.begin(), f);
  return out;
}

template <typename F>
std::vector<double> zip_values(const Tensor& a, const Tensor& b, const Shape& out_shape, F f) {
  auto da = a.data();
  auto db = b.data();
  const std::size_t n = element_count(out_shape);
  std::vector<double> out(n);
  if (a.shape() == out_shape && b.shape() == out_shape) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(da[i], db[i]);
  } else if (a.shape() == out_shape && db.size() == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(da[i], db[0]);
  } else if (b.shape() == out_shape && da.size() == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(da[0], db[i]);
  } else {
    const auto ma = broadcast_map(a.shape(), out_shape);
    const auto mb = broadcast_map(b.shape(), out_shape);
    for (std::size_t i = 0; i < n; ++i) out[i] = f(da[ma[i]], db[mb[i]]);
  }
  return out;
}

Shape reduced_shape(const Shape& shape, std::size_t axis, bool keepdim) {
  Shape out;
  for (std::size_t d = 0; d < shape.size(); ++d) {
    if (d == axis) {
      if (keepdim) out.push_back(1);
    } else {
      out.push_back(shape[d]);
    }
  }
  return out;
}

}  // namespace

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t ea = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t eb = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (ea != eb && ea != 1 && eb != 1) {
      throw ShapeError("cannot broadcast " + to_string(a) + " with " + to_string(b));
    }
    out[i] = ea == 1 ? eb : ea;
  }
  return out;
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  if (broadcast_shapes(x.shape(), shape) != shape) {
    throw ShapeError("broadcast_to: " + to_string(x.shape()) + " does not expand to " +
                     to_string(shape));
  }
  const auto map = broadcast_map(x.shape(), shape);
  auto src = x.data();
  std::vector<double> out(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = src[map[i]];
  return make_result("broadcast_to", shape, std::move(out), {x},
                     [x](const Tensor& g) { return std::vector<Tensor>{sum_to(g, x.shape())}; });
}

Tensor sum_to(const Tensor& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  if (broadcast_shapes(shape, x.shape()) != x.shape()) {
    throw ShapeError("sum_to: " + to_string(x.shape()) + " does not reduce to " +
                     to_string(shape));
  }
  const auto map = broadcast_map(shape, x.shape());
  auto src = x.data();
  std::vector<double> out(element_count(shape), 0.0);
  for (std::size_t i = 0; i < map.size(); ++i) out[map[i]] += src[i];
  return make_result("sum_to", shape, std::move(out), {x}, [x](const Tensor& g) {
    return std::vector<Tensor>{broadcast_to(g, x.shape())};
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  auto shape = broadcast_shapes(a.shape(), b.shape());
  auto out = zip_values(a, b, shape, [](double x, double y) { return x + y; });
  return make_result("add", shape, std::move(out), {a, b}, [a, b](const Tensor& g) {
    return std::vector<Tensor>{sum_to(g, a.shape()), sum_to(g, b.shape())};
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  auto shape = broadcast_shapes(a.shape(), b.shape());
  auto out = zip_values(a, b, shape, [](double x, double y) { return x - y; });
  return make_result("sub", shape, std::move(out), {a, b}, [a, b](const Tensor& g) {
    return std::vector<Tensor>{sum_to(g, a.shape()), sum_to(neg(g), b.shape())};
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  auto shape = broadcast_shapes(a.shape(), b.shape());
  auto out = zip_values(a, b, shape, [](double x, double y) { return x * y; });
  return make_result("mul", shape, std::move(out), {a, b}, [a, b](const Tensor& g) {
    return std::vector<Tensor>{sum_to(mul(g, b), a.shape()), sum_to(mul(g, a), b.shape())};
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double y : b.data()) {
    if (y == 0.0) throw NumericError("div: division by zero");
  }
  auto shape = broadcast_shapes(a.shape(), b.shape());
  auto out = zip_values(a, b, shape, [](double x, double y) { return x / y; });
  return make_result("div", shape, std::move(out), {a, b}, [a, b](const Tensor& g) {
    return std::vector<Tensor>{sum_to(div(g, b), a.shape()),
                               sum_to(neg(div(mul(g, a), mul(b, b))), b.shape())};
  });
}

Tensor neg(const Tensor& x) {
  return make_result("neg", x.shape(), map_values(x, [](double v) { return -v; }), {x},
                     [](const Tensor& g) { return std::vector<Tensor>{neg(g)}; });
}

Tensor pow(const Tensor& x, double p) {
  const bool integral = std::floor(p) == p;
  if (!integral) {
    for (double v : x.data()) {
      if (v < 0.0) throw NumericError("pow: negative base with fractional exponent");
    }
  }
  if (p < 0.0) {
    for (double v : x.data()) {
      if (v == 0.0) throw NumericError("pow: zero base with negative exponent");
    }
  }
  auto out = map_values(x, [p](double v) {
    if (p == 2.0) return v * v;
    if (p == 0.5) return std::sqrt(v);
    return std::pow(v, p);
  });
  return make_result("pow", x.shape(), std::move(out), {x}, [x, p](const Tensor& g) {
    if (p == 0.0) return std::vector<Tensor>{Tensor::zeros(x.shape())};
    if (p == 1.0) return std::vector<Tensor>{g};
    return std::vector<Tensor>{mul(g, mul(Tensor::scalar(p), pow(x, p - 1.0)))};
  });
}

Tensor sqrt(const Tensor& x) { return pow(x, 0.5); }

Tensor square(const Tensor& x) { return pow(x, 2.0); }

Tensor exp(const Tensor& x) {
  return make_result("exp", x.shape(), map_values(x, [](double v) { return std::exp(v); }), {x},
                     [x](const Tensor& g) { return std::vector<Tensor>{mul(g, exp(x))}; });
}

Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw NumericError("log: non-positive input");
  }
  return make_result("log", x.shape(), map_values(x, [](double v) { return std::log(v); }), {x},
                     [x](const Tensor& g) { return std::vector<Tensor>{div(g, x)}; });
}

Tensor abs(const Tensor& x) {
  return make_result("abs", x.shape(), map_values(x, [](double v) { return std::fabs(v); }), {x},
                     [x](const Tensor& g) {
                       auto sign = map_values(x, [](double v) {
                         return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
                       });
                       return std::vector<Tensor>{mul(g, constant(x.shape(), std::move(sign)))};
                     });
}

Tensor sigmoid(const Tensor& x) {
  auto out = map_values(x, [](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  return make_result("sigmoid", x.shape(), std::move(out), {x}, [x](const Tensor& g) {
    const Tensor s = sigmoid(x);
    return std::vector<Tensor>{mul(g, mul(s, 1.0 - s))};
  });
}

Tensor tanh(const Tensor& x) {
  return make_result("tanh", x.shape(), map_values(x, [](double v) { return std::tanh(v); }), {x},
                     [x](const Tensor& g) {
                       const Tensor t = tanh(x);
                       return std::vector<Tensor>{mul(g, 1.0 - mul(t, t))};
                     });
}

Tensor relu(const Tensor& x) {
  return make_result("relu", x.shape(), map_values(x, [](double v) { return v > 0.0 ? v : 0.0; }),
                     {x}, [x](const Tensor& g) {
                       auto mask = map_values(x, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
                       return std::vector<Tensor>{mul(g, constant(x.shape(), std::move(mask)))};
                     });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (!(lo < hi)) throw std::invalid_argument("clamp: empty interval");
  return make_result("clamp", x.shape(),
                     map_values(x, [lo, hi](double v) { return std::clamp(v, lo, hi); }), {x},
                     [x, lo, hi](const Tensor& g) {
                       auto mask = map_values(
                           x, [lo, hi](double v) { return v > lo && v < hi ? 1.0 : 0.0; });
                       return std::vector<Tensor>{mul(g, constant(x.shape(), std::move(mask)))};
                     });
}

Tensor matmul(const Tensor& a, const Tensor& b, Accumulation acc) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() > 2 && sb.size() == 2) {
    const std::size_t k = sa.back();
    const std::size_t rows = a.size() / std::max<std::size_t>(k, 1);
    Shape out_shape(sa.begin(), sa.end() - 1);
    out_shape.push_back(sb[1]);
    return reshape(matmul(reshape(a, {rows, k}), b, acc), out_shape);
  }
  std::size_t batch = 1;
  if (sa.size() == 3 && sb.size() == 3) {
    if (sa[0] != sb[0]) {
      throw ShapeError("matmul: batch mismatch " + to_string(sa) + " x " + to_string(sb));
    }
    batch = sa[0];
  } else if (!(sa.size() == 2 && sb.size() == 2)) {
    throw ShapeError("matmul: unsupported ranks " + to_string(sa) + " x " + to_string(sb));
  }
  const std::size_t n = sa[sa.size() - 2];
  const std::size_t k = sa.back();
  const std::size_t m = sb.back();
  if (sb[sb.size() - 2] != k) {
    throw ShapeError("matmul: inner extents differ " + to_string(sa) + " x " + to_string(sb));
  }
  auto da = a.data();
  auto db = b.data();
  std::vector<double> out(batch * n * m, 0.0);
  std::vector<double> terms(k);
  for (std::size_t bi = 0; bi < batch; ++bi) {
    const double* pa = da.data() + bi * n * k;
    const double* pb = db.data() + bi * k * m;
    double* po = out.data() + bi * n * m;
    if (acc == Accumulation::exact) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
          for (std::size_t l = 0; l < k; ++l) terms[l] = pa[i * k + l] * pb[l * m + j];
          po[i * m + j] = exact_sum(terms);
        }
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t l = 0; l < k; ++l) {
          const double av = pa[i * k + l];
          for (std::size_t j = 0; j < m; ++j) po[i * m + j] += av * pb[l * m + j];
        }
      }
    }
  }
  Shape out_shape = sa.size() == 3 ? Shape{batch, n, m} : Shape{n, m};
  return make_result("matmul", out_shape, std::move(out), {a, b}, [a, b](const Tensor& g) {
    return std::vector<Tensor>{matmul(g, transpose(b)), matmul(transpose(a), g)};
  });
}

Tensor transpose(const Tensor& x) {
  const auto& s = x.shape();
  if (s.size() < 2) throw ShapeError("transpose: rank < 2");
  const std::size_t rows = s[s.size() - 2];
  const std::size_t cols = s.back();
  const std::size_t batch = x.size() / std::max<std::size_t>(rows * cols, 1);
  auto src = x.data();
  std::vector<double> out(x.size());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        out[b * rows * cols + j * rows + i] = src[b * rows * cols + i * cols + j];
      }
    }
  }
  Shape shape = s;
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  return make_result("transpose", shape, std::move(out), {x},
                     [](const Tensor& g) { return std::vector<Tensor>{transpose(g)}; });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (element_count(shape) != x.size()) {
    throw ShapeError("reshape: " + to_string(x.shape()) + " -> " + to_string(shape));
  }
  if (shape == x.shape()) return x;
  auto values = x.to_vector();
  return make_result("reshape", std::move(shape), std::move(values), {x}, [x](const Tensor& g) {
    return std::vector<Tensor>{reshape(g, x.shape())};
  });
}

Tensor flatten(const Tensor& x) { return reshape(x, {x.size()}); }

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  const std::size_t ax = normalize_axis(axis, first.size(), "concat");
  Shape shape = first;
  shape[ax] = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != ax && s[d] != first[d]) {
        throw ShapeError("concat: " + to_string(s) + " vs " + to_string(first));
      }
    }
    shape[ax] += s[ax];
  }
  std::size_t outer = 1;
  for (std::size_t d = 0; d < ax; ++d) outer *= shape[d];
  std::size_t inner = 1;
  for (std::size_t d = ax + 1; d < shape.size(); ++d) inner *= shape[d];
  std::vector<double> out;
  out.reserve(element_count(shape));
  for (std::size_t o = 0; o < outer; ++o) {
    for (const auto& p : parts) {
      const std::size_t block = p.shape()[ax] * inner;
      auto src = p.data();
      out.insert(out.end(), src.begin() + static_cast<std::ptrdiff_t>(o * block),
                 src.begin() + static_cast<std::ptrdiff_t>((o + 1) * block));
    }
  }
  return make_result("concat", shape, std::move(out), parts, [parts, ax](const Tensor& g) {
    std::vector<Tensor> grads;
    std::size_t start = 0;
    for (const auto& p : parts) {
      const std::size_t len = p.shape()[ax];
      grads.push_back(slice(g, static_cast<int>(ax), start, len));
      start += len;
    }
    return grads;
  });
}

Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length) {
  const auto& s = x.shape();
  const std::size_t ax = normalize_axis(axis, s.size(), "slice");
  if (start + length > s[ax]) {
    throw ShapeError("slice: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") exceeds extent " + std::to_string(s[ax]));
  }
  if (start == 0 && length == s[ax]) return x;
  std::size_t outer = 1;
  for (std::size_t d = 0; d < ax; ++d) outer *= s[d];
  std::size_t inner = 1;
  for (std::size_t d = ax + 1; d < s.size(); ++d) inner *= s[d];
  auto src = x.data();
  std::vector<double> out;
  out.reserve(outer * length * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    const std::size_t base = (o * s[ax] + start) * inner;
    out.insert(out.end(), src.begin() + static_cast<std::ptrdiff_t>(base),
               src.begin() + static_cast<std::ptrdiff_t>(base + length * inner));
  }
  Shape shape = s;
  shape[ax] = length;
  const std::size_t total = s[ax];
  return make_result("slice", shape, std::move(out), {x}, [ax, start, total](const Tensor& g) {
    return std::vector<Tensor>{pad_axis(g, static_cast<int>(ax), start, total)};
  });
}

Tensor pad_axis(const Tensor& x, int axis, std::size_t start, std::size_t total) {
  const auto& s = x.shape();
  const std::size_t ax = normalize_axis(axis, s.size(), "pad_axis");
  if (start + s[ax] > total) throw ShapeError("pad_axis: block exceeds target extent");
  if (start == 0 && s[ax] == total) return x;
  std::size_t outer = 1;
  for (std::size_t d = 0; d < ax; ++d) outer *= s[d];
  std::size_t inner = 1;
  for (std::size_t d = ax + 1; d < s.size(); ++d) inner *= s[d];
  Shape shape = s;
  shape[ax] = total;
  std::vector<double> out(element_count(shape), 0.0);
  auto src = x.data();
  const std::size_t len = s[ax];
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(o * len * inner), len * inner,
                out.begin() + static_cast<std::ptrdiff_t>((o * total + start) * inner));
  }
  return make_result("pad_axis", shape, std::move(out), {x}, [ax, start, len](const Tensor& g) {
    return std::vector<Tensor>{slice(g, static_cast<int>(ax), start, len)};
  });
}

Tensor element(const Tensor& x, std::size_t index) {
  if (x.rank() != 1) throw ShapeError("element: expected rank 1, got " + to_string(x.shape()));
  return reshape(slice(x, 0, index, 1), {});
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_result("sum", {}, {total}, {x}, [x](const Tensor& g) {
    return std::vector<Tensor>{broadcast_to(g, x.shape())};
  });
}

Tensor sum(const Tensor& x, int axis, bool keepdim) {
  const auto& s = x.shape();
  const std::size_t ax = normalize_axis(axis, s.size(), "sum");
  std::size_t outer = 1;
  for (std::size_t d = 0; d < ax; ++d) outer *= s[d];
  std::size_t inner = 1;
  for (std::size_t d = ax + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t len = s[ax];
  auto src = x.data();
  std::vector<double> out(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t l = 0; l < len; ++l) {
      for (std::size_t i = 0; i < inner; ++i) {
        out[o * inner + i] += src[(o * len + l) * inner + i];
      }
    }
  }
  const Shape keep = reduced_shape(s, ax, true);
  return make_result("sum_axis", reduced_shape(s, ax, keepdim), std::move(out), {x},
                     [x, keep](const Tensor& g) {
                       return std::vector<Tensor>{broadcast_to(reshape(g, keep), x.shape())};
                     });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw ShapeError("mean: empty tensor");
  return sum(x) / static_cast<double>(x.size());
}

Tensor mean(const Tensor& x, int axis, bool keepdim) {
  const std::size_t n = x.dim(axis);
  if (n == 0) throw ShapeError("mean: empty axis");
  return sum(x, axis, keepdim) / static_cast<double>(n);
}

Tensor variance(const Tensor& x) { return mean(square(x - mean(x))); }

Tensor variance(const Tensor& x, int axis, bool keepdim) {
  return mean(square(x - mean(x, axis, true)), axis, keepdim);
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw ShapeError("dot: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  return sum(mul(flatten(a), flatten(b)));
}

Tensor l2_norm(const Tensor& x) {
  double sq = 0.0;
  for (double v : x.data()) sq += v * v;
  const double norm = std::sqrt(sq);
  return make_result("l2_norm", {}, {norm}, {x}, [x, norm](const Tensor& g) {
    if (norm == 0.0) return std::vector<Tensor>{Tensor::zeros(x.shape())};
    return std::vector<Tensor>{mul(g, div(x, l2_norm(x)))};
  });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw ShapeError("cosine_similarity: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  const auto all_zero = [](const Tensor& t) {
    for (double v : t.data()) {
      if (v != 0.0) return false;
    }
    return true;
  };
  if (all_zero(a) || all_zero(b)) return Tensor::scalar(0.0);
  return div(dot(a, b), mul(l2_norm(a), l2_norm(b)));
}

Tensor softmax(const Tensor& x) {
  if (x.rank() == 0) throw ShapeError("softmax: rank 0");
  const std::size_t len = x.dim(-1);
  const std::size_t rows = x.size() / std::max<std::size_t>(len, 1);
  auto src = x.data();
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = src.data() + r * len;
    double* dst = out.data() + r * len;
    const double peak = *std::max_element(row, row + len);
    for (std::size_t j = 0; j < len; ++j) dst[j] = std::exp(row[j] - peak);
    const double z = exact_sum(std::span<const double>(dst, len));
    for (std::size_t j = 0; j < len; ++j) dst[j] /= z;
  }
  return make_result("softmax", x.shape(), std::move(out), {x}, [x](const Tensor& g) {
    const Tensor y = softmax(x);
    return std::vector<Tensor>{mul(y, sub(g, sum(mul(g, y), -1, true)))};
  });
}

Tensor log_softmax(const Tensor& x) {
  if (x.rank() == 0) throw ShapeError("log_softmax: rank 0");
  const std::size_t len = x.dim(-1);
  const std::size_t rows = x.size() / std::max<std::size_t>(len, 1);
  auto src = x.data();
  std::vector<double> out(x.size());
  std::vector<double> terms(len);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = src.data() + r * len;
    const double peak = *std::max_element(row, row + len);
    for (std::size_t j = 0; j < len; ++j) terms[j] = std::exp(row[j] - peak);
    const double lse = peak + std::log(exact_sum(terms));
    for (std::size_t j = 0; j < len; ++j) out[r * len + j] = row[j] - lse;
  }
  return make_result("log_softmax", x.shape(), std::move(out), {x}, [x](const Tensor& g) {
    return std::vector<Tensor>{sub(g, mul(softmax(x), sum(g, -1, true)))};
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps) {
  const std::size_t width = x.dim(-1);
  if (gain.shape() != Shape{width} || shift.shape() != Shape{width}) {
    throw ShapeError("layer_norm: gain/shift must have shape [" + std::to_string(width) + "]");
  }
  const Tensor centered = x - mean(x, -1, true);
  const Tensor var = mean(square(centered), -1, true);
  return centered / sqrt(var + eps) * gain + shift;
}

Tensor embedding(const Tensor& table, const std::vector<std::size_t>& indices) {
  if (table.rank() != 2) throw ShapeError("embedding: table must be rank 2");
  const std::size_t rows = table.dim(0);
  const std::size_t width = table.dim(1);
  auto src = table.data();
  std::vector<double> out;
  out.reserve(indices.size() * width);
  for (auto idx : indices) {
    if (idx >= rows) {
      throw ShapeError("embedding: index " + std::to_string(idx) + " >= " + std::to_string(rows));
    }
    out.insert(out.end(), src.begin() + static_cast<std::ptrdiff_t>(idx * width),
               src.begin() + static_cast<std::ptrdiff_t>((idx + 1) * width));
  }
  return make_result("embedding", {indices.size(), width}, std::move(out), {table},
                     [indices, rows](const Tensor& g) {
                       return std::vector<Tensor>{scatter_rows(g, indices, rows)};
                     });
}

Tensor scatter_rows(const Tensor& x, const std::vector<std::size_t>& indices, std::size_t rows) {
  if (x.rank() != 2 || x.dim(0) != indices.size()) {
    throw ShapeError("scatter_rows: expected (" + std::to_string(indices.size()) + ", d), got " +
                     to_string(x.shape()));
  }
  const std::size_t width = x.dim(1);
  auto src = x.data();
  std::vector<double> out(rows * width, 0.0);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows) throw ShapeError("scatter_rows: index out of range");
    for (std::size_t j = 0; j < width; ++j) out[indices[i] * width + j] += src[i * width + j];
  }
  return make_result("scatter_rows", {rows, width}, std::move(out), {x},
                     [indices](const Tensor& g) {
                       return std::vector<Tensor>{embedding(g, indices)};
                     });
}

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
Tensor operator-(const Tensor& x) { return neg(x); }
Tensor operator+(const Tensor& a, double b) { return add(a, Tensor::scalar(b)); }
Tensor operator+(double a, const Tensor& b) { return add(Tensor::scalar(a), b); }
Tensor operator-(const Tensor& a, double b) { return sub(a, Tensor::scalar(b)); }
Tensor operator-(double a, const Tensor& b) { return sub(Tensor::scalar(a), b); }
Tensor operator*(const Tensor& a, double b) { return mul(a, Tensor::scalar(b)); }
Tensor operator*(double a, const Tensor& b) { return mul(Tensor::scalar(a), b); }
Tensor operator/(const Tensor& a, double b) { return div(a, Tensor::scalar(b)); }
Tensor operator/(double a, const Tensor& b) { return div(Tensor::scalar(a), b); }

}  // namespace metaadamw
