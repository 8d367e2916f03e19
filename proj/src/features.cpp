#include "metaadamw/features.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "metaadamw/numeric.hpp"
#include "metaadamw/optimizer.hpp"

namespace metaadamw {

std::string_view to_string(FeatureVersion version) {
  switch (version) {
    case FeatureVersion::basic: return "basic";
    case FeatureVersion::basic_plus: return "basic_plus";
    case FeatureVersion::enhanced: return "enhanced";
  }
  return "basic";
}

FeatureVersion parse_feature_version(std::string_view text) {
  if (text == "basic") return FeatureVersion::basic;
  if (text == "basic_plus") return FeatureVersion::basic_plus;
  if (text == "enhanced") return FeatureVersion::enhanced;
  throw std::invalid_argument("unknown feature version '" + std::string(text) + "'");
}

namespace {

std::vector<std::string> statistic_names(const FeatureOptions& o) {
  switch (o.version) {
    case FeatureVersion::basic: {
      std::vector<std::string> c{"grad_norm", "momentum_norm", "param_norm", "grad_momentum_cos"};
      if (o.use_v_norms) c.push_back("v_norm");
      return c;
    }
    case FeatureVersion::basic_plus: {
      std::vector<std::string> base{"grad_norm", "momentum_norm", "param_norm", "grad_momentum_cos"};
      if (o.use_v_norms) base.push_back("v_norm");
      std::vector<std::string> c;
      for (const auto& b : base) c.push_back(b + "_mean");
      for (const auto& b : base) c.push_back(b + "_std");
      return c;
    }
    case FeatureVersion::enhanced: {
      std::vector<std::string> c{"grad_norm_mean",    "grad_norm_var",     "momentum_norm_mean",
                                 "momentum_norm_var", "grad_sparsity",     "momentum_sparsity",
                                 "log_size",          "bias_ratio",        "depth"};
      if (o.use_v_norms) c.push_back("v_norm_mean");
      return c;
    }
  }
  return {};
}

double norm_of(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

double cosine_of(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0;
  double aa = 0.0;
  double bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

double mean_of(const std::vector<double>& x) {
  return x.empty() ? 0.0 : exact_sum(x) / static_cast<double>(x.size());
}

double variance_of(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  const double mu = mean_of(x);
  std::vector<double> sq(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) sq[i] = (x[i] - mu) * (x[i] - mu);
  return exact_sum(sq) / static_cast<double>(x.size());
}

double fraction_below(std::span<const double> x, double threshold, std::size_t& count) {
  std::size_t below = 0;
  for (double v : x) below += std::fabs(v) < threshold ? 1 : 0;
  count += x.size();
  return static_cast<double>(below);
}

}  // namespace

std::size_t feature_dim(const FeatureOptions& options) {
  std::size_t d = statistic_names(options).size() + (options.include_time ? 1 : 0);
  if (options.version == FeatureVersion::enhanced) d += options.embedding_width;
  return d;
}

double time_feature(std::int64_t t) {
  if (t < 0) throw std::invalid_argument("time_feature: negative step");
  return std::min(1.0, std::log1p(static_cast<double>(t)) / std::log1p(1e6));
}

FeatureMatrix extract_features(const Model& model, const std::vector<ParamGroup>& groups,
                               std::span<const Tensor> grads, const AdamState& state,
                               std::int64_t t, const FeatureOptions& options,
                               const Tensor& embedding) {
  if (t < 0) throw std::invalid_argument("extract_features: negative time step");
  const auto& params = model.parameters();
  if (grads.size() != params.size()) {
    throw std::invalid_argument("extract_features: expected one gradient per parameter");
  }
  if (state.m.size() != params.size() || (options.use_v_norms && state.v.size() != params.size())) {
    throw std::invalid_argument("extract_features: optimizer state is missing moments");
  }
  if (groups.empty()) throw std::invalid_argument("extract_features: no groups");

  const auto names = statistic_names(options);
  const std::size_t stats = names.size();
  const std::size_t width = stats + (options.include_time ? 1 : 0);
  const std::size_t depth_span = std::max<std::size_t>(1, model.depth_count() - 1);
  std::vector<double> table(groups.size() * width, 0.0);

  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::vector<double> gn, mn, pn, cs, vn;
    double grad_zero = 0.0, mom_zero = 0.0, bias = 0.0, depth = 0.0;
    std::size_t grad_n = 0, mom_n = 0, elements = 0;
    for (auto i : groups[g].members) {
      const auto gi = grads[i].data();
      const auto mi = state.m[i].data();
      if (gi.size() != params[i].value.size() || mi.size() != gi.size()) {
        throw std::invalid_argument("extract_features: size mismatch for " + params[i].meta.name);
      }
      gn.push_back(norm_of(gi));
      mn.push_back(norm_of(mi));
      pn.push_back(norm_of(params[i].value.data()));
      cs.push_back(cosine_of(gi, mi));
      if (options.use_v_norms) vn.push_back(norm_of(state.v[i].data()));
      grad_zero += fraction_below(gi, kSparsityThreshold, grad_n);
      mom_zero += fraction_below(mi, kSparsityThreshold, mom_n);
      bias += params[i].meta.is_bias ? 1.0 : 0.0;
      depth += static_cast<double>(params[i].meta.depth_index) / static_cast<double>(depth_span);
      elements += gi.size();
    }
    const double members = static_cast<double>(groups[g].members.size());
    std::vector<double> row;
    switch (options.version) {
      case FeatureVersion::basic:
        row = {mean_of(gn), mean_of(mn), mean_of(pn), mean_of(cs)};
        if (options.use_v_norms) row.push_back(mean_of(vn));
        break;
      case FeatureVersion::basic_plus: {
        std::vector<const std::vector<double>*> cols{&gn, &mn, &pn, &cs};
        if (options.use_v_norms) cols.push_back(&vn);
        for (auto* c : cols) row.push_back(mean_of(*c));
        for (auto* c : cols) row.push_back(std::sqrt(variance_of(*c)));
        break;
      }
      case FeatureVersion::enhanced:
        row = {mean_of(gn),
               variance_of(gn),
               mean_of(mn),
               variance_of(mn),
               grad_n ? grad_zero / static_cast<double>(grad_n) : 0.0,
               mom_n ? mom_zero / static_cast<double>(mom_n) : 0.0,
               std::log(static_cast<double>(std::max<std::size_t>(elements, 1))),
               bias / members,
               depth / members};
        if (options.use_v_norms) row.push_back(mean_of(vn));
        break;
    }
    if (options.include_time) row.push_back(time_feature(t));
    std::copy(row.begin(), row.end(), table.begin() + static_cast<std::ptrdiff_t>(g * width));
  }

  FeatureMatrix f;
  f.values = Tensor({groups.size(), width}, std::move(table));
  f.version = options.version;
  f.columns = names;
  if (options.include_time) f.columns.push_back("time");
  f.statistical_columns = stats;
  f.time_step = t;
  if (options.normalized) f = normalize_features(f);

  if (options.version == FeatureVersion::enhanced && options.embedding_width > 0) {
    if (!embedding.defined() || embedding.shape() != Shape{groups.size(), options.embedding_width}) {
      throw ShapeError("extract_features: enhanced features need a (" + std::to_string(groups.size()) +
                       ", " + std::to_string(options.embedding_width) + ") group embedding");
    }
    f.values = concat({f.values, embedding}, 1);
    for (std::size_t j = 0; j < options.embedding_width; ++j) {
      f.columns.push_back("embedding" + std::to_string(j));
    }
  }
  return f;
}

FeatureMatrix normalize_features(const FeatureMatrix& f) {
  // The statistics are computed without a graph, so the statistical block is
  // standardized on raw values; any later columns keep their graph links.
  const std::size_t rows = f.values.dim(0);
  const std::size_t cols = f.values.dim(1);
  const std::size_t s = f.statistical_columns;
  if (rows == 0) throw std::invalid_argument("normalize_features: no groups");
  if (s == 0) return f;
  const auto src = f.values.data();
  std::vector<double> block(rows * s);
  for (std::size_t j = 0; j < s; ++j) {
    std::vector<double> col(rows);
    for (std::size_t r = 0; r < rows; ++r) col[r] = src[r * cols + j];
    const double mu = mean_of(col);
    const double sd = std::sqrt(variance_of(col));
    for (std::size_t r = 0; r < rows; ++r) block[r * s + j] = (col[r] - mu) / (sd + 1e-8);
  }
  FeatureMatrix out = f;
  const Tensor stats({rows, s}, std::move(block));
  out.values = s == cols ? stats : concat({stats, slice(f.values, 1, s, cols - s)}, 1);
  return out;
}

std::pair<FeatureMatrix, Tensor> apply_gate(const FeatureMatrix& f, const Tensor& logits,
                                            double l1_weight) {
  const std::size_t d = f.values.dim(1);
  if (logits.shape() != Shape{d}) {
    throw ShapeError("apply_gate: gate has shape " + to_string(logits.shape()) + " for " +
                     std::to_string(d) + " feature columns");
  }
  if (l1_weight < 0.0) throw std::invalid_argument("apply_gate: negative l1 weight");
  const Tensor gate = sigmoid(logits);
  FeatureMatrix out = f;
  out.values = f.values * gate;
  return {std::move(out), sum(gate) * l1_weight};
}

}  // namespace metaadamw
