// Copyright 2026 The U2S Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "u2s/masknet.hpp"

#include <cmath>

#include "u2s/error.hpp"

namespace u2s {

namespace {

constexpr double kNormClamp = 1e-12;

struct Columns {
  std::size_t c = 0;
  std::size_t m = 0;
  std::vector<double> norms;  // clamped
  std::vector<bool> clamped;
};

Columns column_norms(const Tensor& w) {
  if (w.rank() != 2) {
    fail(ErrorCode::kShape, "mask head weight must be (C, M), got " + shape_string(w.shape));
  }
  Columns cols;
  cols.c = w.dim(0);
  cols.m = w.dim(1);
  cols.norms.resize(cols.m);
  cols.clamped.resize(cols.m);
  for (std::size_t i = 0; i < cols.m; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < cols.c; ++k) s += w[k * cols.m + i] * w[k * cols.m + i];
    const double n = std::sqrt(s);
    cols.clamped[i] = n < kNormClamp;
    cols.norms[i] = cols.clamped[i] ? kNormClamp : n;
  }
  return cols;
}

double column_cos(const Tensor& w, const Columns& cols, std::size_t i, std::size_t j) {
  double d = 0.0;
  for (std::size_t k = 0; k < cols.c; ++k) d += w[k * cols.m + i] * w[k * cols.m + j];
  return d / (cols.norms[i] * cols.norms[j]);
}

double similarity_of(double cos, WeightSimilarity kind) {
  return kind == WeightSimilarity::kHalfCosine ? 0.5 * (1.0 + cos) : cos * cos;
}

double similarity_slope(double cos, WeightSimilarity kind) {
  return kind == WeightSimilarity::kHalfCosine ? 0.5 : 2.0 * cos;
}

void check_csm_extent(const Csm& csm, std::size_t m, std::string_view op) {
  if (csm.num_classes != m) {
    fail(ErrorCode::kShape, std::string(op) + ": CSM has " + std::to_string(csm.num_classes) +
                                " classes, masks have " + std::to_string(m));
  }
}

}  // namespace

std::string_view weight_similarity_name(WeightSimilarity kind) {
  return kind == WeightSimilarity::kHalfCosine ? "half_cosine" : "squared_cosine";
}

WeightSimilarity parse_weight_similarity(std::string_view name) {
  if (name == "half_cosine") return WeightSimilarity::kHalfCosine;
  if (name == "squared_cosine") return WeightSimilarity::kSquaredCosine;
  fail(ErrorCode::kValidation, "unknown weight similarity '" + std::string(name) + "'");
}

MaskSet generate_category_masks(Graph& g, Var features, Var weight, Var bias) {
  MaskSet out;
  out.raw = ops::per_position_linear(g, features, weight, bias);
  out.activated = ops::sigmoid(g, out.raw);
  return out;
}

MaskSet generate_category_masks(Graph& g, Var features, Layer& head, bool trainable) {
  return generate_category_masks(g, features, g.parameter(head.weight(), trainable),
                                 g.parameter(head.bias(), trainable));
}

Var bridge_logits(Graph& g, const MaskSet& masks) { return ops::global_avg_pool(g, masks.raw); }

Tensor selection_weights(const Csm& csm, std::span<const int> predicted) {
  const std::size_t m = csm.num_classes;
  Tensor w({predicted.size(), m});
  for (std::size_t n = 0; n < predicted.size(); ++n) {
    const int p = predicted[n];
    if (p < 0 || static_cast<std::size_t>(p) >= m) {
      fail(ErrorCode::kLabelRange, "predicted class " + std::to_string(p) + " outside [0, " +
                                       std::to_string(m) + ")");
    }
    const auto col = static_cast<std::size_t>(p);
    for (std::size_t j = 0; j < m; ++j) {
      double v = 0.0;
      switch (csm.mode) {
        case CsmMode::kBinary: v = csm.c(j, col) ? 1.0 : 0.0; break;
        case CsmMode::kSoft: v = csm.s(j, col); break;
        case CsmMode::kSimple: v = j == col ? 1.0 : 0.0; break;
      }
      w[n * m + j] = v;
    }
  }
  return w;
}

Var combine_masks_for_prediction(Graph& g, const MaskSet& masks, std::span<const int> predicted,
                                 const Csm& csm) {
  const Tensor& a = g.value(masks.activated);
  if (a.rank() != 5) {
    fail(ErrorCode::kShape, "masks must be (N, T, M, H, W), got " + shape_string(a.shape));
  }
  check_csm_extent(csm, a.dim(2), "combine_masks_for_prediction");
  if (predicted.size() != a.dim(0)) {
    fail(ErrorCode::kShape, "combine_masks_for_prediction: axis N has extent " +
                                std::to_string(a.dim(0)) + " but " +
                                std::to_string(predicted.size()) + " predictions were given");
  }
  return ops::channel_weighted_mean(g, masks.activated, selection_weights(csm, predicted));
}

Tensor weight_similarity_matrix(const Tensor& weight, WeightSimilarity kind) {
  const Columns cols = column_norms(weight);
  Tensor s({cols.m, cols.m});
  for (std::size_t i = 0; i < cols.m; ++i)
    for (std::size_t j = 0; j < cols.m; ++j)
      s[i * cols.m + j] = similarity_of(column_cos(weight, cols, i, j), kind);
  return s;
}

double mean_confusing_weight_similarity(const Tensor& weight, const Csm& csm,
                                        WeightSimilarity kind) {
  const Tensor s = weight_similarity_matrix(weight, kind);
  const std::size_t m = s.dim(0);
  check_csm_extent(csm, m, "mean_confusing_weight_similarity");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (i != j && csm.c(i, j)) {
        total += s[i * m + j];
        ++count;
      }
  return count ? total / static_cast<double>(count) : 0.0;
}

Var category_regularizer(Graph& g, Var weight, const Csm& csm, WeightSimilarity kind) {
  const Tensor& w = g.value(weight);
  const Columns cols = column_norms(w);
  check_csm_extent(csm, cols.m, "category_regularizer");
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < cols.m; ++i)
    for (std::size_t j = 0; j < cols.m; ++j)
      if (i != j && csm.c(i, j)) pairs.emplace_back(i, j);
  for (std::size_t i = 0; i < cols.m; ++i) {
    if (cols.clamped[i]) {
      warn("category_regularizer: mask head column " + std::to_string(i) +
           " has near-zero norm; clamped at 1e-12");
    }
  }
  double value = 0.0;
  for (auto [i, j] : pairs) value += similarity_of(column_cos(w, cols, i, j), kind);
  if (!pairs.empty()) value /= static_cast<double>(pairs.size());
  const Var parents[] = {weight};
  return g.record(Tensor({1}, value), parents,
                  [weight, cols, pairs, kind](Graph& gr, std::size_t self) {
    if (pairs.empty()) return;
    const double go = gr.grad_mut(self)[0] / static_cast<double>(pairs.size());
    const Tensor& w = gr.value(weight.id);
    auto gw = gr.grad_mut(weight.id);
    const std::size_t c = cols.c, m = cols.m;
    for (auto [i, j] : pairs) {
      const double cos = column_cos(w, cols, i, j);
      const double k = go * similarity_slope(cos, kind);
      const double inv = 1.0 / (cols.norms[i] * cols.norms[j]);
      // d cos / d w_i = w_j / (|w_i||w_j|) - cos * w_i / |w_i|^2, symmetric in j.
      const double self_i = cols.clamped[i] ? 0.0 : cos / (cols.norms[i] * cols.norms[i]);
      const double self_j = cols.clamped[j] ? 0.0 : cos / (cols.norms[j] * cols.norms[j]);
      for (std::size_t r = 0; r < c; ++r) {
        const double wi = w[r * m + i], wj = w[r * m + j];
        gw[r * m + i] += k * (wj * inv - self_i * wi);
        gw[r * m + j] += k * (wi * inv - self_j * wj);
      }
    }
  });
}

}  // namespace u2s
