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


// Mask network: category-specific masks from a 1x1x1 linear combiner, bridge
// logits, CSM-driven mask selection, and category regularization of the
// combiner weights.

#pragma once

#include <span>
#include <string_view>

#include "u2s/csm.hpp"
#include "u2s/tensor.hpp"

namespace u2s {

/// Similarity of two combiner columns, mapped into [0, 1].
enum class WeightSimilarity {
  kHalfCosine,     ///< (1 + cos) / 2
  kSquaredCosine,  ///< cos^2
};

std::string_view weight_similarity_name(WeightSimilarity kind);
WeightSimilarity parse_weight_similarity(std::string_view name);

struct MaskSet {
  Var raw;        ///< (N, T, M, H', W')
  Var activated;  ///< sigmoid(raw)
};

/// raw[n,t,m,h,w] = sum_c features[n,t,c,h,w] * weight[c,m] + bias[m].
MaskSet generate_category_masks(Graph& g, Var features, Var weight, Var bias);
MaskSet generate_category_masks(Graph& g, Var features, Layer& head, bool trainable = true);

/// Mean of the raw masks over (T, H', W'): (N, M).
Var bridge_logits(Graph& g, const MaskSet& masks);

/// (N, M) selection weights per predicted class under the CSM mode. Binary
/// selection reads column `pred` of C.
Tensor selection_weights(const Csm& csm, std::span<const int> predicted);

/// Combined mask (N, T, 1, H', W') for the predicted classes.
Var combine_masks_for_prediction(Graph& g, const MaskSet& masks, std::span<const int> predicted,
                                 const Csm& csm);

/// S^w over the columns of a (C, M) weight matrix.
Tensor weight_similarity_matrix(const Tensor& weight,
                                WeightSimilarity kind = WeightSimilarity::kHalfCosine);

/// Mean of s^w over ordered off-diagonal pairs with C = 1; 0 when there are none.
double mean_confusing_weight_similarity(const Tensor& weight, const Csm& csm,
                                        WeightSimilarity kind = WeightSimilarity::kHalfCosine);

/// w_regular as a differentiable scalar of `weight`.
Var category_regularizer(Graph& g, Var weight, const Csm& csm,
                         WeightSimilarity kind = WeightSimilarity::kHalfCosine);

}  // namespace u2s
