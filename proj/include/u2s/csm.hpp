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


// Category similarity: channel-sparsity signatures, the similarity matrix S,
// its thresholded binary form, and the interclass similarity vector.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "u2s/tensor.hpp"

namespace u2s {

/// Responses above this count as nonzero when measuring sparsity.
inline constexpr double kNonzeroEpsilon = 1e-6;

struct SparsitySignature {
  std::vector<double> per_channel;  ///< entries in [0, 1]
  std::optional<int> category;
  std::size_t support_count = 0;
};

/// How a predicted class turns into mask weights.
enum class CsmMode {
  kBinary,  ///< mean over classes j with C[j][pred] = 1
  kSoft,    ///< weighted mean with weights S[j][pred]
  kSimple,  ///< the predicted class's own mask only
};

std::string_view csm_mode_name(CsmMode mode);
CsmMode parse_csm_mode(std::string_view name);

enum class DistanceKind {
  kCosine,               ///< 1 - cos(a, b)
  kNormalizedEuclidean,  ///< |a - b| / sqrt(C)
};

std::string_view distance_kind_name(DistanceKind kind);
DistanceKind parse_distance_kind(std::string_view name);

struct Csm {
  std::size_t num_classes = 0;
  std::vector<double> similarity;     ///< S, row-major M x M
  std::vector<std::uint8_t> binary;   ///< C, row-major M x M
  double alpha = 0.0;
  CsmMode mode = CsmMode::kBinary;
  std::vector<std::string> class_names;

  double s(std::size_t i, std::size_t j) const { return similarity[i * num_classes + j]; }
  bool c(std::size_t i, std::size_t j) const { return binary[i * num_classes + j] != 0; }
  /// Mean number of off-diagonal ones per row.
  double mean_degree() const;
  /// Checks symmetry, unit diagonal, value ranges and C = [S >= alpha].
  void validate() const;

  bool operator==(const Csm&) const = default;
};

/// Xi^c = 1 - (fraction of (t, h, w) with x > eps) for features (T, C, H, W).
std::vector<double> channel_sparsity(const Tensor& features, double eps = kNonzeroEpsilon);

/// Same for sample `n` of a batched (N, T, C, H, W) feature map.
std::vector<double> channel_sparsity(const Tensor& batch, std::size_t n,
                                     double eps = kNonzeroEpsilon);

/// Per-class mean of per-sample sparsity vectors.
std::vector<SparsitySignature> category_signatures(std::span<const std::vector<double>> per_sample,
                                                   std::span<const int> labels, int num_classes);

/// S[i][j] = 1 - f_dist(Xi_i, Xi_j); returned as an (M, M) tensor. A zero-norm
/// signature gets similarity 0 to every other class under cosine distance.
Tensor similarity_matrix(std::span<const SparsitySignature> signatures,
                         DistanceKind distance = DistanceKind::kCosine);

/// C[i][j] = [S[i][j] >= alpha].
Csm binarize(const Tensor& similarity, double alpha, CsmMode mode = CsmMode::kBinary);

/// Picks the smallest alpha among the off-diagonal values of S whose mean
/// off-diagonal degree is <= target. When no such value exists alpha moves
/// above the largest off-diagonal value, halfway to 1 (or to 1 itself).
Csm binarize_with_target_degree(const Tensor& similarity, double target_degree,
                                CsmMode mode = CsmMode::kBinary);

/// Off-diagonal row sums of S, min-max normalized to [0, 1]. A constant
/// vector maps to zeros.
std::vector<double> interclass_similarity_vector(const Tensor& similarity);

std::string csm_to_json(const Csm& csm);
Csm csm_from_json(std::string_view text);

}  // namespace u2s
