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


#include "u2s/csm.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "u2s/error.hpp"

namespace u2s {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::size_t square_extent(const Tensor& s, std::string_view op) {
  if (s.rank() != 2 || s.dim(0) != s.dim(1)) {
    fail(ErrorCode::kShape, std::string(op) + ": similarity must be square, got " +
                                shape_string(s.shape));
  }
  return s.dim(0);
}

std::size_t off_diagonal_count(const Tensor& s, double alpha) {
  const std::size_t m = s.dim(0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (i != j && s[i * m + j] >= alpha) ++count;
  return count;
}

}  // namespace

std::string_view csm_mode_name(CsmMode mode) {
  switch (mode) {
    case CsmMode::kBinary: return "binary";
    case CsmMode::kSoft: return "soft";
    case CsmMode::kSimple: return "simple";
  }
  return "binary";
}

CsmMode parse_csm_mode(std::string_view name) {
  if (name == "binary") return CsmMode::kBinary;
  if (name == "soft") return CsmMode::kSoft;
  if (name == "simple") return CsmMode::kSimple;
  fail(ErrorCode::kValidation, "unknown csm mode '" + std::string(name) + "'");
}

std::string_view distance_kind_name(DistanceKind kind) {
  return kind == DistanceKind::kCosine ? "cosine" : "normalized_euclidean";
}

DistanceKind parse_distance_kind(std::string_view name) {
  if (name == "cosine") return DistanceKind::kCosine;
  if (name == "normalized_euclidean") return DistanceKind::kNormalizedEuclidean;
  fail(ErrorCode::kValidation, "unknown distance '" + std::string(name) + "'");
}

double Csm::mean_degree() const {
  std::size_t count = 0;
  for (std::size_t i = 0; i < num_classes; ++i)
    for (std::size_t j = 0; j < num_classes; ++j)
      if (i != j && c(i, j)) ++count;
  return num_classes ? static_cast<double>(count) / static_cast<double>(num_classes) : 0.0;
}

void Csm::validate() const {
  const std::size_t m = num_classes;
  auto bad = [](const std::string& msg) { fail(ErrorCode::kValidation, "csm: " + msg); };
  if (m == 0) bad("empty matrix");
  if (similarity.size() != m * m || binary.size() != m * m) bad("matrix sizes do not match M");
  if (!class_names.empty() && class_names.size() != m) bad("class_names needs M entries");
  if (!(alpha >= 0.0 && alpha <= 1.0)) bad("alpha outside [0, 1]");
  for (std::size_t i = 0; i < m; ++i) {
    if (s(i, i) != 1.0) bad("diagonal of S must be exactly 1");
    for (std::size_t j = 0; j < m; ++j) {
      if (!(s(i, j) >= 0.0 && s(i, j) <= 1.0)) bad("S entries must lie in [0, 1]");
      if (s(i, j) != s(j, i)) bad("S must be symmetric");
      if (binary[i * m + j] > 1) bad("C entries must be 0 or 1");
      if (c(i, j) != (s(i, j) >= alpha)) bad("C must equal [S >= alpha]");
    }
  }
}

std::vector<double> channel_sparsity(const Tensor& features, double eps) {
  if (features.rank() != 4) {
    fail(ErrorCode::kShape, "channel_sparsity: features must be (T, C, H, W), got " +
                                shape_string(features.shape));
  }
  const std::size_t t = features.dim(0), c = features.dim(1);
  const std::size_t hw = features.dim(2) * features.dim(3);
  if (t * hw == 0) fail(ErrorCode::kShape, "channel_sparsity: empty spatiotemporal extent");
  std::vector<double> xi(c);
  for (std::size_t k = 0; k < c; ++k) {
    std::size_t nonzero = 0;
    for (std::size_t f = 0; f < t; ++f) {
      const double* p = &features.values[(f * c + k) * hw];
      for (std::size_t q = 0; q < hw; ++q)
        if (p[q] > eps) ++nonzero;
    }
    xi[k] = 1.0 - static_cast<double>(nonzero) / static_cast<double>(t * hw);
  }
  return xi;
}

std::vector<double> channel_sparsity(const Tensor& batch, std::size_t n, double eps) {
  if (batch.rank() != 5) {
    fail(ErrorCode::kShape, "channel_sparsity: batch must be (N, T, C, H, W), got " +
                                shape_string(batch.shape));
  }
  const std::size_t per = batch.numel() / batch.dim(0);
  Tensor one({batch.dim(1), batch.dim(2), batch.dim(3), batch.dim(4)},
             std::vector<double>(batch.values.begin() + static_cast<std::ptrdiff_t>(n * per),
                                 batch.values.begin() + static_cast<std::ptrdiff_t>((n + 1) * per)));
  return channel_sparsity(one, eps);
}

std::vector<SparsitySignature> category_signatures(std::span<const std::vector<double>> per_sample,
                                                   std::span<const int> labels, int num_classes) {
  if (per_sample.size() != labels.size()) {
    fail(ErrorCode::kShape, "category_signatures: one label per sample required");
  }
  if (per_sample.empty()) fail(ErrorCode::kEmptyInput, "category_signatures: no samples");
  const std::size_t c = per_sample.front().size();
  std::vector<SparsitySignature> sigs(static_cast<std::size_t>(num_classes));
  for (int m = 0; m < num_classes; ++m) {
    sigs[static_cast<std::size_t>(m)].per_channel.assign(c, 0.0);
    sigs[static_cast<std::size_t>(m)].category = m;
  }
  for (std::size_t i = 0; i < per_sample.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      fail(ErrorCode::kLabelRange, "category_signatures: label " + std::to_string(labels[i]) +
                                       " out of range");
    }
    if (per_sample[i].size() != c) {
      fail(ErrorCode::kShape, "category_signatures: sparsity vectors differ in length");
    }
    auto& sig = sigs[static_cast<std::size_t>(labels[i])];
    for (std::size_t k = 0; k < c; ++k) sig.per_channel[k] += per_sample[i][k];
    ++sig.support_count;
  }
  for (auto& sig : sigs) {
    if (sig.support_count == 0) {
      fail(ErrorCode::kEmptyInput,
           "category_signatures: class " + std::to_string(*sig.category) + " has no samples");
    }
    for (double& v : sig.per_channel) v /= static_cast<double>(sig.support_count);
  }
  return sigs;
}

Tensor similarity_matrix(std::span<const SparsitySignature> signatures, DistanceKind distance) {
  const std::size_t m = signatures.size();
  if (m == 0) fail(ErrorCode::kEmptyInput, "similarity_matrix: no signatures");
  const std::size_t c = signatures.front().per_channel.size();
  for (const auto& s : signatures) {
    if (s.per_channel.size() != c) {
      fail(ErrorCode::kShape, "similarity_matrix: signatures differ in length");
    }
  }
  std::vector<double> norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    norms[i] = std::sqrt(dot(signatures[i].per_channel, signatures[i].per_channel));
    if (distance == DistanceKind::kCosine && norms[i] == 0.0) {
      warn("similarity_matrix: signature of class " + std::to_string(i) +
           " has zero norm; its similarity to other classes is set to 0");
    }
  }
  Tensor s({m, m});
  for (std::size_t i = 0; i < m; ++i) {
    s[i * m + i] = 1.0;
    for (std::size_t j = i + 1; j < m; ++j) {
      const auto& a = signatures[i].per_channel;
      const auto& b = signatures[j].per_channel;
      double sim = 0.0;
      if (distance == DistanceKind::kCosine) {
        if (norms[i] > 0.0 && norms[j] > 0.0) sim = dot(a, b) / (norms[i] * norms[j]);
      } else {
        double d2 = 0.0;
        for (std::size_t k = 0; k < c; ++k) d2 += (a[k] - b[k]) * (a[k] - b[k]);
        sim = 1.0 - std::sqrt(d2 / static_cast<double>(c));
      }
      sim = std::clamp(sim, 0.0, 1.0);
      s[i * m + j] = s[j * m + i] = sim;
    }
  }
  return s;
}

Csm binarize(const Tensor& similarity, double alpha, CsmMode mode) {
  const std::size_t m = square_extent(similarity, "binarize");
  Csm csm;
  csm.num_classes = m;
  csm.similarity = similarity.values;
  csm.binary.resize(m * m);
  for (std::size_t i = 0; i < m * m; ++i) csm.binary[i] = similarity[i] >= alpha ? 1 : 0;
  csm.alpha = alpha;
  csm.mode = mode;
  return csm;
}

Csm binarize_with_target_degree(const Tensor& similarity, double target_degree, CsmMode mode) {
  const std::size_t m = square_extent(similarity, "binarize_with_target_degree");
  if (m < 2) fail(ErrorCode::kInvalidArgument, "binarize_with_target_degree: need M >= 2");
  if (!(target_degree >= 1.0 && target_degree < static_cast<double>(m))) {
    fail(ErrorCode::kInvalidArgument, "target degree must lie in [1, M)");
  }
  std::set<double> values;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (i != j) values.insert(similarity[i * m + j]);
  const double budget = target_degree * static_cast<double>(m);
  for (double v : values) {
    if (static_cast<double>(off_diagonal_count(similarity, v)) <= budget) {
      return binarize(similarity, v, mode);
    }
  }
  const double top = *values.rbegin();
  const double alpha = top < 1.0 ? 0.5 * (top + 1.0) : 1.0;
  Csm csm = binarize(similarity, alpha, mode);
  warn("binarize_with_target_degree: no threshold among the similarity values reaches a mean "
       "degree <= " + std::to_string(target_degree) + "; alpha set to " + std::to_string(alpha) +
       ", mean degree " + std::to_string(csm.mean_degree()));
  return csm;
}

std::vector<double> interclass_similarity_vector(const Tensor& similarity) {
  const std::size_t m = square_extent(similarity, "interclass_similarity_vector");
  if (m < 2) fail(ErrorCode::kInvalidArgument, "interclass_similarity_vector: need M >= 2");
  std::vector<double> sums(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) sums[i] += similarity[i * m + j];
    sums[i] -= 1.0;
  }
  const auto [lo, hi] = std::minmax_element(sums.begin(), sums.end());
  const double min = *lo, range = *hi - *lo;
  if (range == 0.0) {
    warn("interclass_similarity_vector: constant similarity sums; all entries set to 0");
    return std::vector<double>(m, 0.0);
  }
  for (double& v : sums) v = (v - min) / range;
  return sums;
}

std::string csm_to_json(const Csm& csm) {
  nlohmann::ordered_json j;
  j["alpha"] = csm.alpha;
  j["mode"] = std::string(csm_mode_name(csm.mode));
  j["num_classes"] = csm.num_classes;
  j["S"] = csm.similarity;
  std::vector<int> bin(csm.binary.begin(), csm.binary.end());
  j["C_bin"] = bin;
  j["class_names"] = csm.class_names;
  return j.dump(2) + "\n";
}

Csm csm_from_json(std::string_view text) {
  Csm csm;
  try {
    const auto j = nlohmann::json::parse(text);
    csm.alpha = j.at("alpha").get<double>();
    csm.mode = parse_csm_mode(j.at("mode").get<std::string>());
    csm.num_classes = j.at("num_classes").get<std::size_t>();
    csm.similarity = j.at("S").get<std::vector<double>>();
    for (int v : j.at("C_bin").get<std::vector<int>>()) {
      csm.binary.push_back(static_cast<std::uint8_t>(v));
    }
    csm.class_names = j.at("class_names").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kIo, std::string("csm json: ") + e.what());
  }
  csm.validate();
  return csm;
}

}  // namespace u2s
