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


// Diagnostic exports: similarity/accuracy scatter, weight-similarity matrix
// and histogram, mask heatmaps and the target-degree sweep table. Every
// figure is plain SVG produced from the exported records alone.

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "u2s/csm.hpp"
#include "u2s/data.hpp"
#include "u2s/nets.hpp"
#include "u2s/tensor.hpp"
#include "u2s/trainer.hpp"

namespace u2s {

/// Pearson correlation; 0 when either input is constant. Throws
/// kInvalidArgument for mismatched or fewer than two values.
double pearson_correlation(std::span<const double> x, std::span<const double> y);

struct ScatterRecord {
  int class_index = 0;
  std::string class_name;
  double similarity = 0.0;  ///< interclass similarity vector entry
  double accuracy = 0.0;    ///< per-class top-1
  std::string source;       ///< one_pass, universal, specific or u2s
};

/// One record per class, pairing interclass_similarity_vector(similarity)
/// with per-class accuracy.
std::vector<ScatterRecord> scatter_records(std::string_view source, const Tensor& similarity,
                                           std::span<const double> per_class_top1,
                                           std::span<const std::string> class_names);

/// Header: source,class,name,similarity,accuracy
std::string scatter_csv(std::span<const ScatterRecord> records);
/// Records of all sources in one plot, one marker shape per source.
std::string scatter_svg(std::span<const ScatterRecord> records, std::string_view title);

struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::size_t> counts;
};

/// Equal-width bins over [lo, hi]; hi falls in the last bin, values outside
/// are clamped to the end bins.
Histogram make_histogram(std::span<const double> values, std::size_t bins, double lo = 0.0,
                         double hi = 1.0);

/// Indices of `names` in lexicographic order (stable).
std::vector<std::size_t> name_order(std::span<const std::string> names);

/// Square matrix with a header row and column of names, rows and columns in
/// `order`.
std::string matrix_csv(const Tensor& matrix, std::span<const std::string> names,
                       std::span<const std::size_t> order);
/// Header: lo,hi,count
std::string histogram_csv(const Histogram& h);
/// Grayscale grid, black = 1.
std::string matrix_svg(const Tensor& matrix, std::span<const std::string> names,
                       std::span<const std::size_t> order, std::string_view title);
std::string histogram_svg(const Histogram& h, std::string_view title);

struct HeatmapRecord {
  std::size_t sample = 0;
  int category = -1;  ///< -1 for the combined prediction-time mask
  std::size_t frame = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  ///< raw sigmoid outputs, row-major
};

/// For each sample: the activated mask of every class in `classes` at
/// `frame`, followed by the combined mask for the universal prediction.
/// Throws kInvalidArgument for an invalid class, sample or frame.
std::vector<HeatmapRecord> mask_heatmaps(U2sModel& model, const Dataset& data,
                                         std::span<const std::size_t> samples,
                                         std::span<const int> classes, const Csm& csm,
                                         std::size_t frame = 0);

/// Row per grid row, comma-separated values.
std::string heatmap_csv(const HeatmapRecord& record);
/// Records laid out one sample per row.
std::string heatmap_svg(std::span<const HeatmapRecord> records,
                        std::span<const std::string> class_names);

struct SweepRow {
  double target_degree = 0.0;
  double alpha = 0.0;
  double mean_degree = 0.0;
  double top1 = 0.0;
  double top5 = 0.0;
};

/// Header: target_degree,alpha,mean_degree,top1,top5
std::string sweep_csv(std::span<const SweepRow> rows);
std::string sweep_svg(std::span<const SweepRow> rows);

}  // namespace u2s
