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


// Synthetic confusable-class data, CSV ingestion, segment-based frame
// sampling and minibatch iteration.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "u2s/random.hpp"
#include "u2s/tensor.hpp"

namespace u2s {

/// Spatiotemporal extents (T, H, W) of one sample.
struct Grid {
  std::size_t frames = 4;
  std::size_t height = 8;
  std::size_t width = 8;

  bool operator==(const Grid&) const = default;
};

struct PatchSize {
  std::size_t height = 2;
  std::size_t width = 2;

  bool operator==(const PatchSize&) const = default;
};

struct DatasetSpec {
  int num_classes = 8;
  std::vector<std::pair<int, int>> confusable_pairs;
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 100;
  Grid grid;
  double signal_scale = 0.25;  ///< texture amplitude
  double patch_scale = 1.0;     ///< member-specific amplitude inside the patch
  double noise_scale = 0.4;
  PatchSize discriminant_patch;
  /// Spatial period of the class-wide texture. Patch corners are aligned to
  /// it when the patch fits.
  std::size_t texture_period = 2;
  /// Optional per-pair multiplier of the discriminant signal (default 1).
  std::vector<double> pair_contrast;
  /// Pulls the texture of low-contrast pairs toward the mean texture.
  double texture_overlap = 1.0;
  /// Strength of the marker shared by both members of a pair inside the patch.
  double marker_scale = 1.5;
  std::uint64_t seed = 0;

  /// Throws kValidation describing the first violated invariant.
  void validate() const;
};

struct Sample {
  Tensor frames;  ///< (T, channels, H, W)
  int label = 0;
};

struct Dataset {
  std::vector<Sample> samples;
  Grid grid;
  std::size_t channels = 1;
  int num_classes = 0;
};

/// Where the discriminant signal of one confusable pair lives.
struct PlantedPatch {
  int class_a = 0;
  int class_b = 0;
  std::size_t row = 0;
  std::size_t col = 0;
  PatchSize size;

  bool contains(std::size_t r, std::size_t c) const {
    return r >= row && r < row + size.height && c >= col && c < col + size.width;
  }
};

struct SyntheticData {
  Dataset train;
  Dataset test;
  std::vector<PlantedPatch> patches;

  /// The patch of the pair containing `label`, if the class is paired.
  std::optional<PlantedPatch> patch_for_class(int label) const;
};

/// Each class draws a class-wide texture; members of a confusable pair share
/// it and differ only by member-specific discriminant codes inside their patch.
/// Pure function of the DatasetSpec.
SyntheticData generate_confusable_dataset(const DatasetSpec& spec);

// ---------------------------------------------------------------------------
// Frame sampling

enum class SamplingMode { kTrainRandom, kTestFixed };

struct SamplingPlan {
  std::size_t num_segments = 1;
  SamplingMode mode = SamplingMode::kTestFixed;
};

/// One index per equal subsection of length floor(len / segments). Train
/// mode draws a single offset shared by all subsections; test mode uses the
/// centred offset floor(len / segments / 2).
std::vector<std::size_t> sample_frame_indices(std::size_t source_len, const SamplingPlan& plan,
                                              Rng& rng);

// ---------------------------------------------------------------------------
// Minibatches

/// Partition of [0, count) into batches; shuffled when a seed is given. The
/// final short batch is kept.
std::vector<std::vector<std::size_t>> iterate_minibatches(std::size_t count,
                                                          std::size_t batch_size,
                                                          std::optional<std::uint64_t> shuffle_seed);

struct Batch {
  Tensor input;  ///< (N, T', channels, H, W)
  std::vector<int> labels;
};

/// Gathers samples and applies frame sampling per sample.
Batch make_batch(const Dataset& data, std::span<const std::size_t> indices,
                 const SamplingPlan& plan, Rng& rng);

// ---------------------------------------------------------------------------
// CSV: headerless, one sample per row, label first, then T*C*H*W values.

Dataset read_csv_dataset(const std::filesystem::path& path, const Grid& grid, int num_classes,
                         std::size_t channels = 1);
void write_csv_dataset(const std::filesystem::path& path, const Dataset& data);

}  // namespace u2s
