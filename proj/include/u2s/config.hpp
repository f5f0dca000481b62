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


// Run configuration: one TOML file describing data, model, training, CSM and
// analysis settings, validated as a whole before any work starts.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "u2s/data.hpp"
#include "u2s/nets.hpp"
#include "u2s/trainer.hpp"

namespace u2s {

struct AnalysisConfig {
  std::size_t histogram_bins = 20;
  std::vector<double> sweep_degrees{1.0, 2.0, 3.0};
  /// Test samples per class exported as mask heatmaps.
  std::size_t mask_samples = 2;
  std::vector<std::string> scatter_sources{"one_pass", "universal", "specific", "u2s"};
};

struct RunConfig {
  std::string name = "run";
  std::filesystem::path output_dir = "runs";
  std::uint64_t seed = 0;

  bool synthetic = true;
  DatasetSpec dataset;                 ///< synthetic source
  std::filesystem::path train_csv;     ///< csv source
  std::filesystem::path test_csv;
  std::vector<std::string> class_names;

  ModelConfig model;
  TrainConfig train;
  AnalysisConfig analysis;

  /// runs/<name>
  std::filesystem::path run_dir() const { return output_dir / name; }

  /// Sets the seed and the derived data, model and training seeds.
  void set_seed(std::uint64_t seed);

  /// Cross-section checks on top of the per-struct invariants. Throws kValidation.
  void validate() const;

  /// Class names, defaulting to class_<k>.
  std::vector<std::string> resolved_class_names() const;

  /// Canonical text of everything that shapes a trained model (data, model,
  /// training, CSM settings and seed).
  std::string canonical() const;
  /// 64-bit FNV-1a of canonical().
  std::uint64_t fingerprint() const;
};

/// Desk-scale defaults: 8 classes in 4 confusable pairs of decreasing contrast.
RunConfig default_run_config();

/// Parses and validates TOML text over default_run_config(). Unknown tables or
/// keys, wrong types and failed invariants throw kValidation. Relative CSV
/// paths resolve against `base_dir`.
RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = {});

/// Reads a file, then applies the U2S_SEED environment override.
RunConfig load_run_config(const std::filesystem::path& path);

/// Full TOML rendering; parse_run_config(to_toml(c)) reproduces c.
std::string run_config_to_toml(const RunConfig& config);

}  // namespace u2s
