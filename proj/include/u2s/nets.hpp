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


// Universal and category-specific networks: a shared per-position bottom
// stage, two top stages of identical architecture, their classification
// heads, and the mask head used by the mask network.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "u2s/tensor.hpp"

namespace u2s {

struct ModelConfig {
  std::size_t frames = 2;    ///< T after frame sampling
  std::size_t channels = 1;
  std::size_t height = 8;
  std::size_t width = 8;
  /// Non-overlapping spatial patch folded into the channel axis at the input.
  std::size_t patch = 2;
  std::size_t embed_channels = 16;
  std::size_t bottom_layers = 1;
  std::size_t top_layers = 1;
  std::size_t feature_channels = 16;
  int num_classes = 8;
  /// Radius of the spatial average mixing after the bottom stage; 0 disables it.
  std::size_t mix_radius = 0;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t feature_height() const { return height / patch; }
  std::size_t feature_width() const { return width / patch; }
};

/// Parameter groups, used for freezing.
enum ParamGroup : unsigned {
  kBottom = 1u << 0,
  kUniversalTop = 1u << 1,
  kUniversalHead = 1u << 2,
  kSpecificTop = 1u << 3,
  kSpecificHead = 1u << 4,
  kMaskHead = 1u << 5,
  kUniversalGroups = kBottom | kUniversalTop | kUniversalHead,
  kAllGroups = 0x3Fu,
};

class U2sModel {
 public:
  explicit U2sModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  std::vector<Layer> shared_bottom;
  std::vector<Layer> un_top;
  std::vector<Layer> csn_top;
  Layer un_head;
  Layer csn_head;
  Layer mask_head;

  std::vector<Parameter*> parameters(unsigned groups = kAllGroups);
  std::vector<const Parameter*> parameters(unsigned groups = kAllGroups) const;
  /// Lookup by parameter name; nullptr when absent.
  Parameter* find_parameter(const std::string& name);

 private:
  ModelConfig config_;
};

/// init_model: weights ~ N(0, 1/fan_in) from the config seed, zero biases.
U2sModel init_model(const ModelConfig& config);

/// True when two layer stacks have the same kinds and channel counts.
bool same_architecture(const std::vector<Layer>& a, const std::vector<Layer>& b);

/// Space-to-depth: (N, T, C, H, W) -> (N, T, C*p*p, H/p, W/p). Channel index
/// is c*p*p + (h % p)*p + (w % p).
Tensor fold_patches(const Tensor& input, std::size_t patch);

struct UniversalOutput {
  Var bottom;    ///< shared bottom output, reused by the specific branch
  Var features;  ///< (N, T, C, H', W'), post-relu
  Var logits;    ///< (N, M)
};

/// `trainable` is a ParamGroup mask; groups outside it enter as constants.
UniversalOutput forward_universal(Graph& g, U2sModel& model, const Tensor& batch,
                                  unsigned trainable = kAllGroups);

/// Specific top features gated by `mask`: (N, T, C, H', W').
Var specific_features(Graph& g, U2sModel& model, Var bottom, Var mask,
                      unsigned trainable = kAllGroups);

/// Specific branch from an existing bottom output. `mask` is (N, T, 1, H', W')
/// with entries in [0, 1].
Var forward_specific(Graph& g, U2sModel& model, Var bottom, Var mask,
                     unsigned trainable = kAllGroups);

/// Specific branch from the raw batch.
Var forward_specific(Graph& g, U2sModel& model, const Tensor& batch, Var mask,
                     unsigned trainable = kAllGroups);

/// Bottom stage only.
Var forward_bottom(Graph& g, U2sModel& model, const Tensor& batch,
                   unsigned trainable = kAllGroups);

}  // namespace u2s
