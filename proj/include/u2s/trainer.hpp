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


// Staged training (universal, mask + specific, joint), the combined loss,
// prediction fusion and evaluation metrics.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "u2s/csm.hpp"
#include "u2s/data.hpp"
#include "u2s/masknet.hpp"
#include "u2s/nets.hpp"
#include "u2s/tensor.hpp"

namespace u2s {

enum class Stage { kUniversalOnly, kMaskAndSpecific, kJoint };

std::string_view stage_name(Stage stage);
Stage parse_stage(std::string_view name);

enum Head : unsigned {
  kUniversalHeadOut = 1u << 0,
  kBridgeHeadOut = 1u << 1,
  kSpecificHeadOut = 1u << 2,
  kAllHeads = 0x7u,
};

/// "universal", "bridge", "specific" joined by '+', in that order.
std::string head_set_name(unsigned heads);
unsigned parse_head_set(std::span<const std::string> names);

enum class FusionKind { kProbabilities, kLogits };

struct TrainConfig {
  double lr_universal = 1e-3;
  double lr_specific = 1e-3;
  double lr_joint = 1e-4;
  double lr_decay = 10.0;
  std::size_t patience = 3;
  /// Decays allowed per stage.
  std::size_t max_decays = 2;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t batch_size = 20;
  std::size_t epochs_universal = 20;
  std::size_t epochs_specific = 20;
  std::size_t epochs_joint = 10;
  double lambda = 0.5;
  double target_degree = 1.0;
  CsmMode csm_mode = CsmMode::kBinary;
  DistanceKind distance = DistanceKind::kCosine;
  WeightSimilarity weight_similarity = WeightSimilarity::kHalfCosine;
  unsigned fusion_set = kAllHeads;
  FusionKind fusion = FusionKind::kProbabilities;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LossComponents {
  double universal = 0.0;  ///< L_U
  double specific = 0.0;   ///< L_C
  double bridge = 0.0;     ///< L_M
  double regular = 0.0;    ///< w_regular
  double total = 0.0;
};

/// L = L_U + L_C + L_M + lambda * w_regular. Throws kNonFinite naming the
/// first non-finite component.
double total_loss(const LossComponents& parts, double lambda);
Var total_loss(Graph& g, Var universal, Var specific, Var bridge, Var regular, double lambda);

struct EvalReport {
  std::size_t num_classes = 0;
  std::size_t num_samples = 0;
  double top1 = 0.0;
  double top5 = 0.0;
  std::vector<double> per_class_top1;
  std::vector<std::size_t> confusion;  ///< row = true class, column = argmax
  LossComponents losses;
};

/// Argmax with ties to the lower class index.
std::vector<int> argmax_rows(const Tensor& scores);

/// Top-k hits count the label among the k largest scores, ties broken by the
/// lower class index.
EvalReport evaluate_metrics(const Tensor& probs, std::span<const int> labels);

/// Arithmetic mean of (N, M) score tables.
Tensor fuse_predictions(std::span<const Tensor> scores);

struct HeadPredictions {
  Tensor universal_logits;
  Tensor bridge_logits;    ///< empty without a CSM
  Tensor specific_logits;  ///< empty without a CSM
  std::vector<int> labels;
  LossComponents losses;

  bool has_specific() const { return specific_logits.numel() > 0; }
  Tensor probs(Head head) const;
  /// Fused scores of a head set: mean of probabilities, or softmax of the
  /// mean logits for FusionKind::kLogits.
  Tensor fused(unsigned heads, FusionKind kind = FusionKind::kProbabilities) const;
};

/// Inference over a dataset with test-mode frame sampling. Bridge and
/// specific heads run only when `csm` is given.
HeadPredictions predict(U2sModel& model, const Dataset& data, const Csm* csm,
                        const TrainConfig& config);

struct EpochRecord {
  Stage stage = Stage::kUniversalOnly;
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  LossComponents train_losses;
  double train_top1 = 0.0;  ///< of the monitored head on the training batches
  double val_top1 = 0.0;
};

std::string epoch_record_json(const EpochRecord& r);

struct StageResult {
  std::vector<EpochRecord> history;
  OptimizerState optimizer;
};

/// Parameters a stage updates, as a ParamGroup mask.
unsigned stage_groups(Stage stage);

/// Runs one training stage. Stages after the first need `csm`; `validation`
/// drives learning-rate decay on plateau.
StageResult train_stage(U2sModel& model, const Dataset& train, const Dataset& validation,
                        const TrainConfig& config, Stage stage, const Csm* csm);

enum class FeatureSource {
  kUniversal,  ///< universal top features
  kSpecific,   ///< specific top features gated by the combined mask
  kCombined,   ///< both, channels concatenated
};

/// Per-sample channel sparsity of one feature source over `data` (test-mode
/// sampling), reduced to per-class signatures and compared as in build_csm.
/// Sources other than kUniversal need `csm`.
Tensor feature_similarity(U2sModel& model, const Dataset& data, const Csm* csm,
                          const TrainConfig& config, FeatureSource source);

/// Channel-sparsity CSM from the universal features of `data`.
Csm build_csm(U2sModel& model, const Dataset& data, const TrainConfig& config,
              std::span<const std::string> class_names = {});

}  // namespace u2s
