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


#include "u2s/trainer.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "u2s/error.hpp"
#include "u2s/random.hpp"

namespace u2s {

namespace {

struct ForwardPass {
  Var universal_loss;
  Var specific_loss;
  Var bridge_loss;
  Var regular;
  Var objective;
  bool has_specific = false;
  Tensor universal_logits;
  Tensor bridge_logits;
  Tensor specific_logits;
};

void check_finite(double v, std::string_view name) {
  if (!std::isfinite(v)) {
    fail(ErrorCode::kNonFinite, "loss component " + std::string(name) + " is not finite (" +
                                    std::to_string(v) + ")");
  }
}

// Builds the full forward graph for one batch. `trainable` selects parameter
// groups; the objective is the stage's loss.
ForwardPass forward_pass(Graph& g, U2sModel& model, const Batch& batch, const Csm* csm,
                         const TrainConfig& cfg, Stage stage, unsigned trainable) {
  ForwardPass f;
  const UniversalOutput un = forward_universal(g, model, batch.input, trainable);
  f.universal_logits = g.value(un.logits);
  f.universal_loss = softmax_cross_entropy(g, un.logits, batch.labels).loss;
  if (csm == nullptr || stage == Stage::kUniversalOnly) {
    f.objective = f.universal_loss;
    return f;
  }
  f.has_specific = true;
  const std::vector<int> predicted = argmax_rows(f.universal_logits);
  const bool mask_trainable = (trainable & kMaskHead) != 0;
  const MaskSet masks = generate_category_masks(g, un.features, model.mask_head, mask_trainable);
  Var bridge = bridge_logits(g, masks);
  f.bridge_logits = g.value(bridge);
  f.bridge_loss = softmax_cross_entropy(g, bridge, batch.labels).loss;
  Var combined = combine_masks_for_prediction(g, masks, predicted, *csm);
  Var specific = forward_specific(g, model, un.bottom, combined, trainable);
  f.specific_logits = g.value(specific);
  f.specific_loss = softmax_cross_entropy(g, specific, batch.labels).loss;
  f.regular = category_regularizer(g, g.parameter(model.mask_head.weight(), mask_trainable), *csm,
                                   cfg.weight_similarity);
  if (stage == Stage::kJoint) {
    f.objective = total_loss(g, f.universal_loss, f.specific_loss, f.bridge_loss, f.regular,
                             cfg.lambda);
  } else {
    const Var terms[] = {f.specific_loss, f.bridge_loss, f.regular};
    const double weights[] = {1.0, 1.0, cfg.lambda};
    for (std::size_t i = 0; i < 3; ++i) {
      static constexpr std::string_view kNames[] = {"L_C", "L_M", "w_regular"};
      check_finite(g.value(terms[i])[0], kNames[i]);
    }
    f.objective = ops::weighted_sum(g, terms, weights);
  }
  return f;
}

LossComponents read_losses(const Graph& g, const ForwardPass& f, double lambda) {
  LossComponents l;
  l.universal = g.value(f.universal_loss)[0];
  if (f.has_specific) {
    l.specific = g.value(f.specific_loss)[0];
    l.bridge = g.value(f.bridge_loss)[0];
    l.regular = g.value(f.regular)[0];
  }
  l.total = l.universal + l.specific + l.bridge + lambda * l.regular;
  return l;
}

void accumulate(LossComponents& acc, const LossComponents& x, double w) {
  acc.universal += w * x.universal;
  acc.specific += w * x.specific;
  acc.bridge += w * x.bridge;
  acc.regular += w * x.regular;
  acc.total += w * x.total;
}

std::size_t count_hits(const Tensor& scores, std::span<const int> labels) {
  const auto pred = argmax_rows(scores);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i] ? 1 : 0;
  return hits;
}

Tensor monitored_scores(const HeadPredictions& p, Stage stage, const TrainConfig& cfg) {
  if (stage == Stage::kUniversalOnly || !p.has_specific()) return p.probs(kUniversalHeadOut);
  return p.fused(cfg.fusion_set, cfg.fusion);
}

}  // namespace

std::string_view stage_name(Stage stage) {
  switch (stage) {
    case Stage::kUniversalOnly: return "universal";
    case Stage::kMaskAndSpecific: return "mask_and_specific";
    case Stage::kJoint: return "joint";
  }
  return "universal";
}

Stage parse_stage(std::string_view name) {
  if (name == "universal") return Stage::kUniversalOnly;
  if (name == "mask_and_specific") return Stage::kMaskAndSpecific;
  if (name == "joint") return Stage::kJoint;
  fail(ErrorCode::kInvalidArgument, "unknown stage '" + std::string(name) + "'");
}

std::string head_set_name(unsigned heads) {
  std::string out;
  for (auto [bit, name] : {std::pair{kUniversalHeadOut, "universal"},
                           std::pair{kBridgeHeadOut, "bridge"},
                           std::pair{kSpecificHeadOut, "specific"}}) {
    if (heads & bit) {
      if (!out.empty()) out += '+';
      out += name;
    }
  }
  return out;
}

unsigned parse_head_set(std::span<const std::string> names) {
  unsigned heads = 0;
  for (const auto& n : names) {
    if (n == "universal") heads |= kUniversalHeadOut;
    else if (n == "bridge") heads |= kBridgeHeadOut;
    else if (n == "specific") heads |= kSpecificHeadOut;
    else fail(ErrorCode::kValidation, "unknown prediction head '" + n + "'");
  }
  if (heads == 0) fail(ErrorCode::kValidation, "fusion set must not be empty");
  return heads;
}

void TrainConfig::validate() const {
  auto bad = [](const std::string& msg) { fail(ErrorCode::kValidation, "train: " + msg); };
  for (double lr : {lr_universal, lr_specific, lr_joint}) {
    if (!(lr > 0.0)) bad("learning rates must be positive");
  }
  if (!(lr_decay >= 1.0)) bad("lr_decay must be >= 1");
  if (patience == 0) bad("patience must be at least 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) bad("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) bad("weight_decay must be nonnegative");
  if (batch_size == 0) bad("batch_size must be at least 1");
  if (!(lambda >= 0.0)) bad("lambda must be nonnegative");
  if (!(target_degree >= 1.0)) bad("target_degree must be at least 1");
  if ((fusion_set & kAllHeads) == 0 || (fusion_set & ~kAllHeads) != 0) {
    bad("fusion set must be a nonempty subset of {universal, bridge, specific}");
  }
}

double total_loss(const LossComponents& parts, double lambda) {
  check_finite(parts.universal, "L_U");
  check_finite(parts.specific, "L_C");
  check_finite(parts.bridge, "L_M");
  check_finite(parts.regular, "w_regular");
  return parts.universal + parts.specific + parts.bridge + lambda * parts.regular;
}

Var total_loss(Graph& g, Var universal, Var specific, Var bridge, Var regular, double lambda) {
  LossComponents parts;
  parts.universal = g.value(universal)[0];
  parts.specific = g.value(specific)[0];
  parts.bridge = g.value(bridge)[0];
  parts.regular = g.value(regular)[0];
  total_loss(parts, lambda);
  const Var terms[] = {universal, specific, bridge, regular};
  const double weights[] = {1.0, 1.0, 1.0, lambda};
  return ops::weighted_sum(g, terms, weights);
}

std::vector<int> argmax_rows(const Tensor& scores) {
  if (scores.rank() != 2) {
    fail(ErrorCode::kShape, "scores must be (N, M), got " + shape_string(scores.shape));
  }
  const std::size_t n = scores.dim(0), m = scores.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < m; ++k)
      if (scores[i * m + k] > scores[i * m + best]) best = k;
    out[i] = static_cast<int>(best);
  }
  return out;
}

EvalReport evaluate_metrics(const Tensor& probs, std::span<const int> labels) {
  if (probs.rank() != 2) {
    fail(ErrorCode::kShape, "probs must be (N, M), got " + shape_string(probs.shape));
  }
  const std::size_t n = probs.dim(0), m = probs.dim(1);
  if (labels.size() != n) {
    fail(ErrorCode::kShape, "evaluate_metrics: axis N has extent " + std::to_string(n) + " but " +
                                std::to_string(labels.size()) + " labels were given");
  }
  EvalReport r;
  r.num_classes = m;
  r.num_samples = n;
  r.confusion.assign(m * m, 0);
  r.per_class_top1.assign(m, 0.0);
  std::vector<std::size_t> class_count(m, 0), class_hits(m, 0);
  const auto pred = argmax_rows(probs);
  std::size_t top1 = 0, top5 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= m) {
      fail(ErrorCode::kLabelRange, "evaluate_metrics: label " + std::to_string(label) +
                                       " outside [0, " + std::to_string(m) + ")");
    }
    const auto l = static_cast<std::size_t>(label);
    const double pl = probs[i * m + l];
    std::size_t rank = 0;
    for (std::size_t k = 0; k < m; ++k) {
      const double pk = probs[i * m + k];
      if (pk > pl || (pk == pl && k < l)) ++rank;
    }
    if (rank < 1) ++top1;
    if (rank < 5) ++top5;
    ++class_count[l];
    r.confusion[l * m + static_cast<std::size_t>(pred[i])] += 1;
    if (pred[i] == label) ++class_hits[l];
  }
  if (n > 0) {
    r.top1 = static_cast<double>(top1) / static_cast<double>(n);
    r.top5 = static_cast<double>(top5) / static_cast<double>(n);
  }
  for (std::size_t k = 0; k < m; ++k) {
    r.per_class_top1[k] = class_count[k] ? static_cast<double>(class_hits[k]) /
                                               static_cast<double>(class_count[k])
                                         : 0.0;
  }
  return r;
}

Tensor fuse_predictions(std::span<const Tensor> scores) {
  if (scores.empty()) fail(ErrorCode::kInvalidArgument, "fusion set is empty");
  Tensor out = scores.front();
  for (std::size_t s = 1; s < scores.size(); ++s) {
    if (scores[s].shape != out.shape) {
      fail(ErrorCode::kShape, "fuse_predictions: shapes " + shape_string(out.shape) + " and " +
                                  shape_string(scores[s].shape) + " differ");
    }
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += scores[s][i];
  }
  const double inv = 1.0 / static_cast<double>(scores.size());
  for (double& v : out.values) v *= inv;
  return out;
}

Tensor HeadPredictions::probs(Head head) const {
  switch (head) {
    case kUniversalHeadOut: return softmax_rows(universal_logits);
    case kBridgeHeadOut:
    case kSpecificHeadOut:
      if (!has_specific()) {
        fail(ErrorCode::kMissingCsm, "the " + head_set_name(head) +
                                         " head needs a model trained with a CSM");
      }
      return softmax_rows(head == kBridgeHeadOut ? bridge_logits : specific_logits);
    default: break;
  }
  fail(ErrorCode::kInvalidArgument, "probs: expected a single head");
}

Tensor HeadPredictions::fused(unsigned heads, FusionKind kind) const {
  std::vector<Tensor> parts;
  for (Head h : {kUniversalHeadOut, kBridgeHeadOut, kSpecificHeadOut}) {
    if (!(heads & h)) continue;
    if (kind == FusionKind::kProbabilities) {
      parts.push_back(probs(h));
    } else {
      if (h != kUniversalHeadOut && !has_specific()) probs(h);  // raises kMissingCsm
      parts.push_back(h == kUniversalHeadOut ? universal_logits
                      : h == kBridgeHeadOut  ? bridge_logits
                                             : specific_logits);
    }
  }
  Tensor f = fuse_predictions(parts);
  return kind == FusionKind::kProbabilities ? f : softmax_rows(f);
}

HeadPredictions predict(U2sModel& model, const Dataset& data, const Csm* csm,
                        const TrainConfig& config) {
  const std::size_t m = static_cast<std::size_t>(model.config().num_classes);
  const std::size_t n = data.samples.size();
  HeadPredictions out;
  out.universal_logits = Tensor({n, m});
  if (csm) {
    out.bridge_logits = Tensor({n, m});
    out.specific_logits = Tensor({n, m});
  }
  SamplingPlan plan{model.config().frames, SamplingMode::kTestFixed};
  Rng unused(0);
  const Stage stage = csm ? Stage::kJoint : Stage::kUniversalOnly;
  std::size_t offset = 0;
  for (const auto& idx : iterate_minibatches(n, config.batch_size, std::nullopt)) {
    const Batch batch = make_batch(data, idx, plan, unused);
    Graph g;
    const ForwardPass f = forward_pass(g, model, batch, csm, config, stage, 0u);
    accumulate(out.losses, read_losses(g, f, config.lambda), static_cast<double>(idx.size()));
    auto copy_rows = [&](const Tensor& src, Tensor& dst) {
      std::copy(src.values.begin(), src.values.end(),
                dst.values.begin() + static_cast<std::ptrdiff_t>(offset * m));
    };
    copy_rows(f.universal_logits, out.universal_logits);
    if (csm) {
      copy_rows(f.bridge_logits, out.bridge_logits);
      copy_rows(f.specific_logits, out.specific_logits);
    }
    out.labels.insert(out.labels.end(), batch.labels.begin(), batch.labels.end());
    offset += idx.size();
  }
  LossComponents mean;
  accumulate(mean, out.losses, 1.0 / static_cast<double>(n));
  out.losses = mean;
  return out;
}

std::string epoch_record_json(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["stage"] = std::string(stage_name(r.stage));
  j["epoch"] = r.epoch;
  j["learning_rate"] = r.learning_rate;
  j["L_U"] = r.train_losses.universal;
  j["L_C"] = r.train_losses.specific;
  j["L_M"] = r.train_losses.bridge;
  j["w_regular"] = r.train_losses.regular;
  j["loss"] = r.train_losses.total;
  j["train_top1"] = r.train_top1;
  j["val_top1"] = r.val_top1;
  return j.dump();
}

unsigned stage_groups(Stage stage) {
  switch (stage) {
    case Stage::kUniversalOnly: return kUniversalGroups;
    case Stage::kMaskAndSpecific: return kSpecificTop | kSpecificHead | kMaskHead;
    case Stage::kJoint: return kAllGroups;
  }
  return 0;
}

StageResult train_stage(U2sModel& model, const Dataset& train, const Dataset& validation,
                        const TrainConfig& config, Stage stage, const Csm* csm) {
  config.validate();
  if (stage != Stage::kUniversalOnly && csm == nullptr) {
    fail(ErrorCode::kMissingCsm, "stage " + std::string(stage_name(stage)) +
                                     " needs a CSM built after the universal stage");
  }
  if (train.samples.empty()) fail(ErrorCode::kEmptyInput, "training set is empty");
  const unsigned groups = stage_groups(stage);
  const std::vector<Parameter*> params = model.parameters(groups);
  StageResult result;
  result.optimizer.momentum = config.momentum;
  result.optimizer.weight_decay = config.weight_decay;
  std::size_t epochs = 0;
  switch (stage) {
    case Stage::kUniversalOnly:
      result.optimizer.learning_rate = config.lr_universal;
      epochs = config.epochs_universal;
      break;
    case Stage::kMaskAndSpecific:
      result.optimizer.learning_rate = config.lr_specific;
      epochs = config.epochs_specific;
      break;
    case Stage::kJoint:
      result.optimizer.learning_rate = config.lr_joint;
      epochs = config.epochs_joint;
      break;
  }
  const SamplingPlan plan{model.config().frames, SamplingMode::kTrainRandom};
  const std::uint64_t stage_tag = 1000000ull * (static_cast<std::uint64_t>(stage) + 1);
  double best_val = -1.0;
  std::size_t stale = 0, decays = 0;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const std::uint64_t tag = stage_tag + epoch;
    Rng sampling(derive_seed(config.seed, tag + 500000));
    LossComponents sum;
    std::size_t seen = 0, hits = 0;
    for (const auto& idx :
         iterate_minibatches(train.samples.size(), config.batch_size,
                             derive_seed(config.seed, tag))) {
      const Batch batch = make_batch(train, idx, plan, sampling);
      Graph g;
      const ForwardPass f = forward_pass(g, model, batch, csm, config, stage, groups);
      const LossComponents parts = read_losses(g, f, config.lambda);
      check_finite(g.value(f.objective)[0], "objective");
      g.backward(f.objective);
      sgd_step(params, result.optimizer);
      accumulate(sum, parts, static_cast<double>(idx.size()));
      seen += idx.size();
      const Tensor& scores =
          stage == Stage::kUniversalOnly ? f.universal_logits : f.specific_logits;
      hits += count_hits(scores, batch.labels);
    }
    EpochRecord rec;
    rec.stage = stage;
    rec.epoch = epoch;
    rec.learning_rate = result.optimizer.learning_rate;
    accumulate(rec.train_losses, sum, 1.0 / static_cast<double>(seen));
    rec.train_top1 = static_cast<double>(hits) / static_cast<double>(seen);
    if (!validation.samples.empty()) {
      const HeadPredictions p = predict(model, validation, csm, config);
      rec.val_top1 = static_cast<double>(count_hits(monitored_scores(p, stage, config), p.labels)) /
                     static_cast<double>(p.labels.size());
      if (rec.val_top1 > best_val) {
        best_val = rec.val_top1;
        stale = 0;
      } else if (++stale >= config.patience && decays < config.max_decays) {
        result.optimizer.learning_rate /= config.lr_decay;
        stale = 0;
        ++decays;
      }
    }
    result.history.push_back(rec);
  }
  return result;
}

Tensor feature_similarity(U2sModel& model, const Dataset& data, const Csm* csm,
                          const TrainConfig& config, FeatureSource source) {
  if (source != FeatureSource::kUniversal && csm == nullptr) {
    fail(ErrorCode::kMissingCsm, "specific features need a CSM");
  }
  const int m = model.config().num_classes;
  SamplingPlan plan{model.config().frames, SamplingMode::kTestFixed};
  Rng unused(0);
  std::vector<std::vector<double>> sparsity;
  std::vector<int> labels;
  for (const auto& idx : iterate_minibatches(data.samples.size(), config.batch_size, std::nullopt)) {
    const Batch batch = make_batch(data, idx, plan, unused);
    Graph g;
    const UniversalOutput un = forward_universal(g, model, batch.input, 0u);
    // Copies: recording further nodes may move the graph's storage.
    const Tensor universal = g.value(un.features);
    Tensor specific;
    if (source != FeatureSource::kUniversal) {
      const MaskSet masks = generate_category_masks(g, un.features, model.mask_head, false);
      Var combined = combine_masks_for_prediction(g, masks, argmax_rows(g.value(un.logits)), *csm);
      specific = g.value(specific_features(g, model, un.bottom, combined, 0u));
    }
    for (std::size_t i = 0; i < idx.size(); ++i) {
      std::vector<double> row;
      if (source != FeatureSource::kSpecific) row = channel_sparsity(universal, i);
      if (source != FeatureSource::kUniversal) {
        const auto s = channel_sparsity(specific, i);
        row.insert(row.end(), s.begin(), s.end());
      }
      sparsity.push_back(std::move(row));
    }
    labels.insert(labels.end(), batch.labels.begin(), batch.labels.end());
  }
  return similarity_matrix(category_signatures(sparsity, labels, m), config.distance);
}

Csm build_csm(U2sModel& model, const Dataset& data, const TrainConfig& config,
              std::span<const std::string> class_names) {
  const int m = model.config().num_classes;
  Csm csm = binarize_with_target_degree(
      feature_similarity(model, data, nullptr, config, FeatureSource::kUniversal),
      config.target_degree, config.csm_mode);
  if (!class_names.empty()) {
    csm.class_names.assign(class_names.begin(), class_names.end());
  } else {
    for (int k = 0; k < m; ++k) csm.class_names.push_back("class_" + std::to_string(k));
  }
  return csm;
}

}  // namespace u2s
