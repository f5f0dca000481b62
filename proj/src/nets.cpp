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


#include "u2s/nets.hpp"

#include <algorithm>

#include "u2s/error.hpp"
#include "u2s/random.hpp"

namespace u2s {

namespace {

LayerSpec linear_spec(LayerKind kind, std::size_t in, std::size_t out, std::uint64_t seed) {
  LayerSpec s;
  s.kind = kind;
  s.in_channels = in;
  s.out_channels = out;
  s.weight_init.seed = seed;
  return s;
}

LayerSpec plain_spec(LayerKind kind, std::size_t radius = 1) {
  LayerSpec s;
  s.kind = kind;
  s.radius = radius;
  return s;
}

std::vector<Layer> build_top(const std::string& prefix, const ModelConfig& c, std::uint64_t tag) {
  std::vector<Layer> top;
  std::size_t in = c.embed_channels;
  for (std::size_t i = 0; i < c.top_layers; ++i) {
    const std::string name = prefix + "." + std::to_string(i);
    top.emplace_back(name + ".linear",
                     linear_spec(LayerKind::kPerPositionLinear, in, c.feature_channels,
                                 derive_seed(c.seed, tag + i)));
    top.emplace_back(name + ".relu", plain_spec(LayerKind::kRelu));
    in = c.feature_channels;
  }
  return top;
}

Var run_stack(Graph& g, std::vector<Layer>& stack, Var x, bool trainable) {
  for (Layer& l : stack) x = apply_layer(g, l, x, std::nullopt, trainable);
  return x;
}

void append(std::vector<Parameter*>& out, std::vector<Layer>& stack) {
  for (Layer& l : stack)
    for (Parameter* p : l.parameters()) out.push_back(p);
}

}  // namespace

void ModelConfig::validate() const {
  auto bad = [](const std::string& msg) { fail(ErrorCode::kValidation, "model: " + msg); };
  if (frames == 0 || channels == 0 || height == 0 || width == 0) {
    bad("input grid extents must be positive");
  }
  if (patch == 0) bad("patch must be positive");
  if (height % patch != 0 || width % patch != 0) bad("patch must divide the input height and width");
  if (embed_channels == 0 || feature_channels == 0) bad("channel counts must be positive");
  if (bottom_layers == 0) bad("bottom_layers must be at least 1");
  if (top_layers == 0) bad("top_layers must be at least 1");
  if (num_classes < 2) bad("num_classes must be at least 2");
  if (feature_height() < 2 || feature_width() < 2) {
    bad("feature map after patch folding must be at least 2x2");
  }
}

U2sModel::U2sModel(const ModelConfig& config) : config_(config) {
  config.validate();
  const std::size_t m = static_cast<std::size_t>(config.num_classes);
  std::size_t in = config.channels * config.patch * config.patch;
  for (std::size_t i = 0; i < config.bottom_layers; ++i) {
    const std::string name = "bottom." + std::to_string(i);
    shared_bottom.emplace_back(name + ".linear",
                               linear_spec(LayerKind::kPerPositionLinear, in,
                                           config.embed_channels, derive_seed(config.seed, 100 + i)));
    shared_bottom.emplace_back(name + ".relu", plain_spec(LayerKind::kRelu));
    in = config.embed_channels;
  }
  if (config.mix_radius > 0) {
    shared_bottom.emplace_back("bottom.mix",
                               plain_spec(LayerKind::kAvgPoolSpatial, config.mix_radius));
  }
  un_top = build_top("un_top", config, 200);
  csn_top = build_top("csn_top", config, 300);
  un_head = Layer("un_head", linear_spec(LayerKind::kDense, config.feature_channels, m,
                                         derive_seed(config.seed, 400)));
  csn_head = Layer("csn_head", linear_spec(LayerKind::kDense, config.feature_channels, m,
                                           derive_seed(config.seed, 401)));
  mask_head = Layer("mask_head", linear_spec(LayerKind::kPerPositionLinear,
                                             config.feature_channels, m,
                                             derive_seed(config.seed, 402)));
}

std::vector<Parameter*> U2sModel::parameters(unsigned groups) {
  std::vector<Parameter*> out;
  if (groups & kBottom) append(out, shared_bottom);
  if (groups & kUniversalTop) append(out, un_top);
  if (groups & kUniversalHead) for (Parameter* p : un_head.parameters()) out.push_back(p);
  if (groups & kSpecificTop) append(out, csn_top);
  if (groups & kSpecificHead) for (Parameter* p : csn_head.parameters()) out.push_back(p);
  if (groups & kMaskHead) for (Parameter* p : mask_head.parameters()) out.push_back(p);
  return out;
}

std::vector<const Parameter*> U2sModel::parameters(unsigned groups) const {
  auto mut = const_cast<U2sModel*>(this)->parameters(groups);
  return {mut.begin(), mut.end()};
}

Parameter* U2sModel::find_parameter(const std::string& name) {
  for (Parameter* p : parameters()) {
    if (p->name == name) return p;
  }
  return nullptr;
}

U2sModel init_model(const ModelConfig& config) { return U2sModel(config); }

bool same_architecture(const std::vector<Layer>& a, const std::vector<Layer>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const LayerSpec& x = a[i].spec();
    const LayerSpec& y = b[i].spec();
    if (x.kind != y.kind || x.in_channels != y.in_channels || x.out_channels != y.out_channels ||
        x.radius != y.radius) {
      return false;
    }
  }
  return true;
}

Tensor fold_patches(const Tensor& input, std::size_t patch) {
  if (input.rank() != 5) {
    fail(ErrorCode::kShape, "fold_patches: input must be (N, T, C, H, W), got " +
                                shape_string(input.shape));
  }
  const std::size_t n = input.dim(0), t = input.dim(1), c = input.dim(2);
  const std::size_t h = input.dim(3), w = input.dim(4);
  if (h % patch != 0) fail(ErrorCode::kShape, "fold_patches: axis H (3) not divisible by patch");
  if (w % patch != 0) fail(ErrorCode::kShape, "fold_patches: axis W (4) not divisible by patch");
  if (patch == 1) return input;
  const std::size_t oh = h / patch, ow = w / patch, oc = c * patch * patch;
  Tensor out({n, t, oc, oh, ow});
  for (std::size_t f = 0; f < n * t; ++f)
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const std::size_t ch = k * patch * patch + (y % patch) * patch + (x % patch);
          out[((f * oc + ch) * oh + y / patch) * ow + x / patch] =
              input[((f * c + k) * h + y) * w + x];
        }
  return out;
}

Var forward_bottom(Graph& g, U2sModel& model, const Tensor& batch, unsigned trainable) {
  const ModelConfig& c = model.config();
  if (batch.rank() != 5) {
    fail(ErrorCode::kShape, "batch must be (N, T, C, H, W), got " + shape_string(batch.shape));
  }
  static constexpr const char* kAxes[] = {"N", "T", "C", "H", "W"};
  const std::size_t expected[] = {batch.dim(0), c.frames, c.channels, c.height, c.width};
  for (std::size_t a = 1; a < 5; ++a) {
    if (batch.dim(a) != expected[a]) {
      fail(ErrorCode::kShape, std::string("batch axis ") + kAxes[a] + " has extent " +
                                  std::to_string(batch.dim(a)) + ", model expects " +
                                  std::to_string(expected[a]));
    }
  }
  Var x = g.constant(fold_patches(batch, c.patch));
  return run_stack(g, model.shared_bottom, x, (trainable & kBottom) != 0);
}

UniversalOutput forward_universal(Graph& g, U2sModel& model, const Tensor& batch,
                                  unsigned trainable) {
  UniversalOutput out;
  out.bottom = forward_bottom(g, model, batch, trainable);
  out.features = run_stack(g, model.un_top, out.bottom, (trainable & kUniversalTop) != 0);
  Var pooled = ops::global_avg_pool(g, out.features);
  out.logits = apply_layer(g, model.un_head, pooled, std::nullopt,
                           (trainable & kUniversalHead) != 0);
  return out;
}

Var specific_features(Graph& g, U2sModel& model, Var bottom, Var mask, unsigned trainable) {
  Var features = run_stack(g, model.csn_top, bottom, (trainable & kSpecificTop) != 0);
  const Tensor& tm = g.value(mask);
  for (std::size_t i = 0; i < tm.numel(); ++i) {
    if (!(tm[i] >= 0.0 && tm[i] <= 1.0)) {
      fail(ErrorCode::kInvalidArgument,
           "mask entry " + std::to_string(i) + " outside [0, 1]");
    }
  }
  return ops::masked_broadcast_mul(g, features, mask);
}

Var forward_specific(Graph& g, U2sModel& model, Var bottom, Var mask, unsigned trainable) {
  Var pooled = ops::global_avg_pool(g, specific_features(g, model, bottom, mask, trainable));
  return apply_layer(g, model.csn_head, pooled, std::nullopt, (trainable & kSpecificHead) != 0);
}

Var forward_specific(Graph& g, U2sModel& model, const Tensor& batch, Var mask,
                     unsigned trainable) {
  return forward_specific(g, model, forward_bottom(g, model, batch, trainable), mask, trainable);
}

}  // namespace u2s
