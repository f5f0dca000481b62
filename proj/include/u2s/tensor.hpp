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


// Dense tensors, a tape-based reverse-mode differentiation graph, and the
// layer, loss and optimizer primitives the networks are built from.
//
// Storage is row-major; feature maps use the axis order (N, T, C, H, W).

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace u2s {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

struct Tensor {
  Shape shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);
  /// Throws kShape when the value count does not match the shape.
  Tensor(Shape s, std::vector<double> v);

  std::size_t numel() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t axis) const { return shape.at(axis); }

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  bool operator==(const Tensor&) const = default;
};

/// A named trainable tensor together with its gradient buffer.
struct Parameter {
  std::string name;
  Tensor value;
  std::vector<double> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v);

  void zero_grad();
};

/// Handle to a node of a Graph. Only meaningful for the graph that issued it.
struct Var {
  std::uint64_t graph = 0;
  std::size_t id = 0;
};

/// Tape of recorded operations. Nodes are appended in evaluation order, so a
/// reverse sweep over the tape is a valid topological order for backward().
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to a parameter. Frozen parameters enter as constants.
  Var parameter(Parameter& p, bool trainable = true);
  /// Records an op output. `fn` is only invoked when some parent requires grad.
  Var record(Tensor value, std::span<const Var> parents, BackwardFn fn);

  const Tensor& value(Var v) const;
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(Var v) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient of the last backward() root with respect to the node.
  std::span<const double> grad(Var v) const;
  /// Mutable gradient buffer; allocated on first use.
  std::span<double> grad_mut(std::size_t id);

  /// Reverse sweep from a scalar root. Every parameter bound in this graph
  /// gets its `grad` overwritten: the accumulated gradient when reachable,
  /// zeros otherwise.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  std::size_t index(Var v) const;

  std::uint64_t id_;
  std::vector<Node> nodes_;
};

namespace ops {

Var add(Graph& g, Var a, Var b);
Var scale(Graph& g, Var a, double k);
/// Sum of all entries, as a shape-{1} scalar.
Var sum(Graph& g, Var a);
/// Weighted sum of scalar nodes.
Var weighted_sum(Graph& g, std::span<const Var> terms, std::span<const double> weights);
Var relu(Graph& g, Var x);
Var sigmoid(Graph& g, Var x);
/// x (N, Cin) times w (Cin, Cout) plus b (Cout).
Var dense(Graph& g, Var x, Var w, Var b);
/// 1x1x1 linear map over the channel axis of an (N, T, Cin, H, W) map.
Var per_position_linear(Graph& g, Var x, Var w, Var b);
/// Mean over T, H, W: (N, T, C, H, W) -> (N, C).
Var global_avg_pool(Graph& g, Var x);
/// features (N, T, C, H, W) times mask (N, T, 1, H, W), broadcast over C.
Var masked_broadcast_mul(Graph& g, Var features, Var mask);
/// Stride-1 box average over a (2r+1)^2 spatial window, counting only
/// in-bounds cells. Shape preserving.
Var avg_pool_spatial(Graph& g, Var x, std::size_t radius);
/// Per-sample weighted mean over the channel axis: masks (N, T, M, H, W) and
/// constant weights (N, M) -> (N, T, 1, H, W). Each weight row is normalized
/// by its sum, which must be positive.
Var channel_weighted_mean(Graph& g, Var masks, const Tensor& weights);

}  // namespace ops

/// Row-wise softmax of an (N, M) tensor, stabilized by max subtraction.
Tensor softmax_rows(const Tensor& logits);

struct CrossEntropy {
  Var loss;     ///< mean over the batch, shape {1}
  Tensor probs; ///< (N, M)
};

CrossEntropy softmax_cross_entropy(Graph& g, Var logits, std::span<const int> labels);

// ---------------------------------------------------------------------------
// Layers

enum class LayerKind {
  kDense,
  kPerPositionLinear,
  kRelu,
  kSigmoid,
  kGlobalAvgPool,
  kMaskedBroadcastMul,
  kAvgPoolSpatial,
};

std::string_view layer_kind_name(LayerKind kind);
/// Throws kUnknownKind for names outside the supported set.
LayerKind parse_layer_kind(std::string_view name);

struct WeightInit {
  std::uint64_t seed = 0;
  /// Standard deviation of the normal draw; 0 selects 1/sqrt(in_channels).
  double scale = 0.0;
};

struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  WeightInit weight_init;
  /// Window radius for avg_pool_spatial.
  std::size_t radius = 1;
};

class Layer {
 public:
  Layer() = default;
  /// Parameters are named "<name>.weight" and "<name>.bias".
  Layer(std::string name, LayerSpec spec);

  const LayerSpec& spec() const { return spec_; }
  const std::string& name() const { return name_; }
  bool has_parameters() const { return weight_.has_value(); }
  Parameter& weight() { return *weight_; }
  Parameter& bias() { return *bias_; }
  const Parameter& weight() const { return *weight_; }
  const Parameter& bias() const { return *bias_; }
  std::vector<Parameter*> parameters();

 private:
  std::string name_;
  LayerSpec spec_;
  std::optional<Parameter> weight_;
  std::optional<Parameter> bias_;
};

/// Applies a layer. `aux` is the mask operand of masked_broadcast_mul.
Var apply_layer(Graph& g, Layer& layer, Var input, std::optional<Var> aux = std::nullopt,
                bool trainable = true);

// ---------------------------------------------------------------------------
// Gradient checking

struct GradientCheck {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares backward() against central differences for every coordinate of
/// `params`. `loss_fn` must rebuild the graph from the current parameter
/// values and return a scalar. Relative error per coordinate is
/// |a - n| / max(1e-8, |a| + |n|).
GradientCheck check_gradients(const std::function<Var(Graph&)>& loss_fn,
                              std::span<Parameter* const> params, double eps);

// ---------------------------------------------------------------------------
// Optimizer

struct OptimizerState {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  /// Keyed by parameter name; created as zeros on first update.
  std::map<std::string, Tensor> velocity;

  bool operator==(const OptimizerState&) const = default;
};

/// v <- momentum * v + (grad + weight_decay * param); param <- param - lr * v.
void sgd_step(std::span<Parameter* const> params, OptimizerState& state);

}  // namespace u2s
