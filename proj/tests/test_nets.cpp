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


#include <doctest.h>

#include <cmath>
#include <set>

#include "u2s/error.hpp"
#include "u2s/nets.hpp"
#include "u2s/random.hpp"

using namespace u2s;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.frames = 2;
  c.height = 6;
  c.width = 6;
  c.patch = 2;
  c.embed_channels = 5;
  c.feature_channels = 8;
  c.num_classes = 4;
  c.seed = 17;
  return c;
}

Tensor random_batch(std::size_t n, const ModelConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t({n, c.frames, c.channels, c.height, c.width});
  for (double& v : t.values) v = rng.normal();
  return t;
}

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode{0};
}

}  // namespace

TEST_CASE("init_model is deterministic and seeds matter") {
  U2sModel a = init_model(small_config());
  U2sModel b = init_model(small_config());
  auto pa = a.parameters();
  auto pb = b.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->name == pb[i]->name);
    CHECK(pa[i]->value == pb[i]->value);
  }
  auto other = small_config();
  other.seed = 18;
  CHECK(init_model(other).un_head.weight().value != a.un_head.weight().value);
}

TEST_CASE("architecture invariants") {
  U2sModel m = init_model(small_config());
  CHECK(same_architecture(m.un_top, m.csn_top));
  CHECK(m.un_top[0].weight().value != m.csn_top[0].weight().value);
  std::set<std::string> names;
  for (Parameter* p : m.parameters()) CHECK(names.insert(p->name).second);
  CHECK(m.find_parameter("mask_head.weight") == &m.mask_head.weight());
  CHECK(m.find_parameter("nope") == nullptr);
  CHECK(m.mask_head.weight().value.shape == Shape{8, 4});
  CHECK(m.parameters(kBottom).size() == 2);
  CHECK(m.parameters(kMaskHead | kSpecificHead).size() == 4);
}

TEST_CASE("model config validation") {
  auto bad = [](auto mutate) {
    auto c = small_config();
    mutate(c);
    CHECK(code_of([&] { init_model(c); }) == ErrorCode::kValidation);
  };
  bad([](ModelConfig& c) { c.bottom_layers = 0; });
  bad([](ModelConfig& c) { c.top_layers = 0; });
  bad([](ModelConfig& c) { c.patch = 4; });
  bad([](ModelConfig& c) { c.height = 2; });
  bad([](ModelConfig& c) { c.num_classes = 1; });
  bad([](ModelConfig& c) { c.feature_channels = 0; });
}

TEST_CASE("fold_patches places each cell at its documented channel") {
  Tensor x({1, 1, 2, 4, 4});
  for (std::size_t i = 0; i < x.numel(); ++i) x[i] = static_cast<double>(i);
  const Tensor y = fold_patches(x, 2);
  CHECK(y.shape == Shape{1, 1, 8, 2, 2});
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t h = 0; h < 4; ++h)
      for (std::size_t w = 0; w < 4; ++w) {
        const std::size_t ch = k * 4 + (h % 2) * 2 + (w % 2);
        CHECK(y[(ch * 2 + h / 2) * 2 + w / 2] == x[(k * 4 + h) * 4 + w]);
      }
  CHECK(fold_patches(x, 1) == x);
  CHECK(code_of([&] { fold_patches(x, 3); }) == ErrorCode::kShape);
  CHECK(code_of([&] { fold_patches(Tensor({4, 4}), 2); }) == ErrorCode::kShape);
}

TEST_CASE("forward shapes and zero input") {
  U2sModel m = init_model(small_config());
  Graph g;
  const auto out = forward_universal(g, m, random_batch(3, m.config(), 1));
  CHECK(g.value(out.features).shape == Shape{3, 2, 8, 3, 3});
  CHECK(g.value(out.logits).shape == Shape{3, 4});

  Graph z;
  const auto zero = forward_universal(z, m, Tensor({2, 2, 1, 6, 6}, 0.0));
  for (double v : z.value(zero.features).values) CHECK(v == 0.0);
  for (double v : z.value(zero.logits).values) CHECK(v == 0.0);

  CHECK(code_of([&] {
          Graph e;
          forward_universal(e, m, Tensor({2, 2, 1, 8, 8}, 0.0));
        }) == ErrorCode::kShape);
}

TEST_CASE("zero-bias network is positively homogeneous") {
  // With all biases zero, relu(2x) = 2 relu(x), so logits scale with the input.
  U2sModel m = init_model(small_config());
  const Tensor x = random_batch(2, m.config(), 2);
  Tensor x2 = x;
  for (double& v : x2.values) v *= 2.0;
  Graph g;
  const Tensor once = g.value(forward_universal(g, m, x).logits);
  const Tensor twice = g.value(forward_universal(g, m, x2).logits);
  for (std::size_t i = 0; i < once.numel(); ++i) {
    CHECK(twice[i] == doctest::Approx(2.0 * once[i]).epsilon(1e-12));
  }
}

TEST_CASE("specific branch masking") {
  U2sModel m = init_model(small_config());
  const Tensor x = random_batch(2, m.config(), 3);

  SUBCASE("all-ones mask equals the unmasked branch") {
    Graph g;
    Var bottom = forward_bottom(g, m, x);
    Var ones = g.constant(Tensor({2, 2, 1, 3, 3}, 1.0));
    const Tensor masked = g.value(forward_specific(g, m, bottom, ones));
    Var top = bottom;
    for (Layer& l : m.csn_top) top = apply_layer(g, l, top);
    const Tensor plain =
        g.value(apply_layer(g, m.csn_head, ops::global_avg_pool(g, top)));
    CHECK(masked == plain);
  }
  SUBCASE("zero mask with zero head bias gives zero logits") {
    Graph g;
    Var zeros = g.constant(Tensor({2, 2, 1, 3, 3}, 0.0));
    for (double v : g.value(forward_specific(g, m, x, zeros)).values) CHECK(v == 0.0);
  }
  SUBCASE("a one-cell mask pools that cell alone") {
    Graph g;
    Var bottom = forward_bottom(g, m, x);
    Tensor cell({2, 2, 1, 3, 3}, 0.0);
    cell[(0 * 2 + 1) * 9 + 1 * 3 + 2] = 1.0;  // sample 0, t = 1, (1, 2)
    Var full = specific_features(g, m, bottom, g.constant(Tensor({2, 2, 1, 3, 3}, 1.0)));
    const Tensor feats = g.value(full);
    const Tensor pooled =
        g.value(ops::global_avg_pool(g, specific_features(g, m, bottom, g.constant(cell))));
    for (std::size_t c = 0; c < 8; ++c) {
      const double f = feats[((0 * 2 + 1) * 8 + c) * 9 + 1 * 3 + 2];
      CHECK(pooled[c] == doctest::Approx(f / (2.0 * 3.0 * 3.0)).epsilon(1e-14));
      CHECK(pooled[8 + c] == 0.0);
    }
  }
}

TEST_CASE("frozen groups receive no gradient and the bottom is shared") {
  U2sModel m = init_model(small_config());
  const Tensor x = random_batch(2, m.config(), 4);
  Graph g;
  const auto un = forward_universal(g, m, x, kUniversalTop | kUniversalHead);
  CHECK_FALSE(g.requires_grad(un.bottom));
  CHECK(g.requires_grad(un.logits));
  Var spec = forward_specific(g, m, un.bottom, g.constant(Tensor({2, 2, 1, 3, 3}, 0.5)),
                              kSpecificTop | kSpecificHead);
  g.backward(ops::add(g, ops::sum(g, un.logits), ops::sum(g, spec)));
  for (Parameter* p : m.parameters(kBottom)) {
    for (double v : p->grad) CHECK(v == 0.0);
  }
  double specific_norm = 0.0;
  for (Parameter* p : m.parameters(kSpecificTop))
    for (double v : p->grad) specific_norm += std::abs(v);
  CHECK(specific_norm > 0.0);

  // Unfrozen: the shared bottom collects gradient from both branches.
  Graph h;
  const auto un2 = forward_universal(h, m, x);
  Var spec2 = forward_specific(h, m, un2.bottom, h.constant(Tensor({2, 2, 1, 3, 3}, 0.5)));
  h.backward(ops::sum(h, spec2));
  double bottom_norm = 0.0;
  for (Parameter* p : m.parameters(kBottom))
    for (double v : p->grad) bottom_norm += std::abs(v);
  CHECK(bottom_norm > 0.0);
}
