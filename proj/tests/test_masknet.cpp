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

#include "u2s/error.hpp"
#include "u2s/masknet.hpp"
#include "u2s/random.hpp"

using namespace u2s;

namespace {

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode{0};
}

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values) v = rng.normal();
  return t;
}

Csm random_csm(std::size_t m, Rng& rng, CsmMode mode = CsmMode::kBinary) {
  Tensor s({m, m});
  for (std::size_t i = 0; i < m; ++i) {
    s[i * m + i] = 1.0;
    for (std::size_t j = i + 1; j < m; ++j) s[i * m + j] = s[j * m + i] = rng.uniform();
  }
  return binarize(s, rng.uniform(), mode);
}

Csm identity_csm(std::size_t m) {
  Tensor s({m, m}, 0.0);
  for (std::size_t i = 0; i < m; ++i) s[i * m + i] = 1.0;
  return binarize(s, 0.5);
}

}  // namespace

TEST_CASE("category masks") {
  Rng rng(1);
  const Tensor feats = random_tensor({2, 2, 3, 2, 3}, rng);
  SUBCASE("zero head gives one half everywhere") {
    Graph g;
    auto ms = generate_category_masks(g, g.constant(feats), g.constant(Tensor({3, 4}, 0.0)),
                                      g.constant(Tensor({4}, 0.0)));
    CHECK(g.value(ms.activated).shape == Shape{2, 2, 4, 2, 3});
    for (double v : g.value(ms.activated).values) CHECK(v == 0.5);
  }
  SUBCASE("one-hot column copies a channel") {
    Tensor w({3, 4}, 0.0);
    w[2 * 4 + 1] = 1.0;  // mask 1 <- channel 2
    Graph g;
    auto ms = generate_category_masks(g, g.constant(feats), g.constant(w),
                                      g.constant(Tensor({4}, 0.0)));
    const Tensor& raw = g.value(ms.raw);
    for (std::size_t nt = 0; nt < 4; ++nt)
      for (std::size_t p = 0; p < 6; ++p) CHECK(raw[(nt * 4 + 1) * 6 + p] == feats[(nt * 3 + 2) * 6 + p]);
  }
  SUBCASE("loop oracle") {
    const Tensor w = random_tensor({3, 4}, rng);
    const Tensor b = random_tensor({4}, rng);
    Graph g;
    auto ms = generate_category_masks(g, g.constant(feats), g.constant(w), g.constant(b));
    const Tensor& raw = g.value(ms.raw);
    const Tensor& act = g.value(ms.activated);
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t t = 0; t < 2; ++t)
        for (std::size_t m = 0; m < 4; ++m)
          for (std::size_t h = 0; h < 2; ++h)
            for (std::size_t x = 0; x < 3; ++x) {
              double v = b[m];
              for (std::size_t c = 0; c < 3; ++c) v += feats[(((n * 2 + t) * 3 + c) * 2 + h) * 3 + x] * w[c * 4 + m];
              const std::size_t i = (((n * 2 + t) * 4 + m) * 2 + h) * 3 + x;
              CHECK(std::abs(raw[i] - v) < 1e-10);
              CHECK(std::abs(act[i] - 1.0 / (1.0 + std::exp(-v))) < 1e-12);
            }
  }
}

TEST_CASE("bridge logits average raw masks") {
  Rng rng(2);
  const Tensor raw = random_tensor({2, 3, 4, 2, 2}, rng);
  Graph g;
  MaskSet ms{g.constant(raw), g.constant(raw)};
  const Tensor logits = g.value(bridge_logits(g, ms));
  CHECK(logits.shape == Shape{2, 4});
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t m = 0; m < 4; ++m) {
      double s = 0.0;
      for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t p = 0; p < 4; ++p) s += raw[((n * 3 + t) * 4 + m) * 4 + p];
      CHECK(std::abs(logits[n * 4 + m] - s / 12.0) < 1e-12);
    }

  Tensor constant({1, 1, 3, 2, 2}, 0.0);
  for (std::size_t p = 0; p < 4; ++p) constant[2 * 4 + p] = 1.75;
  Graph h;
  MaskSet cs{h.constant(constant), h.constant(constant)};
  CHECK(h.value(bridge_logits(h, cs)).values == std::vector<double>{0.0, 0.0, 1.75});
}

TEST_CASE("mask selection matches index-set enumeration") {
  Rng rng(3);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t m = 2 + rng.below(7), n = 1 + rng.below(3);
    const Csm csm = random_csm(m, rng);
    Tensor act({n, 2, m, 2, 2});
    for (double& v : act.values) v = rng.uniform();
    std::vector<int> pred(n);
    for (int& p : pred) p = static_cast<int>(rng.below(m));
    Graph g;
    MaskSet ms{g.constant(act), g.constant(act)};
    const Tensor out = g.value(combine_masks_for_prediction(g, ms, pred, csm));
    REQUIRE(out.shape == Shape{n, 2, 1, 2, 2});
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::size_t> set;
      for (std::size_t j = 0; j < m; ++j)
        if (csm.c(j, static_cast<std::size_t>(pred[i]))) set.push_back(j);
      for (std::size_t t = 0; t < 2; ++t)
        for (std::size_t p = 0; p < 4; ++p) {
          double s = 0.0;
          for (std::size_t j : set) s += act[((i * 2 + t) * m + j) * 4 + p];
          CHECK(std::abs(out[(i * 2 + t) * 4 + p] - s / static_cast<double>(set.size())) < 1e-12);
        }
    }
  }
}

TEST_CASE("mask selection special cases") {
  Rng rng(4);
  Tensor act({2, 1, 4, 2, 2});
  for (double& v : act.values) v = rng.uniform();
  const std::vector<int> pred{3, 1};
  auto own = [&](std::size_t i, std::size_t cls, std::size_t p) { return act[(i * 4 + cls) * 4 + p]; };

  SUBCASE("identity csm yields the own mask exactly") {
    Graph g;
    MaskSet ms{g.constant(act), g.constant(act)};
    const Tensor out = g.value(combine_masks_for_prediction(g, ms, pred, identity_csm(4)));
    for (std::size_t p = 0; p < 4; ++p) {
      CHECK(out[p] == own(0, 3, p));
      CHECK(out[4 + p] == own(1, 1, p));
    }
  }
  SUBCASE("one partner averages two masks") {
    Tensor s({4, 4}, 0.0);
    for (std::size_t i = 0; i < 4; ++i) s[i * 5] = 1.0;
    s[1 * 4 + 2] = s[2 * 4 + 1] = 0.9;
    Graph g;
    MaskSet ms{g.constant(act), g.constant(act)};
    const Tensor out = g.value(combine_masks_for_prediction(g, ms, pred, binarize(s, 0.5)));
    for (std::size_t p = 0; p < 4; ++p) {
      CHECK(out[4 + p] == doctest::Approx(0.5 * (own(1, 1, p) + own(1, 2, p))).epsilon(1e-14));
    }
  }
  SUBCASE("soft and simple modes") {
    Csm soft = random_csm(4, rng, CsmMode::kSoft);
    const Tensor ws = selection_weights(soft, pred);
    for (std::size_t j = 0; j < 4; ++j) CHECK(ws[j] == soft.s(j, 3));
    Csm simple = soft;
    simple.mode = CsmMode::kSimple;
    const Tensor w1 = selection_weights(simple, pred);
    CHECK(w1.values == std::vector<double>{0, 0, 0, 1, 0, 1, 0, 0});
  }
  SUBCASE("errors") {
    Graph g;
    MaskSet ms{g.constant(act), g.constant(act)};
    const std::vector<int> bad{4, 0};
    CHECK(code_of([&] { combine_masks_for_prediction(g, ms, bad, identity_csm(4)); }) ==
          ErrorCode::kLabelRange);
    const std::vector<int> short_pred{0};
    CHECK(code_of([&] { combine_masks_for_prediction(g, ms, short_pred, identity_csm(4)); }) ==
          ErrorCode::kShape);
    CHECK(code_of([&] { combine_masks_for_prediction(g, ms, pred, identity_csm(5)); }) ==
          ErrorCode::kShape);
  }
}

TEST_CASE("weight similarity matrix") {
  // Orthonormal columns of a 4x3 matrix.
  Tensor w({4, 3}, 0.0);
  w[0 * 3 + 0] = 1.0;
  w[1 * 3 + 1] = 1.0;
  w[3 * 3 + 2] = 1.0;
  const Tensor s = weight_similarity_matrix(w);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(s[i * 3 + j] == doctest::Approx(i == j ? 1.0 : 0.5));
  const Tensor sq = weight_similarity_matrix(w, WeightSimilarity::kSquaredCosine);
  CHECK(sq[1] == doctest::Approx(0.0));
  CHECK(sq[4] == doctest::Approx(1.0));
  CHECK(code_of([] { weight_similarity_matrix(Tensor({3})); }) == ErrorCode::kShape);
  CHECK(parse_weight_similarity(weight_similarity_name(WeightSimilarity::kSquaredCosine)) ==
        WeightSimilarity::kSquaredCosine);
}

TEST_CASE("category regularizer") {
  Tensor s({3, 3}, 0.0);
  for (std::size_t i = 0; i < 3; ++i) s[i * 4] = 1.0;
  s[0 * 3 + 2] = s[2 * 3 + 0] = 0.8;
  const Csm one_pair = binarize(s, 0.5);

  SUBCASE("equal columns give one") {
    Tensor w({2, 3}, {0.3, 0.1, 0.3, -0.7, 0.5, -0.7});
    Graph g;
    CHECK(g.value(category_regularizer(g, g.constant(w), one_pair))[0] == doctest::Approx(1.0));
    CHECK(mean_confusing_weight_similarity(w, one_pair) == doctest::Approx(1.0));
  }
  SUBCASE("orthogonal columns give one half") {
    Tensor w({2, 3}, {1.0, 0.4, 0.0, 0.0, 0.2, 2.0});
    Graph g;
    CHECK(g.value(category_regularizer(g, g.constant(w), one_pair))[0] == doctest::Approx(0.5));
  }
  SUBCASE("no confusing pairs gives zero with zero gradient") {
    Rng rng(5);
    Parameter w("w", random_tensor({4, 3}, rng));
    Graph g;
    Var r = category_regularizer(g, g.parameter(w), identity_csm(3));
    CHECK(g.value(r)[0] == 0.0);
    g.backward(r);
    for (double v : w.grad) CHECK(v == 0.0);
    CHECK(mean_confusing_weight_similarity(w.value, identity_csm(3)) == 0.0);
  }
  SUBCASE("loop oracle and gradient check on random cases") {
    Rng rng(6);
    for (int rep = 0; rep < 10; ++rep) {
      const std::size_t m = 3 + rng.below(5), c = 2 + rng.below(6);
      const Csm csm = random_csm(m, rng);
      for (WeightSimilarity kind : {WeightSimilarity::kHalfCosine, WeightSimilarity::kSquaredCosine}) {
        Parameter w("w", random_tensor({c, m}, rng));
        double total = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < m; ++j) {
            if (i == j || !csm.c(i, j)) continue;
            double ab = 0, aa = 0, bb = 0;
            for (std::size_t r = 0; r < c; ++r) {
              ab += w.value[r * m + i] * w.value[r * m + j];
              aa += w.value[r * m + i] * w.value[r * m + i];
              bb += w.value[r * m + j] * w.value[r * m + j];
            }
            const double cos = ab / std::sqrt(aa * bb);
            total += kind == WeightSimilarity::kHalfCosine ? 0.5 * (1.0 + cos) : cos * cos;
            ++count;
          }
        const double expected = count ? total / static_cast<double>(count) : 0.0;
        Graph g;
        CHECK(std::abs(g.value(category_regularizer(g, g.parameter(w), csm, kind))[0] - expected) <
              1e-12);
        Parameter* ps[] = {&w};
        const auto res = check_gradients(
            [&](Graph& gr) { return category_regularizer(gr, gr.parameter(w), csm, kind); }, ps,
            1e-4);
        CHECK(res.max_relative_error < 1e-4);
      }
    }
  }
}
