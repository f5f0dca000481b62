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

#include <algorithm>
#include <cmath>

#include "u2s/csm.hpp"
#include "u2s/error.hpp"
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

struct WarningCapture {
  std::vector<std::string> lines;
  WarningCapture() {
    set_warning_sink([this](std::string_view s) { lines.emplace_back(s); });
  }
  ~WarningCapture() { set_warning_sink(nullptr); }
};

Tensor random_symmetric(std::size_t m, Rng& rng) {
  Tensor s({m, m});
  for (std::size_t i = 0; i < m; ++i) {
    s[i * m + i] = 1.0;
    for (std::size_t j = i + 1; j < m; ++j) s[i * m + j] = s[j * m + i] = rng.uniform();
  }
  return s;
}

SparsitySignature sig(std::vector<double> v) {
  SparsitySignature s;
  s.per_channel = std::move(v);
  return s;
}

}  // namespace

TEST_CASE("channel sparsity counts nonzero responses") {
  // T=1, C=3, H=2, W=2: zero channel, positive channel, half-positive channel.
  Tensor f({1, 3, 2, 2}, {0, 0, 0, 0, 1, 2, 3, 4, 5, 0, -1, 6});
  CHECK(channel_sparsity(f) == std::vector<double>{1.0, 0.0, 0.5});

  Tensor batch({2, 1, 3, 2, 2});
  std::copy(f.values.begin(), f.values.end(), batch.values.begin() + 12);
  CHECK(channel_sparsity(batch, std::size_t{1}) == std::vector<double>{1.0, 0.0, 0.5});
  CHECK(channel_sparsity(batch, std::size_t{0}) == std::vector<double>{1.0, 1.0, 1.0});
  // Responses at or below the threshold count as zero.
  CHECK(channel_sparsity(Tensor({1, 1, 1, 2}, {1e-7, 1.0}))[0] == 0.5);
  CHECK(code_of([] { channel_sparsity(Tensor({2, 2})); }) == ErrorCode::kShape);
}

TEST_CASE("category signatures average per-sample sparsity") {
  const std::vector<std::vector<double>> one{{0.1, 0.2}, {0.3, 0.4}};
  const std::vector<int> l01{0, 1};
  auto s = category_signatures(one, l01, 2);
  CHECK(s[0].per_channel == one[0]);
  CHECK(s[1].per_channel == one[1]);
  CHECK(s[1].category == 1);
  CHECK(s[1].support_count == 1);

  const std::vector<std::vector<double>> twin{{0.25, 0.75}, {0.25, 0.75}};
  const std::vector<int> l00{0, 0};
  CHECK(category_signatures(twin, l00, 1)[0].per_channel == twin[0]);

  Rng rng(8);
  std::vector<std::vector<double>> per(13, std::vector<double>(5));
  std::vector<int> labels(13);
  for (std::size_t i = 0; i < 13; ++i) {
    labels[i] = static_cast<int>(i % 3);
    for (double& v : per[i]) v = rng.uniform();
  }
  auto got = category_signatures(per, labels, 3);
  for (int k = 0; k < 3; ++k) {
    for (std::size_t c = 0; c < 5; ++c) {
      double sum = 0.0, n = 0.0;
      for (std::size_t i = 0; i < 13; ++i) {
        if (labels[i] == k) {
          sum += per[i][c];
          n += 1.0;
        }
      }
      CHECK(std::abs(got[k].per_channel[c] - sum / n) < 1e-15);
    }
  }

  const std::vector<int> bad{0, 5};
  CHECK(code_of([&] { category_signatures(one, bad, 2); }) == ErrorCode::kLabelRange);
  CHECK(code_of([&] { category_signatures(one, l01, 3); }) == ErrorCode::kEmptyInput);
}

TEST_CASE("similarity matrix") {
  SUBCASE("identical and orthogonal supports") {
    const std::vector<SparsitySignature> s{sig({1, 0}), sig({0, 1}), sig({1, 0})};
    const Tensor m = similarity_matrix(s);
    CHECK(m[0 * 3 + 2] == doctest::Approx(1.0));
    CHECK(m[0 * 3 + 1] == 0.0);
    for (std::size_t i = 0; i < 3; ++i) CHECK(m[i * 3 + i] == 1.0);
  }
  SUBCASE("brute-force double loop") {
    Rng rng(21);
    std::vector<SparsitySignature> s;
    for (int k = 0; k < 4; ++k) {
      std::vector<double> v(6);
      for (double& x : v) x = rng.uniform();
      s.push_back(sig(v));
    }
    for (DistanceKind kind : {DistanceKind::kCosine, DistanceKind::kNormalizedEuclidean}) {
      const Tensor got = similarity_matrix(s, kind);
      for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
          double ab = 0, aa = 0, bb = 0, d2 = 0;
          for (std::size_t c = 0; c < 6; ++c) {
            const double a = s[i].per_channel[c], b = s[j].per_channel[c];
            ab += a * b;
            aa += a * a;
            bb += b * b;
            d2 += (a - b) * (a - b);
          }
          const double expected = kind == DistanceKind::kCosine ? ab / std::sqrt(aa * bb)
                                                                : 1.0 - std::sqrt(d2 / 6.0);
          CHECK(std::abs(got[i * 4 + j] - (i == j ? 1.0 : expected)) < 1e-12);
          CHECK(got[i * 4 + j] == got[j * 4 + i]);
        }
      }
    }
  }
  SUBCASE("zero-norm signature warns and gets zero similarity") {
    WarningCapture cap;
    const std::vector<SparsitySignature> s{sig({0, 0}), sig({1, 1})};
    const Tensor m = similarity_matrix(s);
    CHECK(m[1] == 0.0);
    CHECK(m[0] == 1.0);
    REQUIRE(cap.lines.size() == 1);
    CHECK(cap.lines[0].find("zero norm") != std::string::npos);
  }
  SUBCASE("errors") {
    const std::vector<SparsitySignature> ragged{sig({1, 0}), sig({1})};
    CHECK(code_of([&] { similarity_matrix(ragged); }) == ErrorCode::kShape);
    CHECK(code_of([] { similarity_matrix({}); }) == ErrorCode::kEmptyInput);
  }
}

TEST_CASE("binarize") {
  Tensor s({3, 3}, {1.0, 0.7, 0.2, 0.7, 1.0, 0.4, 0.2, 0.4, 1.0});
  const Csm c = binarize(s, 0.4);
  CHECK(c.binary == std::vector<std::uint8_t>{1, 1, 0, 1, 1, 1, 0, 1, 1});
  CHECK(c.mean_degree() == doctest::Approx(4.0 / 3.0));
  c.validate();
  Csm broken = c;
  broken.binary[2] = 1;
  CHECK(code_of([&] { broken.validate(); }) == ErrorCode::kValidation);
  broken = c;
  broken.similarity[1] = 0.3;
  CHECK(code_of([&] { broken.validate(); }) == ErrorCode::kValidation);
  CHECK(code_of([] { binarize(Tensor({2, 3}), 0.5); }) == ErrorCode::kShape);
}

TEST_CASE("binarize_with_target_degree") {
  SUBCASE("one clear pair") {
    Tensor s({4, 4}, 0.1);
    for (std::size_t i = 0; i < 4; ++i) s[i * 4 + i] = 1.0;
    s[0 * 4 + 3] = s[3 * 4 + 0] = 0.9;
    const Csm c = binarize_with_target_degree(s, 1.0);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        CHECK(c.c(i, j) == (i == j || (i == 0 && j == 3) || (i == 3 && j == 0)));
  }
  SUBCASE("maximal degree keeps everything") {
    Rng rng(4);
    Tensor s = random_symmetric(5, rng);
    const Csm c = binarize_with_target_degree(s, 4.0);
    double min_off = 1.0;
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j)
        if (i != j) min_off = std::min(min_off, s[i * 5 + j]);
    CHECK(c.alpha <= min_off);
    for (auto b : c.binary) CHECK(b == 1);
  }
  SUBCASE("sort-and-scan oracle") {
    Rng rng(99);
    for (int rep = 0; rep < 20; ++rep) {
      const Tensor s = random_symmetric(8, rng);
      std::vector<double> off;
      for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 8; ++j)
          if (i != j) off.push_back(s[i * 8 + j]);
      std::sort(off.begin(), off.end());
      double expected = -1.0;
      for (std::size_t k = 0; k < off.size(); ++k) {
        // entries >= off[k] are those from the first occurrence of off[k] onward
        const std::size_t first = static_cast<std::size_t>(
            std::lower_bound(off.begin(), off.end(), off[k]) - off.begin());
        if (static_cast<double>(off.size() - first) / 8.0 <= 3.0) {
          expected = off[k];
          break;
        }
      }
      const Csm c = binarize_with_target_degree(s, 3.0);
      CHECK(c.alpha == expected);
      CHECK(c.mean_degree() <= 3.0);
    }
  }
  SUBCASE("degenerate all-equal similarity") {
    WarningCapture cap;
    Tensor s({3, 3}, 1.0);
    const Csm c = binarize_with_target_degree(s, 1.0);
    CHECK(c.alpha == 1.0);
    CHECK(c.mean_degree() == 2.0);
    CHECK_FALSE(cap.lines.empty());
  }
  SUBCASE("invalid target") {
    Tensor s({3, 3}, 0.5);
    CHECK(code_of([&] { binarize_with_target_degree(s, 0.5); }) == ErrorCode::kInvalidArgument);
    CHECK(code_of([&] { binarize_with_target_degree(s, 3.0); }) == ErrorCode::kInvalidArgument);
  }
}

TEST_CASE("interclass similarity vector") {
  SUBCASE("two classes") {
    WarningCapture cap;
    const auto v = interclass_similarity_vector(Tensor({2, 2}, {1.0, 0.3, 0.3, 1.0}));
    CHECK(v == std::vector<double>{0.0, 0.0});
    CHECK(cap.lines.size() == 1);
  }
  SUBCASE("identity gives the constant case") {
    WarningCapture cap;
    Tensor id({3, 3}, 0.0);
    for (std::size_t i = 0; i < 3; ++i) id[i * 4] = 1.0;
    CHECK(interclass_similarity_vector(id) == std::vector<double>(3, 0.0));
  }
  SUBCASE("random symmetric") {
    Rng rng(5);
    const Tensor s = random_symmetric(5, rng);
    std::vector<double> sums(5, 0.0);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j)
        if (i != j) sums[i] += s[i * 5 + j];
    const double lo = *std::min_element(sums.begin(), sums.end());
    const double hi = *std::max_element(sums.begin(), sums.end());
    const auto v = interclass_similarity_vector(s);
    for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(v[i] - (sums[i] - lo) / (hi - lo)) < 1e-12);
  }
}

TEST_CASE("csm json round trip and mode names") {
  Rng rng(6);
  Csm c = binarize_with_target_degree(random_symmetric(4, rng), 1.0, CsmMode::kSoft);
  c.class_names = {"a", "b", "c", "d"};
  const Csm back = csm_from_json(csm_to_json(c));
  CHECK(back == c);
  CHECK(csm_to_json(back) == csm_to_json(c));
  CHECK(code_of([] { csm_from_json("{\"alpha\": 1}"); }) == ErrorCode::kIo);
  CHECK(code_of([] { csm_from_json("not json"); }) == ErrorCode::kIo);
  for (CsmMode m : {CsmMode::kBinary, CsmMode::kSoft, CsmMode::kSimple}) {
    CHECK(parse_csm_mode(csm_mode_name(m)) == m);
  }
  CHECK(code_of([] { parse_csm_mode("fuzzy"); }) == ErrorCode::kValidation);
  CHECK(parse_distance_kind(distance_kind_name(DistanceKind::kNormalizedEuclidean)) ==
        DistanceKind::kNormalizedEuclidean);
}
