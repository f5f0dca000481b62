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
#include <numeric>

#include "u2s/analysis.hpp"
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

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

const std::vector<std::string> kNames{"c", "a", "d", "b"};

Tensor fixture_similarity() {
  return Tensor({4, 4}, {1.0, 0.8, 0.8, 0.1,
                         0.8, 1.0, 1.0, 0.3,
                         0.8, 1.0, 1.0, 0.3,
                         0.1, 0.3, 0.3, 1.0});
}

}  // namespace

TEST_CASE("pearson correlation") {
  const std::vector<double> x{1, 2, 3, 4}, y{2, 4, 6, 8}, z{4, 3, 2, 1}, flat{5, 5, 5, 5};
  CHECK(pearson_correlation(x, y) == doctest::Approx(1.0));
  CHECK(pearson_correlation(x, z) == doctest::Approx(-1.0));
  CHECK(pearson_correlation(x, flat) == 0.0);
  const std::vector<double> a{1.0, 2.0, 4.0, 7.0, 3.0}, b{0.5, 0.1, 0.9, 0.2, 0.4};
  double ma = 17.0 / 5.0, mb = 2.1 / 5.0, sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  CHECK(std::abs(pearson_correlation(a, b) - sab / std::sqrt(saa * sbb)) < 1e-12);
  const std::vector<double> one{1.0};
  CHECK(code_of([&] { pearson_correlation(one, one); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { pearson_correlation(x, one); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("scatter records and exports") {
  const std::vector<double> acc{0.9, 0.5, 0.5, 1.0};
  const auto rec = scatter_records("universal", fixture_similarity(), acc, kNames);
  REQUIRE(rec.size() == 4);
  // Classes 1 and 2 are duplicates, so their similarity entries agree.
  CHECK(rec[1].similarity == rec[2].similarity);
  CHECK(rec[1].similarity == 1.0);
  CHECK(rec[3].similarity == 0.0);
  CHECK(rec[0].class_name == "c");
  CHECK(rec[3].accuracy == 1.0);
  const std::string csv = scatter_csv(rec);
  CHECK(csv.rfind("source,class,name,similarity,accuracy\n", 0) == 0);
  CHECK(count_lines(csv) == 5);
  const std::string svg = scatter_svg(rec, "scatter");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg == scatter_svg(rec, "scatter"));
  const std::vector<double> short_acc{0.5};
  CHECK(code_of([&] { scatter_records("u2s", fixture_similarity(), short_acc, kNames); }) ==
        ErrorCode::kShape);
}

TEST_CASE("histograms") {
  Rng rng(3);
  std::vector<double> values(64);
  for (double& v : values) v = rng.uniform();
  values[0] = 1.0;
  values[1] = 0.0;
  values[2] = 1.5;
  values[3] = -0.2;
  const Histogram h = make_histogram(values, 20);
  CHECK(h.counts.size() == 20);
  CHECK(std::accumulate(h.counts.begin(), h.counts.end(), std::size_t{0}) == 64);
  const Histogram edges = make_histogram(std::vector<double>{0.0, 0.5, 1.0}, 2);
  CHECK(edges.counts == std::vector<std::size_t>{1, 2});
  const std::string csv = histogram_csv(h);
  CHECK(csv.rfind("lo,hi,count\n", 0) == 0);
  CHECK(count_lines(csv) == 21);
  CHECK(histogram_svg(h, "hist") == histogram_svg(h, "hist"));
  CHECK(code_of([&] { make_histogram(values, 0); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { make_histogram(values, 4, 1.0, 1.0); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("name-ordered matrix exports") {
  const auto order = name_order(kNames);
  CHECK(order == std::vector<std::size_t>{1, 3, 0, 2});
  const std::string csv = matrix_csv(fixture_similarity(), kNames, order);
  CHECK(count_lines(csv) == 5);
  CHECK(csv.rfind("name,a,b,c,d\na,", 0) == 0);
  CHECK(matrix_svg(fixture_similarity(), kNames, order, "S") ==
        matrix_svg(fixture_similarity(), kNames, order, "S"));
  const std::vector<std::string> three{"a", "b", "c"};
  CHECK(code_of([&] { matrix_csv(fixture_similarity(), three, order); }) == ErrorCode::kShape);
}

TEST_CASE("mask heatmaps") {
  ModelConfig mc;
  mc.num_classes = 4;
  mc.seed = 9;
  U2sModel model(mc);
  for (double& w : model.mask_head.weight().value.values) w = 0.0;
  for (double& b : model.mask_head.bias().value.values) b = 0.0;
  DatasetSpec ds;
  ds.num_classes = 4;
  ds.confusable_pairs = {{0, 1}};
  ds.pair_contrast.clear();
  ds.train_per_class = 2;
  ds.test_per_class = 2;
  const auto data = generate_confusable_dataset(ds);
  const Csm csm = binarize(fixture_similarity(), 0.5);
  const std::vector<std::size_t> samples{0, 3, 5};
  const std::vector<int> classes{0, 2};
  const auto rec = mask_heatmaps(model, data.test, samples, classes, csm);
  REQUIRE(rec.size() == samples.size() * (classes.size() + 1));
  CHECK(rec[2].category == -1);
  CHECK(rec[3].sample == 3);
  for (const auto& r : rec) {
    CHECK(r.rows == 4);
    CHECK(r.cols == 4);
    for (double v : r.values) CHECK(v == 0.5);
  }
  CHECK(count_lines(heatmap_csv(rec[0])) == 4);
  const std::vector<std::string> names{"a", "b", "c", "d"};
  CHECK(heatmap_svg(rec, names) == heatmap_svg(rec, names));

  const std::vector<int> bad_class{4};
  CHECK(code_of([&] { mask_heatmaps(model, data.test, samples, bad_class, csm); }) ==
        ErrorCode::kInvalidArgument);
  const std::vector<std::size_t> bad_sample{99};
  CHECK(code_of([&] { mask_heatmaps(model, data.test, bad_sample, classes, csm); }) ==
        ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { mask_heatmaps(model, data.test, samples, classes, csm, 2); }) ==
        ErrorCode::kInvalidArgument);
}

TEST_CASE("sweep table") {
  const std::vector<SweepRow> one{{1.0, 0.8, 1.0, 0.9, 1.0}};
  const std::string csv = sweep_csv(one);
  CHECK(csv.rfind("target_degree,alpha,mean_degree,top1,top5\n", 0) == 0);
  CHECK(count_lines(csv) == 2);
  const std::vector<SweepRow> rows{{1.0, 0.8, 1.0, 0.9, 1.0}, {2.0, 0.6, 2.0, 0.85, 0.99}};
  CHECK(sweep_svg(rows) == sweep_svg(rows));
  CHECK(sweep_svg(rows).find("</svg>") != std::string::npos);
}
