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

#include <cstdlib>
#include <filesystem>

#include "u2s/config.hpp"
#include "u2s/error.hpp"
#include "u2s/format.hpp"
#include "u2s/random.hpp"

using namespace u2s;

namespace {

ErrorCode parse_code(std::string_view text) {
  try {
    parse_run_config(text);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode{0};
}

std::string parse_message(std::string_view text) {
  try {
    parse_run_config(text);
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

struct SeedEnv {
  explicit SeedEnv(const char* value) { ::setenv("U2S_SEED", value, 1); }
  ~SeedEnv() { ::unsetenv("U2S_SEED"); }
};

}  // namespace

TEST_CASE("defaults describe the desk-scale run") {
  const RunConfig c = default_run_config();
  c.validate();
  CHECK(c.dataset.num_classes == 8);
  CHECK(c.dataset.confusable_pairs.size() == 4);
  CHECK(c.model.num_classes == 8);
  CHECK(c.run_dir() == std::filesystem::path("runs") / "run");
  CHECK(c.resolved_class_names().front() == "class_0");
  CHECK(parse_run_config("").fingerprint() == c.fingerprint());
}

TEST_CASE("parsing reads every section") {
  const RunConfig c = parse_run_config(R"(
[run]
name = "demo"
output_dir = "out"
seed = 7
[data]
num_classes = 4
confusable_pairs = [[0, 1]]
train_per_class = 12
class_names = ["w", "x", "y", "z"]
[model]
embed_channels = 6
[train]
lr_universal = 0.05
fusion = ["universal", "specific"]
fusion_kind = "logits"
[csm]
target_degree = 2
mode = "soft"
[analysis]
sweep_degrees = [1, 2]
)");
  CHECK(c.name == "demo");
  CHECK(c.run_dir() == std::filesystem::path("out") / "demo");
  CHECK(c.seed == 7);
  CHECK(c.model.seed == 7);
  CHECK(c.dataset.seed == derive_seed(7, 0xDA7A));
  CHECK(c.dataset.num_classes == 4);
  CHECK(c.model.num_classes == 4);
  CHECK(c.dataset.pair_contrast.empty());
  CHECK(c.model.embed_channels == 6);
  CHECK(c.train.lr_universal == 0.05);
  CHECK(c.train.fusion_set == (kUniversalHeadOut | kSpecificHeadOut));
  CHECK(c.train.fusion == FusionKind::kLogits);
  CHECK(c.train.target_degree == 2.0);
  CHECK(c.train.csm_mode == CsmMode::kSoft);
  CHECK(c.analysis.sweep_degrees == std::vector<double>{1.0, 2.0});
  CHECK(c.resolved_class_names()[3] == "z");
}

TEST_CASE("invalid configs are rejected with a config error") {
  CHECK(parse_code("[runs]\nname = \"x\"\n") == ErrorCode::kValidation);
  CHECK(parse_message("[train]\nlearning_rate = 0.1\n").find("learning_rate") != std::string::npos);
  CHECK(parse_code("[train]\nlr_universal = \"fast\"\n") == ErrorCode::kValidation);
  CHECK(parse_code("[train]\nlr_universal = -1.0\n") == ErrorCode::kValidation);
  CHECK(parse_code("[train\n") == ErrorCode::kValidation);
  CHECK(parse_code("[data]\nsource = \"video\"\n") == ErrorCode::kValidation);
  CHECK(parse_code("[data]\nsource = \"csv\"\n") == ErrorCode::kValidation);
  CHECK(parse_code("[data]\nconfusable_pairs = [[0, 1], [1, 2]]\n") == ErrorCode::kValidation);
  CHECK(parse_code("[csm]\ntarget_degree = 8\n") == ErrorCode::kValidation);
  CHECK(parse_code("[csm]\nmode = \"fuzzy\"\n") == ErrorCode::kValidation);
  CHECK(parse_code("[analysis]\nsweep_degrees = [0.5]\n") == ErrorCode::kValidation);
  CHECK(parse_code("[analysis]\nscatter_sources = [\"both\"]\n") == ErrorCode::kValidation);
  CHECK(parse_code("[train]\nfusion = []\n") == ErrorCode::kValidation);
  CHECK(parse_code("[model]\nframes = 9\n") == ErrorCode::kValidation);
  CHECK(parse_code("[data]\nclass_names = [\"a\"]\n") == ErrorCode::kValidation);
  CHECK(parse_code("[run]\nname = \"a/b\"\n") == ErrorCode::kValidation);
  CHECK(parse_code("[run]\nseed = -3\n") == ErrorCode::kValidation);
  CHECK(parse_code("run = 3\n") == ErrorCode::kValidation);
}

TEST_CASE("csv sources resolve relative paths") {
  const RunConfig c = parse_run_config(
      "[data]\nsource = \"csv\"\ntrain_csv = \"d/train.csv\"\ntest_csv = \"/abs/test.csv\"\n",
      "/base");
  CHECK_FALSE(c.synthetic);
  CHECK(c.train_csv == std::filesystem::path("/base/d/train.csv"));
  CHECK(c.test_csv == std::filesystem::path("/abs/test.csv"));
  CHECK(parse_code("[data]\nsource = \"csv\"\ntrain_csv = \"a\"\ntest_csv = \"b\"\nnoise_scale = 1.0\n") ==
        ErrorCode::kValidation);
}

TEST_CASE("toml rendering round trips") {
  RunConfig c = parse_run_config("[run]\nseed = 3\n[train]\nlambda = 0.25\n[csm]\nmode = \"simple\"\n");
  const std::string text = run_config_to_toml(c);
  const RunConfig back = parse_run_config(text);
  CHECK(back.canonical() == c.canonical());
  CHECK(run_config_to_toml(back) == text);
}

TEST_CASE("fingerprint tracks what shapes a model") {
  const RunConfig base = default_run_config();
  RunConfig renamed = base;
  renamed.class_names = {"a", "b", "c", "d", "e", "f", "g", "h"};
  renamed.name = "other";
  CHECK(renamed.fingerprint() == base.fingerprint());
  RunConfig tuned = base;
  tuned.train.lambda = 0.0;
  CHECK(tuned.fingerprint() != base.fingerprint());
  RunConfig reseeded = base;
  reseeded.set_seed(1);
  CHECK(reseeded.fingerprint() != base.fingerprint());
}

TEST_CASE("the seed environment variable overrides the file") {
  const auto dir = std::filesystem::temp_directory_path() / "u2s_test_config";
  std::filesystem::create_directories(dir);
  const auto path = dir / "run.toml";
  write_text_file(path, "[run]\nseed = 4\n");
  ::unsetenv("U2S_SEED");
  CHECK(load_run_config(path).seed == 4);
  {
    SeedEnv env("11");
    const RunConfig c = load_run_config(path);
    CHECK(c.seed == 11);
    CHECK(c.train.seed == 11);
  }
  {
    SeedEnv env("eleven");
    try {
      load_run_config(path);
      FAIL("expected a validation error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kValidation);
    }
  }
  try {
    load_run_config(dir / "absent.toml");
    FAIL("expected an io error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIo);
  }
  std::filesystem::remove_all(dir);
}
