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
#include <map>

#include "u2s/checkpoint.hpp"
#include "u2s/error.hpp"
#include "u2s/format.hpp"
#include "u2s/pipeline.hpp"

using namespace u2s;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& leaf) {
  const char* env = std::getenv("U2S_TEST_TMP");
  const fs::path root = env ? fs::path(env) : fs::temp_directory_path() / "u2s_tests";
  const fs::path dir = root / ("pipeline_" + leaf);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RunConfig quick_config(const fs::path& out) {
  return parse_run_config("[run]\nname = \"quick\"\noutput_dir = \"" + out.generic_string() +
                          "\"\nseed = 1\n"
                          "[data]\ntrain_per_class = 30\ntest_per_class = 10\n"
                          "[train]\nepochs_universal = 3\nepochs_specific = 2\nepochs_joint = 2\n"
                          "[analysis]\nsweep_degrees = [1, 2]\nmask_samples = 1\n");
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).generic_string()] = read_text_file(e.path());
  }
  return files;
}

void run_everything(const RunConfig& c) {
  run_gen_data(c);
  run_train(c, std::nullopt);
  run_build_csm(c);
  run_eval(c);
  run_ablate_fusion(c);
  run_ablate_reg(c);
  run_sweep_n(c);
  run_export_figures(c);
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

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_CASE("the full command sequence writes every artifact and reruns byte-identically") {
  const fs::path out = scratch("full");
  const RunConfig c = quick_config(out);
  run_everything(c);
  const fs::path run = c.run_dir();
  for (const char* f : {"data/train.csv", "data/test.csv", "data/patches.json",
                        "checkpoints/universal.bin", "checkpoints/mask_and_specific.bin",
                        "checkpoints/joint.bin", "history.jsonl", "csm.json", "eval_joint.json",
                        "fusion_table.csv", "ablate_reg.csv", "sweep_n.csv", "scatter_u2s.csv",
                        "scatter_one_pass.csv", "weights_sim.csv", "weights_hist.csv",
                        "figures/scatter.svg", "figures/weights_sim.svg", "figures/masks.svg",
                        "figures/sweep_n.svg", "masks/0_combined.csv"}) {
    CAPTURE(f);
    CHECK(fs::is_regular_file(run / f));
  }
  const std::string table = read_text_file(run / "fusion_table.csv");
  CHECK(count_lines(table) == 9);
  CHECK(table.find("\none_pass,") != std::string::npos);
  CHECK(table.find("\nuniversal+bridge+specific,") != std::string::npos);
  CHECK(count_lines(read_text_file(run / "sweep_n.csv")) == 3);
  CHECK(count_lines(read_text_file(run / "history.jsonl")) == 3 + 2 + 2);
  CHECK(count_lines(read_text_file(run / "scatter_universal.csv")) == 9);

  const auto first = snapshot(run);
  run_everything(c);
  const auto second = snapshot(run);
  CHECK(first.size() == second.size());
  for (const auto& [name, bytes] : first) {
    CAPTURE(name);
    CHECK(second.count(name) == 1);
    CHECK(second.at(name) == bytes);
  }

  SUBCASE("stage-by-stage training matches training all stages at once") {
    run_train(c, Stage::kUniversalOnly);
    run_train(c, Stage::kMaskAndSpecific);
    run_train(c, Stage::kJoint);
    const auto staged = snapshot(run);
    for (const char* f : {"checkpoints/universal.bin", "checkpoints/joint.bin", "history.jsonl"}) {
      CAPTURE(f);
      CHECK(staged.at(f) == first.at(f));
    }
  }
  SUBCASE("checkpoint errors") {
    CommandOptions missing;
    missing.checkpoint = run / "missing.bin";
    try {
      run_eval(c, missing);
      FAIL("expected an io error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kIo);
      CHECK(std::string(e.what()).find("missing.bin") != std::string::npos);
    }
    CommandOptions universal;
    universal.checkpoint = run / "checkpoints" / "universal.bin";
    CHECK(code_of([&] { run_ablate_fusion(c, universal); }) == ErrorCode::kMissingCsm);
    CHECK(run_eval(c, universal).find("universal top-1") != std::string::npos);
    CHECK(code_of([&] { run_train(c, Stage::kJoint, universal); }) == ErrorCode::kInvalidArgument);

    RunConfig changed = c;
    changed.train.lambda = 0.1;
    CHECK(code_of([&] { run_eval(changed); }) == ErrorCode::kCheckpointFingerprint);
    CommandOptions force;
    force.force = true;
    set_warning_sink([](std::string_view) {});
    CHECK_NOTHROW(run_eval(changed, force));
    set_warning_sink(nullptr);
  }
}

TEST_CASE("csv sources reproduce the synthetic run") {
  const fs::path out = scratch("csv");
  const RunConfig synthetic = quick_config(out);
  run_gen_data(synthetic);
  const fs::path data = synthetic.run_dir() / "data";
  RunConfig csv = synthetic;
  csv.synthetic = false;
  csv.train_csv = data / "train.csv";
  csv.test_csv = data / "test.csv";
  csv.name = "from_csv";
  const DataSplits a = load_data(synthetic);
  const DataSplits b = load_data(csv);
  REQUIRE(a.train.samples.size() == b.train.samples.size());
  for (std::size_t i = 0; i < a.train.samples.size(); ++i) {
    CHECK(a.train.samples[i].frames == b.train.samples[i].frames);
  }
  CHECK(b.patches.empty());
  CHECK(code_of([&] { run_gen_data(csv); }) == ErrorCode::kValidation);
  csv.train.epochs_universal = 1;
  CHECK(run_train(csv, Stage::kUniversalOnly).find("stage universal") != std::string::npos);
}
