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


// Command-line front end over the C interface of libu2s.
//
// Exit status: 0 success, 1 runtime failure, 2 bad usage, 3 invalid config.
// Failures print one line to stderr:
//   error status=<code> name=<name> message="<text>"

#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "u2s/u2s.h"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitValidation = 3;

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

int report_failure(int status) {
  std::fprintf(stderr, "error status=%d name=%s message=%s\n", status, u2s_status_name(status),
               quoted(u2s_last_error()).c_str());
  return status == U2S_ERR_VALIDATION ? kExitValidation : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"U2S confusable-class classifier: staged training, evaluation and figures", "u2s"};
  app.set_version_flag("--version", std::string(u2s_version()));
  app.require_subcommand(1);

  std::string config_path;
  std::string checkpoint;
  std::string baseline;
  std::string stage = "all";
  bool force = false;

  auto add = [&](const char* name, const char* help, bool uses_checkpoint) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", config_path, "Run configuration (TOML)")
        ->required()
        ->check(CLI::ExistingFile);
    if (uses_checkpoint) {
      sub->add_option("--checkpoint", checkpoint, "Input checkpoint (default: from the run dir)");
      sub->add_flag("--force", force, "Load checkpoints written under a different config");
    }
    return sub;
  };

  add("gen-data", "Write the synthetic train/test split as CSV", false);
  CLI::App* train = add("train", "Train one stage, or all three in order", true);
  train->add_option("--stage", stage, "universal | mask_and_specific | joint | all")
      ->check(CLI::IsMember({"universal", "mask_and_specific", "joint", "all"}));
  add("build-csm", "Compute the category similarity matrix from a stage-1 checkpoint", true);
  add("eval", "Evaluate a checkpoint on the test split", true);
  CLI::App* fusion = add("ablate-fusion", "Top-1/top-5 of every head combination", true);
  fusion->add_option("--baseline", baseline, "One-pass checkpoint (default: sibling universal.bin)");
  add("ablate-reg", "Retrain stages 2-3 with and without the category regularizer", true);
  add("sweep-n", "Retrain stages 2-3 for each configured target degree", true);
  CLI::App* figures = add("export-figures", "Scatter, weight-similarity and mask exports", true);
  figures->add_option("--baseline", baseline, "One-pass checkpoint (default: sibling universal.bin)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  u2s_run* run = nullptr;
  if (int rc = u2s_run_open(config_path.c_str(), &run); rc != U2S_OK) return report_failure(rc);
  if (!checkpoint.empty()) u2s_run_set_checkpoint(run, checkpoint.c_str());
  if (!baseline.empty()) u2s_run_set_baseline(run, baseline.c_str());
  u2s_run_set_force(run, force ? 1 : 0);

  const std::string name = app.get_subcommands().front()->get_name();
  int rc = U2S_OK;
  if (name == "gen-data") rc = u2s_gen_data(run);
  else if (name == "train") rc = u2s_train(run, stage.c_str());
  else if (name == "build-csm") rc = u2s_build_csm(run);
  else if (name == "eval") rc = u2s_eval(run);
  else if (name == "ablate-fusion") rc = u2s_ablate_fusion(run);
  else if (name == "ablate-reg") rc = u2s_ablate_reg(run);
  else if (name == "sweep-n") rc = u2s_sweep_n(run);
  else if (name == "export-figures") rc = u2s_export_figures(run);

  if (rc == U2S_OK) std::printf("%s\n", u2s_run_report(run));
  u2s_run_close(run);
  return rc == U2S_OK ? 0 : report_failure(rc);
}
